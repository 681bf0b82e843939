#pragma once

// JSON experiment configs, run records with content hashes, per-experiment
// runners that write CSV/JSON artifacts, parameter sweeps and report tables.

#include "apsgd/coupling.hpp"
#include "apsgd/delay.hpp"
#include "apsgd/diagnostics.hpp"
#include "apsgd/engine.hpp"
#include "apsgd/live.hpp"
#include "apsgd/oracles.hpp"
#include "apsgd/params.hpp"
#include "apsgd/stats.hpp"
#include "apsgd/tds.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace apsgd {

using Json = nlohmann::json;

enum class ExperimentKind { Params, Run, Classify, Tl2, Escape, Tds };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Params: return "params";
    case ExperimentKind::Run: return "run";
    case ExperimentKind::Classify: return "classify";
    case ExperimentKind::Tl2: return "tl2";
    case ExperimentKind::Escape: return "escape";
    case ExperimentKind::Tds: return "tds";
  }
  return "unknown";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::Params, ExperimentKind::Run, ExperimentKind::Classify, ExperimentKind::Tl2,
                 ExperimentKind::Escape, ExperimentKind::Tds})
    if (to_string(k) == s) return k;
  throw PreconditionError("unknown experiment '" + s + "'");
}

inline const std::vector<std::string>& problem_catalog() {
  static const std::vector<std::string> names = {"quadratic", "saddle2d", "finite_sum"};
  return names;
}

inline const std::vector<std::string>& schedule_catalog() {
  static const std::vector<std::string> names = {"constant", "uniform", "round_robin", "adversarial_max"};
  return names;
}

struct ExperimentConfig {
  BaseConfig base;
  Json problem = {{"name", "saddle2d"}, {"gamma", 1.0}, {"box", 2.0}};
  std::vector<double> start;  // empty: origin
  DelayModel schedule = DelayModel::adversarial_max();
  bool live = false;
  std::int64_t workers = 1;
  std::int64_t trials = 100;
  double iota = 1.0;
  std::uint64_t seed = 0;
  std::int64_t horizon = 100;  // tds table size and decomposition length
  std::string output_dir = "out";
};

// ---------------------------------------------------------------- JSON I/O

inline Json to_json(const BaseConfig& b) {
  Json j = {{"L", b.L}, {"rho", b.rho}, {"ell", b.ell}, {"s", b.s}, {"r", b.r}, {"d", b.d}, {"M", b.M},
            {"T", b.T}, {"K", b.K}, {"epsilon", b.epsilon}, {"w", b.w}, {"u", b.u}, {"B", b.B}};
  j["eta"] = b.eta ? Json(*b.eta) : Json(nullptr);
  return j;
}

namespace experiment_detail {

template <class T>
void read_field(const Json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw PreconditionError(std::string("config field '") + key + "': " + e.what());
  }
}

inline const std::set<std::string>& base_keys() {
  static const std::set<std::string> k = {"L", "rho", "ell", "s", "r", "d", "M", "T", "K", "epsilon", "w", "u", "B", "eta"};
  return k;
}

inline const std::set<std::string>& top_keys() {
  static const std::set<std::string> k = {"base", "problem", "start", "schedule", "mode", "workers", "trials",
                                          "iota", "seed", "horizon", "output_dir"};
  return k;
}

}  // namespace experiment_detail

inline BaseConfig base_from_json(const Json& j) {
  using experiment_detail::read_field;
  require(j.is_object(), "config: base must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    require(experiment_detail::base_keys().count(it.key()) == 1, "config: unknown base field '" + it.key() + "'");
  BaseConfig b;
  read_field(j, "L", b.L);
  read_field(j, "rho", b.rho);
  read_field(j, "ell", b.ell);
  read_field(j, "s", b.s);
  read_field(j, "r", b.r);
  read_field(j, "d", b.d);
  read_field(j, "M", b.M);
  read_field(j, "T", b.T);
  read_field(j, "K", b.K);
  read_field(j, "epsilon", b.epsilon);
  read_field(j, "w", b.w);
  read_field(j, "u", b.u);
  read_field(j, "B", b.B);
  if (j.contains("eta") && !j.at("eta").is_null()) b.eta = j.at("eta").get<double>();
  return b;
}

inline Json to_json(const DelayModel& m) {
  Json j = {{"model", to_string(m.kind)}};
  if (m.kind == DelayModelKind::Constant) j["c"] = m.constant;
  if (m.kind == DelayModelKind::RoundRobin) j["workers"] = m.workers;
  return j;
}

inline DelayModel delay_model_from_json(const Json& j) {
  require(j.is_object() && j.contains("model"), "config: schedule needs a 'model' name");
  DelayModel m;
  m.kind = delay_model_from_string(j.at("model").get<std::string>());
  experiment_detail::read_field(j, "c", m.constant);
  experiment_detail::read_field(j, "workers", m.workers);
  return m;
}

inline Json to_json(const ExperimentConfig& c) {
  Json j = {{"base", to_json(c.base)},   {"problem", c.problem}, {"schedule", to_json(c.schedule)},
            {"mode", c.live ? "live" : "simulated"}, {"workers", c.workers}, {"trials", c.trials},
            {"iota", c.iota},             {"seed", c.seed},       {"horizon", c.horizon},
            {"output_dir", c.output_dir}};
  j["start"] = c.start;
  return j;
}

inline void validate(const ExperimentConfig& c) {
  validate(c.base);
  require(c.problem.is_object() && c.problem.contains("name"), "config: problem needs a 'name'");
  const auto name = c.problem.at("name").get<std::string>();
  bool known = false;
  for (const auto& n : problem_catalog()) known = known || n == name;
  require(known, "config: unknown problem '" + name + "'");
  require(c.workers >= 1, "config: workers must be positive");
  require(c.trials >= 1, "config: trials must be positive");
  require(c.iota > 0, "config: iota must be positive");
  require(c.horizon >= 1, "config: horizon must be positive");
  require(c.start.empty() || static_cast<std::int64_t>(c.start.size()) == c.base.d,
          "config: start must have d entries");
}

inline ExperimentConfig config_from_json(const Json& j) {
  using experiment_detail::read_field;
  require(j.is_object(), "config: top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    require(experiment_detail::top_keys().count(it.key()) == 1, "config: unknown field '" + it.key() + "'");
  ExperimentConfig c;
  if (j.contains("base")) c.base = base_from_json(j.at("base"));
  if (j.contains("problem")) c.problem = j.at("problem");
  if (j.contains("start")) c.start = j.at("start").get<std::vector<double>>();
  if (j.contains("schedule")) c.schedule = delay_model_from_json(j.at("schedule"));
  if (j.contains("mode")) {
    const auto mode = j.at("mode").get<std::string>();
    require(mode == "simulated" || mode == "live", "config: mode must be 'simulated' or 'live'");
    c.live = mode == "live";
  }
  read_field(j, "workers", c.workers);
  read_field(j, "trials", c.trials);
  read_field(j, "iota", c.iota);
  read_field(j, "seed", c.seed);
  read_field(j, "horizon", c.horizon);
  read_field(j, "output_dir", c.output_dir);
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw PreconditionError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline Json to_json(const HyperParams& h) {
  return {{"base", to_json(h.base)}, {"sigma", h.sigma}, {"eta", h.eta}, {"gamma", h.gamma}, {"f", h.f_exp},
          {"T_max", h.T_max}, {"F", h.F}, {"F2", h.F2}, {"q", h.q}, {"S", h.S}, {"c", h.c}, {"b", h.b},
          {"C", h.C}, {"c2", h.c2}, {"p", h.p}, {"curvature_target_exceeds_L", h.curvature_target_exceeds_L}};
}

inline Json to_json(const ConditionReport& r) {
  Json conds = Json::array();
  for (const auto& c : r.conditions)
    conds.push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"satisfied", c.satisfied}});
  return {{"conditions", conds}, {"feasible", r.feasible}, {"experiment_ready", experiment_ready(r)}};
}

// ---------------------------------------------------------------- problems

inline ObjectivePtr make_objective(const Json& p, std::int64_t d) {
  const auto name = p.at("name").get<std::string>();
  if (name == "saddle2d") {
    require(d == 2, "saddle2d: base.d must be 2");
    return make_saddle2d(p.value("gamma", 1.0), p.value("box", 2.0));
  }
  if (name == "quadratic") {
    Matrix H;
    if (p.contains("H")) {
      const auto rows = p.at("H").get<std::vector<std::vector<double>>>();
      H.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].size() == rows.size(), "quadratic: H must be square");
        for (std::size_t k = 0; k < rows.size(); ++k) H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
      }
    } else {
      require(p.contains("diag"), "quadratic: need 'H' or 'diag'");
      const auto diag = p.at("diag").get<std::vector<double>>();
      H = Vector::Map(diag.data(), static_cast<Eigen::Index>(diag.size())).asDiagonal();
    }
    require(H.rows() == d, "quadratic: dimension differs from base.d");
    return make_quadratic(H);
  }
  if (name == "finite_sum") {
    require(p.contains("base"), "finite_sum: need a 'base' problem");
    auto inner = make_objective(p.at("base"), d);
    return FiniteSum::random(inner, p.value("n", std::size_t{16}), p.value("spread", 1.0), p.value("seed", std::uint64_t{0}));
  }
  throw PreconditionError("unknown problem '" + name + "'");
}

inline Vector start_point(const ExperimentConfig& c) {
  if (c.start.empty()) return Vector::Zero(c.base.d);
  return Vector::Map(c.start.data(), static_cast<Eigen::Index>(c.start.size()));
}

// ---------------------------------------------------------------- hashing

inline std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// SHA-1 over "blob <size>\0<bytes>", as git hashes file contents.
inline std::string git_blob_sha1(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("sha1: context allocation failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 && EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1: digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

// The canonical form leaves out where outputs go.
inline std::string canonical_config(const ExperimentConfig& c) {
  Json j = to_json(c);
  j.erase("output_dir");
  return j.dump();
}

// ---------------------------------------------------------------- records

struct RunRecord {
  std::string experiment;
  std::string config_hash;
  std::string content_hash;
  Json labels = Json::object();   // sweep axis and value
  Json summary = Json::object();  // scalar metrics
  std::vector<std::string> files;
  std::string error;              // non-empty for a failed cell
  bool ok() const { return error.empty(); }
};

inline Json to_json(const RunRecord& r) {
  return {{"experiment", r.experiment}, {"config_hash", r.config_hash}, {"content_hash", r.content_hash},
          {"labels", r.labels},         {"summary", r.summary},         {"files", r.files},
          {"error", r.error}};
}

inline RunRecord record_from_json(const Json& j) {
  RunRecord r;
  r.experiment = j.at("experiment").get<std::string>();
  r.config_hash = j.value("config_hash", "");
  r.content_hash = j.value("content_hash", "");
  r.labels = j.value("labels", Json::object());
  r.summary = j.value("summary", Json::object());
  r.files = j.value("files", std::vector<std::string>{});
  r.error = j.value("error", "");
  return r;
}

// Write via a temporary in the same directory, then rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

namespace experiment_detail {

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Outputs {
  std::filesystem::path dir;
  RunRecord* rec;
  void put(const std::string& name, const std::string& content) const {
    write_file_atomic(dir / name, content);
    rec->files.push_back((dir / name).string());
  }
};

inline Trajectory run_trajectory(const ExperimentConfig& c, const HyperParams& h, const StochasticOracle& oracle,
                                 Json& summary) {
  const Vector x0 = start_point(c);
  if (c.live) {
    LiveConfig lc;
    lc.h = h;
    lc.oracle = &oracle;
    lc.workers = c.workers;
    lc.seed = c.seed;
    lc.x0 = x0;
    lc.K = c.base.K;
    auto res = run_live(lc);
    summary["mode"] = "live";
    summary["workers"] = c.workers;
    summary["max_delay"] = res.max_delay;
    summary["within_bound"] = res.within_bound;
    return std::move(res.trajectory);
  }
  RunConfig rc{h, &oracle, generate(c.schedule, c.base.K, c.base.M, c.base.T, c.seed), c.seed, x0, {}};
  auto tr = run(rc);
  summary["mode"] = "simulated";
  summary["max_delay"] = tr.schedule.max_delay();
  return tr;
}

inline std::string trajectory_csv(const Trajectory& tr, const Objective& f) {
  std::ostringstream os;
  os << std::setprecision(17) << 't';
  for (Eigen::Index j = 0; j < tr.d(); ++j) os << ",x" << j;
  os << ",grad_norm\n";
  for (Eigen::Index t = 0; t < tr.x.cols(); ++t) {
    os << t;
    for (Eigen::Index j = 0; j < tr.d(); ++j) os << ',' << tr.x(j, t);
    os << ',' << f.grad(tr.x.col(t)).norm() << '\n';
  }
  return os.str();
}

}  // namespace experiment_detail

// Runs one experiment and writes its artifacts under `dir`. Precondition
// failures propagate; the caller decides whether a failed cell is fatal.
inline RunRecord run_experiment(const ExperimentConfig& c, ExperimentKind kind, const std::filesystem::path& dir) {
  using namespace experiment_detail;
  validate(c);
  RunRecord rec;
  rec.experiment = to_string(kind);
  const auto canon = canonical_config(c);
  rec.config_hash = fnv1a64_hex(canon);
  rec.content_hash = git_blob_sha1(canon);
  Outputs out{dir, &rec};
  Json& s = rec.summary;

  if (kind == ExperimentKind::Params) {
    const auto h = derive_params(c.base);
    const auto rep = check_conditions(h);
    s["feasible"] = rep.feasible;
    s["experiment_ready"] = experiment_ready(rep);
    s["eta"] = h.eta;
    s["T_max"] = h.T_max;
    s["S"] = h.S;
    s["F"] = h.F;
    s["F2"] = h.F2;
    out.put("params.json", Json({{"params", to_json(h)}, {"conditions", to_json(rep)}}).dump(2) + "\n");
    return rec;
  }

  const auto objective = make_objective(c.problem, c.base.d);
  const StochasticOracle oracle(objective, c.base.s);
  const auto h = derive_params(c.base);
  const Vector x0 = start_point(c);

  switch (kind) {
    case ExperimentKind::Run: {
      const auto tr = run_trajectory(c, h, oracle, s);
      const Vector xf = tr.x.col(tr.x.cols() - 1);
      s["K"] = tr.K();
      s["final_value"] = objective->value(xf);
      s["final_grad_norm"] = objective->grad(xf).norm();
      s["replay_ok"] = replay(tr, &oracle).ok;
      out.put("trajectory.csv", trajectory_csv(tr, *objective));
      std::ostringstream sched;
      tr.schedule.write_csv(sched);
      out.put("schedule.csv", sched.str());
      break;
    }
    case ExperimentKind::Classify: {
      const auto tr = run_trajectory(c, h, oracle, s);
      const auto blocks = classify_blocks(tr, h, *objective);
      const auto tally = count_kinds(blocks, tr.K(), h.T());
      const auto cert = first_certified_point(tr, h, *objective, blocks);
      s["blocks"] = static_cast<std::int64_t>(blocks.size());
      s["first_kind"] = tally.first;
      s["second_kind"] = tally.second;
      s["third_kind"] = tally.third;
      s["third_kind_quota"] = tally.third_kind_quota;
      s["third_kind_quota_met"] = tally.third_kind_quota_met;
      s["certified"] = cert.has_value();
      s["certified_index"] = cert ? cert->index : -1;
      std::ostringstream csv;
      write_blocks_csv(csv, blocks);
      out.put("blocks.csv", csv.str());
      break;
    }
    case ExperimentKind::Tl2: {
      MonteCarloConfig mc{c.trials, c.iota, c.seed};
      const auto r = tl2_experiment(h, oracle, x0, mc, c.schedule);
      s["trials"] = r.trials;
      s["successes"] = r.successes;
      s["frequency"] = r.frequency;
      s["lower_bound"] = r.lower_bound;
      s["energy_or_confined_frequency"] = r.energy_or_confined_frequency;
      s["F2"] = r.F2;
      s["horizon"] = r.horizon;
      break;
    }
    case ExperimentKind::Escape: {
      EscapeOptions opt{c.trials, c.seed, c.schedule};
      const auto st = escape_stats(h, oracle, x0, opt);
      s["trials"] = st.trials;
      s["successes"] = st.successes;
      s["frequency"] = st.frequency;
      s["ci_lower"] = st.ci.lower;
      s["ci_upper"] = st.ci.upper;
      s["lower_bound"] = st.lower_bound;
      s["median_first_exit"] = st.median_first_exit();
      s["threshold"] = st.threshold;
      s["horizon"] = st.horizon;
      std::ostringstream csv;
      write_escape_csv(csv, st);
      out.put("escape.csv", csv.str());
      break;
    }
    case ExperimentKind::Tds: {
      const auto eig = min_eig(*objective, x0);
      require(eig.lambda_min < 0, "tds: start point has no negative curvature");
      const auto sched = RecursionSchedule::from_engine(generate(c.schedule, c.horizon, c.base.M, c.base.T, c.seed));
      const FundamentalSolution fs(-eig.lambda_min, h.eta, sched);
      const auto growth = check_growth(fs);
      const auto props = check_f_properties(fs);
      const auto cert = razumikhin_verify(lyapunov_from_fundamental(fs));
      s["horizon"] = fs.horizon();
      s["q"] = fs.q();
      s["growth_violations"] = static_cast<std::int64_t>(growth.size());
      s["properties_pass"] = props.all_pass();
      s["razumikhin_certified"] = cert.certified();
      std::ostringstream table, beta;
      table << "t0,t,f\n";
      beta << "k,beta\n";
      for (std::int64_t t0 = 0; t0 <= fs.horizon(); ++t0)
        for (std::int64_t t = t0; t <= fs.horizon(); ++t) table << t0 << ',' << t << ',' << csv_number(fs.f(t0, t)) << '\n';
      for (std::int64_t k = 0; k <= fs.horizon(); ++k) beta << k << ',' << csv_number(fs.beta(k)) << '\n';
      out.put("f_table.csv", table.str());
      out.put("beta.csv", beta.str());
      Json certj = {{"growth_violations", s["growth_violations"]},
                    {"properties",
                     {{"submultiplicative_violations", props.submultiplicative_violations},
                      {"monotone_violations", props.monotone_violations},
                      {"beta_transfer_violations", props.beta_transfer_violations},
                      {"beta_growth_violations", props.beta_growth_violations},
                      {"beta_growth_checked", props.beta_growth_checked}}},
                    {"razumikhin",
                     {{"bounded_difference", cert.bounded_difference},
                      {"razumikhin", cert.razumikhin},
                      {"conclusion", cert.conclusion},
                      {"certified", cert.certified()}}}};
      out.put("certificates.json", certj.dump(2) + "\n");
      break;
    }
    case ExperimentKind::Params: break;
  }
  out.put("summary.json", to_json(rec).dump(2) + "\n");
  return rec;
}

// ---------------------------------------------------------------- sweeps

// Sets a numeric field named by `axis`: a base field (e.g. "T", "eta") or
// one of seed, trials, workers, iota, horizon, or problem.<key>.
inline void set_axis(ExperimentConfig& c, const std::string& axis, double value) {
  auto as_int = [&](double v) {
    require(std::floor(v) == v, "sweep: axis '" + axis + "' needs integer values");
    return static_cast<std::int64_t>(v);
  };
  if (axis == "L") c.base.L = value;
  else if (axis == "rho") c.base.rho = value;
  else if (axis == "ell") c.base.ell = value;
  else if (axis == "s") c.base.s = value;
  else if (axis == "r") c.base.r = value;
  else if (axis == "d") c.base.d = as_int(value);
  else if (axis == "M") c.base.M = as_int(value);
  else if (axis == "T") c.base.T = as_int(value);
  else if (axis == "K") c.base.K = as_int(value);
  else if (axis == "epsilon") c.base.epsilon = value;
  else if (axis == "w") c.base.w = value;
  else if (axis == "u") c.base.u = value;
  else if (axis == "B") c.base.B = value;
  else if (axis == "eta") c.base.eta = value;
  else if (axis == "seed") c.seed = static_cast<std::uint64_t>(as_int(value));
  else if (axis == "trials") c.trials = as_int(value);
  else if (axis == "workers") c.workers = as_int(value);
  else if (axis == "iota") c.iota = value;
  else if (axis == "horizon") c.horizon = as_int(value);
  else if (axis.rfind("problem.", 0) == 0 && axis.size() > 8) {
    const auto key = axis.substr(8);
    require(c.problem.contains(key) && c.problem.at(key).is_number(), "sweep: unknown numeric axis '" + axis + "'");
    c.problem[key] = value;
  } else {
    throw PreconditionError("sweep: unknown axis '" + axis + "'");
  }
}

// One cell per value, in value order, each under dir/cell_<index>. Cells run
// concurrently; a failing cell is recorded and the sweep continues.
inline std::vector<RunRecord> sweep(const ExperimentConfig& tmpl, ExperimentKind kind, const std::string& axis,
                                    const std::vector<double>& values, const std::filesystem::path& dir) {
  {
    ExperimentConfig probe = tmpl;
    set_axis(probe, axis, values.empty() ? 0.0 : values.front());
  }
  std::vector<RunRecord> out(values.size());
  parallel_for(static_cast<std::int64_t>(values.size()), [&](std::int64_t i) {
    const double v = values[static_cast<std::size_t>(i)];
    auto& rec = out[static_cast<std::size_t>(i)];
    const auto cell_dir = dir / ("cell_" + std::to_string(i));
    try {
      ExperimentConfig c = tmpl;
      set_axis(c, axis, v);
      rec = run_experiment(c, kind, cell_dir);
    } catch (const std::exception& e) {
      rec = RunRecord{};
      rec.experiment = to_string(kind);
      rec.error = e.what();
    }
    rec.labels = {{"axis", axis}, {"value", v}};
  });
  return out;
}

// ---------------------------------------------------------------- reports

// CSV with one row per record: experiment, axis and value (when present),
// status, then every scalar summary key in sorted order. Successful records
// must agree on the experiment and the summary keys.
inline std::string report(const std::vector<RunRecord>& records) {
  std::vector<std::string> keys;
  std::string experiment;
  bool have_schema = false;
  for (const auto& r : records) {
    require(experiment.empty() || r.experiment == experiment, "report: records mix experiments");
    experiment = r.experiment;
    if (!r.ok()) continue;
    std::vector<std::string> k;
    for (auto it = r.summary.begin(); it != r.summary.end(); ++it)
      if (it->is_primitive()) k.push_back(it.key());
    if (!have_schema) {
      keys = k;
      have_schema = true;
    } else {
      require(k == keys, "report: records do not share a summary schema");
    }
  }
  std::ostringstream os;
  os << "experiment,axis,value,status";
  for (const auto& k : keys) os << ',' << k;
  os << '\n';
  auto cell = [](const Json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number()) return experiment_detail::csv_number(v.get<double>());
    return "";
  };
  for (const auto& r : records) {
    os << r.experiment << ',' << (r.labels.contains("axis") ? cell(r.labels["axis"]) : "") << ','
       << (r.labels.contains("value") ? cell(r.labels["value"]) : "") << ',' << (r.ok() ? "ok" : "error");
    for (const auto& k : keys) os << ',' << (r.ok() && r.summary.contains(k) ? cell(r.summary.at(k)) : "");
    os << '\n';
  }
  return os.str();
}

}  // namespace apsgd
