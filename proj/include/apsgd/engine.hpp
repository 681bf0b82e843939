#pragma once

// Simulated perturbed asynchronous SGD with consistent read.
//
// Stream discipline (pinned; the synchronous reference loop in the tests
// depends on it):
//   theta_{t,i} = slot_key(seed, t, i)
//   zeta_t      = stream_for(seed, {kPerturbation, t}).normal_vector(d, r / sqrt(d))
// Every draw is a pure function of (seed, t, i), so a run can be recomputed
// from any step and live mode can consume the same randomness.

#include "apsgd/delay.hpp"
#include "apsgd/error.hpp"
#include "apsgd/oracles.hpp"
#include "apsgd/params.hpp"
#include "apsgd/random.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace apsgd {

inline constexpr double kDivergenceBound = 1e8;

inline Vector perturbation(std::uint64_t seed, std::int64_t t, Eigen::Index d, double r) {
  if (r == 0.0) return Vector::Zero(d);
  Stream rs = stream_for(seed, {stream_tag::kPerturbation, static_cast<std::uint64_t>(t)});
  return rs.normal_vector(d, r / std::sqrt(static_cast<double>(d)));
}

// x - eta (sum_i g_i + sqrt(M) zeta), summed left to right over the columns
// of `grads`. Both the engine and the replay check go through this function.
inline Vector apply_update(const Vector& x, const Eigen::Ref<const Matrix>& grads, const Vector& zeta, double eta) {
  Vector acc = grads.col(0);
  for (Eigen::Index i = 1; i < grads.cols(); ++i) acc += grads.col(i);
  acc += std::sqrt(static_cast<double>(grads.cols())) * zeta;
  return x - eta * acc;
}

inline void check_finite_iterate(const Vector& x, std::int64_t step) {
  if (!x.allFinite()) throw DivergenceError(step, "non-finite iterate");
  if (x.norm() > kDivergenceBound) throw DivergenceError(step, "iterate norm exceeds divergence bound");
}

// Ring of the most recent `depth` iterates.
class HistoryBuffer {
 public:
  HistoryBuffer(std::int64_t depth, Eigen::Index d) : depth_(depth), slots_(static_cast<std::size_t>(depth)) {
    require(depth >= 1, "history: depth must be positive");
    for (auto& s : slots_) s = Vector::Zero(d);
  }

  std::int64_t depth() const { return depth_; }
  std::int64_t latest() const { return latest_; }

  void push(const Vector& x) {
    ++latest_;
    slots_[static_cast<std::size_t>(latest_ % depth_)] = x;
  }

  const Vector& lookup(std::int64_t step) const {
    require(latest_ >= 0, "history: empty");
    require(step <= latest_ && step > latest_ - depth_ && step >= 0,
            "history: step " + std::to_string(step) + " not retained");
    return slots_[static_cast<std::size_t>(step % depth_)];
  }

 private:
  std::int64_t depth_;
  std::int64_t latest_ = -1;
  std::vector<Vector> slots_;
};

struct Trajectory {
  Matrix x;                               // d x (K+1)
  Matrix zeta;                            // d x K
  Matrix grads;                           // d x (K*M); column t*M + i
  std::vector<std::int64_t> source_step;  // t - tau(t, i)
  std::vector<SampleKey> theta;
  DelaySchedule schedule;
  HyperParams params;
  std::uint64_t seed = 0;

  std::int64_t K() const { return static_cast<std::int64_t>(zeta.cols()); }
  std::int64_t M() const { return schedule.M(); }
  Eigen::Index d() const { return x.rows(); }
  Vector iterate(std::int64_t t) const { return x.col(t); }
  Vector gradient(std::int64_t t, std::int64_t i) const { return grads.col(t * M() + i); }
};

// Substitutes for the default randomness, used by the coupling module.
struct RunHooks {
  std::function<Vector(std::int64_t t)> zeta;
  std::function<Vector(std::int64_t t, std::int64_t i, const Vector& x_stale, SampleKey theta)> gradient;
};

struct RunConfig {
  HyperParams h;
  const StochasticOracle* oracle = nullptr;
  DelaySchedule schedule;
  std::uint64_t seed = 0;
  Vector x0;
  RunHooks hooks;
};

struct StepResult {
  Vector x_next;
  Matrix grads;  // d x M
  std::vector<std::int64_t> source_step;
  std::vector<SampleKey> theta;
  Vector zeta;
};

inline StepResult step(const HistoryBuffer& hist, std::int64_t t, const HyperParams& h, const StochasticOracle& oracle,
                       const std::vector<std::int64_t>& taus, std::uint64_t seed, const RunHooks& hooks = {}) {
  const auto M = static_cast<std::int64_t>(taus.size());
  require(M >= 1, "step: need at least one gradient");
  require(hist.latest() == t, "step: history must end at x_t");
  const Eigen::Index d = oracle.dim();
  StepResult res;
  res.grads.resize(d, M);
  for (std::int64_t i = 0; i < M; ++i) {
    const auto tau = taus[static_cast<std::size_t>(i)];
    require(tau >= 0 && tau <= t, "step: delay outside [0, t]");
    const auto src = t - tau;
    const Vector& xs = hist.lookup(src);
    const SampleKey theta = slot_key(seed, t, i);
    res.grads.col(i) = hooks.gradient ? hooks.gradient(t, i, xs, theta) : sample_gradient(oracle, xs, theta);
    res.source_step.push_back(src);
    res.theta.push_back(theta);
  }
  res.zeta = hooks.zeta ? hooks.zeta(t) : perturbation(seed, t, d, h.r());
  res.x_next = apply_update(hist.lookup(t), res.grads, res.zeta, h.eta);
  check_finite_iterate(res.x_next, t);
  return res;
}

inline Trajectory run(const RunConfig& cfg) {
  require(cfg.oracle != nullptr, "run: oracle required");
  const auto& sched = cfg.schedule;
  const Eigen::Index d = cfg.oracle->dim();
  require(cfg.x0.size() == d, "run: x0 dimension mismatch");
  require(cfg.x0.allFinite(), "run: x0 must be finite");
  require(sched.M() == cfg.h.M(), "run: schedule M differs from params M");

  const std::int64_t K = sched.K();
  const std::int64_t M = sched.M();
  Trajectory tr;
  tr.schedule = sched;
  tr.params = cfg.h;
  tr.seed = cfg.seed;
  tr.x.resize(d, K + 1);
  tr.zeta.resize(d, K);
  tr.grads.resize(d, K * M);
  tr.source_step.resize(static_cast<std::size_t>(K * M));
  tr.theta.resize(static_cast<std::size_t>(K * M));
  tr.x.col(0) = cfg.x0;

  HistoryBuffer hist(sched.T() + 1, d);
  hist.push(cfg.x0);
  for (std::int64_t t = 0; t < K; ++t) {
    auto res = step(hist, t, cfg.h, *cfg.oracle, sched.row(t), cfg.seed, cfg.hooks);
    tr.grads.middleCols(t * M, M) = res.grads;
    for (std::int64_t i = 0; i < M; ++i) {
      tr.source_step[static_cast<std::size_t>(t * M + i)] = res.source_step[static_cast<std::size_t>(i)];
      tr.theta[static_cast<std::size_t>(t * M + i)] = res.theta[static_cast<std::size_t>(i)];
    }
    tr.zeta.col(t) = res.zeta;
    tr.x.col(t + 1) = res.x_next;
    hist.push(res.x_next);
  }
  return tr;
}

struct ReplayReport {
  bool ok = true;
  std::int64_t first_mismatch = -1;  // step index, -1 when none
  std::string reason;
};

// Recompute every iterate from the stored gradients and noise and compare
// bitwise. With an oracle, also recompute each stored gradient at its stale
// iterate (skip when the run used a gradient hook).
inline ReplayReport replay(const Trajectory& tr, const StochasticOracle* oracle = nullptr) {
  ReplayReport rep;
  const std::int64_t K = tr.K();
  const std::int64_t M = tr.M();
  auto fail = [&](std::int64_t t, std::string why) {
    rep.ok = false;
    rep.first_mismatch = t;
    rep.reason = std::move(why);
    return rep;
  };
  if (tr.schedule.K() != K || tr.x.cols() != K + 1 || tr.grads.cols() != K * M) return fail(0, "shape");
  for (std::int64_t t = 0; t < K; ++t) {
    for (std::int64_t i = 0; i < M; ++i) {
      const auto k = static_cast<std::size_t>(t * M + i);
      if (tr.source_step[k] != t - tr.schedule(t, i)) return fail(t, "source step disagrees with schedule");
      if (oracle) {
        const Vector g = oracle->sample(tr.x.col(tr.source_step[k]), tr.theta[k]);
        if (g != tr.grads.col(static_cast<Eigen::Index>(k))) return fail(t, "stored gradient not reproducible");
      }
    }
    const Vector next = apply_update(tr.x.col(t), tr.grads.middleCols(t * M, M), tr.zeta.col(t), tr.params.eta);
    if (next != tr.x.col(t + 1)) return fail(t, "iterate not reproducible");
  }
  return rep;
}

}  // namespace apsgd
