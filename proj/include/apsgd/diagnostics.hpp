#pragma once

// Block classification, second-order point extraction, path-wise descent
// inequalities, and the Monte-Carlo saddle experiment.

#include "apsgd/delay.hpp"
#include "apsgd/engine.hpp"
#include "apsgd/oracles.hpp"
#include "apsgd/params.hpp"
#include "apsgd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace apsgd {

enum class BlockKind { First, Second, Third };

inline std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::First: return "first";
    case BlockKind::Second: return "second";
    case BlockKind::Third: return "third";
  }
  return "unknown";
}

struct BlockReport {
  std::int64_t k = 0;
  std::int64_t begin = 0;  // S_k = [begin, end)
  std::int64_t end = 0;
  double grad_energy = 0.0;
  std::int64_t probe = 0;  // F_k
  double lambda_min = 0.0;
  BlockKind kind = BlockKind::Third;
};

inline BlockKind block_kind(double grad_energy, double lambda_min, const HyperParams& h) {
  if (grad_energy >= h.F) return BlockKind::First;
  if (lambda_min <= -std::sqrt(h.rho() * h.epsilon()) / 2.0) return BlockKind::Second;
  return BlockKind::Third;
}

inline std::vector<double> grad_norms_sq(const Trajectory& tr, const Objective& f) {
  std::vector<double> g(static_cast<std::size_t>(tr.x.cols()));
  for (Eigen::Index t = 0; t < tr.x.cols(); ++t) g[static_cast<std::size_t>(t)] = f.grad(tr.x.col(t)).squaredNorm();
  return g;
}

// Blocks S_k = [2kT, 2(k+1)T) cover iterations [0, K); the last block is
// truncated at K. The probe F_k = min(2(k+1)T, K) is the first iterate after
// the block.
inline std::vector<BlockReport> classify_blocks(const Trajectory& tr, const HyperParams& h, const Objective& f) {
  const std::int64_t T = h.T();
  require(T >= 1, "classify_blocks: blocks need T >= 1; for T = 0 check stationarity of each iterate directly");
  const std::int64_t K = tr.K();
  const auto g = grad_norms_sq(tr, f);
  std::vector<BlockReport> out;
  for (std::int64_t k = 0; 2 * k * T < K; ++k) {
    BlockReport b;
    b.k = k;
    b.begin = 2 * k * T;
    b.end = std::min(2 * (k + 1) * T, K);
    for (auto i = b.begin; i < b.end; ++i) b.grad_energy += g[static_cast<std::size_t>(i)];
    b.probe = b.end;
    b.lambda_min = min_eig(f, tr.x.col(b.probe)).lambda_min;
    b.kind = block_kind(b.grad_energy, b.lambda_min, h);
    out.push_back(b);
  }
  return out;
}

inline void write_blocks_csv(std::ostream& os, const std::vector<BlockReport>& blocks) {
  os << "k,grad_energy,lambda_min,kind\n";
  os.precision(17);
  for (const auto& b : blocks) os << b.k << ',' << b.grad_energy << ',' << b.lambda_min << ',' << to_string(b.kind) << '\n';
}

struct SecondOrderCertificate {
  std::int64_t index = 0;  // i*
  double grad_norm = 0.0;
  double lambda_min = 0.0;
  double displacement_sq = 0.0;  // ||x_{i*} - x_{F_k}||^2
  bool grad_ok = false;          // ||grad|| <= eps
  bool curvature_ok = false;     // lambda_min >= -sqrt(rho eps)
  bool displacement_ok = false;  // displacement_sq <= eps^2 / (4 L^2)
  bool certified() const { return grad_ok && curvature_ok; }
};

// i* minimizes ||grad f||^2 over the last T iterations of a third-kind block
// (first minimizer on ties).
inline SecondOrderCertificate extract_second_order_point(const Trajectory& tr, const HyperParams& h,
                                                         const Objective& f, const BlockReport& block) {
  require(block.kind == BlockKind::Third, "extract_second_order_point: block is not of the third kind");
  const std::int64_t lo = std::max(block.begin, block.end - h.T());
  SecondOrderCertificate c;
  double best = std::numeric_limits<double>::infinity();
  for (auto i = lo; i < block.end; ++i) {
    const double gi = f.grad(tr.x.col(i)).squaredNorm();
    if (gi < best) {
      best = gi;
      c.index = i;
    }
  }
  const Vector xi = tr.x.col(c.index);
  const double eps = h.epsilon();
  c.grad_norm = std::sqrt(best);
  c.lambda_min = min_eig(f, xi).lambda_min;
  c.displacement_sq = (xi - tr.x.col(block.probe)).squaredNorm();
  c.grad_ok = c.grad_norm <= eps;
  c.curvature_ok = c.lambda_min >= -std::sqrt(h.rho() * eps);
  c.displacement_ok = c.displacement_sq <= eps * eps / (4.0 * h.L() * h.L());
  return c;
}

// First certified point over the third-kind blocks, in block order.
inline std::optional<SecondOrderCertificate> first_certified_point(const Trajectory& tr, const HyperParams& h,
                                                                   const Objective& f,
                                                                   const std::vector<BlockReport>& blocks) {
  for (const auto& b : blocks) {
    if (b.kind != BlockKind::Third) continue;
    auto c = extract_second_order_point(tr, h, f, b);
    if (c.certified()) return c;
  }
  return std::nullopt;
}

struct KindTally {
  std::int64_t first = 0;
  std::int64_t second = 0;
  std::int64_t third = 0;
  std::int64_t third_kind_quota = 0;  // floor(K / 4T)
  bool third_kind_quota_met = false;
};

inline KindTally count_kinds(const std::vector<BlockReport>& blocks, std::int64_t K, std::int64_t T) {
  require(T >= 1, "count_kinds: need T >= 1");
  KindTally t;
  for (const auto& b : blocks) {
    if (b.kind == BlockKind::First) ++t.first;
    else if (b.kind == BlockKind::Second) ++t.second;
    else ++t.third;
  }
  t.third_kind_quota = K / (4 * T);
  t.third_kind_quota_met = t.third >= t.third_kind_quota;
  return t;
}

struct MonteCarloConfig {
  std::int64_t trials = 100;
  double iota = 1.0;
  std::uint64_t seed = 0;
};

inline void validate(const MonteCarloConfig& mc) {
  require(mc.trials >= 1, "monte carlo: trials must be positive");
  require(mc.iota > 0 && std::isfinite(mc.iota), "monte carlo: iota must be positive");
}

inline double descent_precondition_value(const HyperParams& h, std::int64_t T) {
  const double L = h.L(), M = static_cast<double>(h.M()), eta = h.eta, Td = static_cast<double>(T);
  return eta * eta * (0.75 * L - L * L * M * Td * Td * eta) - eta / (2.0 * M);
}

namespace diag_detail {

inline void require_descent_precondition(const HyperParams& h, std::int64_t T) {
  require(descent_precondition_value(h, T) < 0, "descent inequality: precondition eta^2(3L/4 - L^2 M T^2 eta) - eta/(2M) < 0 fails");
}

// sum_m grad f(x_{j - tau(j, m)})
inline Vector stale_grad_sum(const Trajectory& tr, const Objective& f, std::int64_t j) {
  Vector acc = Vector::Zero(tr.d());
  for (std::int64_t m = 0; m < tr.M(); ++m) acc += f.grad(tr.x.col(tr.source_step[static_cast<std::size_t>(j * tr.M() + m)]));
  return acc;
}

// Combined step noise: sum_m (g_{j,m} - grad f(x_{j - tau(j,m)})) + sqrt(M) zeta_j.
inline Vector step_noise(const Trajectory& tr, const Objective& f, std::int64_t j) {
  Vector acc = Vector::Zero(tr.d());
  for (std::int64_t m = 0; m < tr.M(); ++m) {
    const auto k = static_cast<std::size_t>(j * tr.M() + m);
    acc += tr.grads.col(static_cast<Eigen::Index>(k)) - f.grad(tr.x.col(tr.source_step[k]));
  }
  acc += std::sqrt(static_cast<double>(tr.M())) * tr.zeta.col(j);
  return acc;
}

}  // namespace diag_detail

struct InequalityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;  // violation amount; <= 0 when the inequality holds
  double scale = 0.0;     // magnitude of the dominating term
  bool holds = false;
};

// Realized sides of the finite-horizon descent bound
//   f(x_{t0+tau+1}) - f(x_{t0}) <= sum_{k=t0}^{t0+tau} -(3 M eta / 8) ||grad f(x_k)||^2
//       + c eta sigma^2 iota + 2 eta^2 L M^2 c sigma^2 (tau + 1 + iota)
//       + L^2 T^2 M eta^3 sum_{k=t0-T}^{t0-1} ||sum_m grad f(x_{k - tau(k,m)})||^2.
// L is the objective's certified smoothness constant. The bound is
// probabilistic, so `holds` is an event, not an assertion.
inline InequalityReport check_descent_inequality(const Trajectory& tr, const HyperParams& h, const Objective& f,
                                                 std::int64_t t0, std::int64_t tau, double iota) {
  const std::int64_t T = tr.schedule.T();
  diag_detail::require_descent_precondition(h, T);
  require(t0 >= 0 && tau >= 0 && t0 + tau + 1 <= tr.K(), "check_descent_inequality: window outside trajectory");
  require(iota > 0, "check_descent_inequality: iota must be positive");
  const double L = f.constants().L, M = static_cast<double>(tr.M()), eta = h.eta, s2 = h.sigma2(), c = h.c;
  const double Td = static_cast<double>(T);

  InequalityReport r;
  r.lhs = f.value(tr.x.col(t0 + tau + 1)) - f.value(tr.x.col(t0));
  double descent = 0.0;
  for (auto k = t0; k <= t0 + tau; ++k) descent += f.grad(tr.x.col(k)).squaredNorm();
  descent *= -3.0 * M * eta / 8.0;
  double memory = 0.0;
  for (auto k = std::max<std::int64_t>(0, t0 - T); k < t0; ++k)
    memory += diag_detail::stale_grad_sum(tr, f, k).squaredNorm();
  memory *= L * L * Td * Td * M * eta * eta * eta;
  const double noise = c * eta * s2 * iota + 2.0 * eta * eta * L * M * M * c * s2 * (static_cast<double>(tau) + 1.0 + iota);
  r.rhs = descent + noise + memory;
  r.residual = r.lhs - r.rhs;
  r.scale = std::max({std::abs(r.lhs), std::abs(descent), noise, memory});
  r.holds = r.residual <= 0;
  return r;
}

inline constexpr double kPathwiseTolerance = 1e-9;

// Realized sides of the local inequality over the window [t0, t0+t):
//   sum_k (1 + 2 L^2 eta^2 M^2 T^3) ||grad f(x_k)||^2
//     >= (||x_{t0+t} - x_{t0}||^2 - 3 eta^2 ||sum_i N_i||^2) / (3 eta^2 M^2 t)
//        - sum_{k=t0-2T}^{t0-1} 2 L^2 M^2 eta^2 T^3 ||grad f(x_k)||^2
//        - sum_k 2 L^2 eta^2 ||sum_{j=k-tmax_k}^{k-1} N_j||^2
// with N_j the combined step noise and tmax_k the delay of the stalest read
// (largest ||x_k - x_{k-tau}||) at step k. Sums are clamped at index 0.
// L is the objective's certified smoothness constant.
inline InequalityReport check_local_inequality(const Trajectory& tr, const HyperParams& h, const Objective& f,
                                               std::int64_t t0, std::int64_t t) {
  using diag_detail::step_noise;
  const std::int64_t T = tr.schedule.T();
  diag_detail::require_descent_precondition(h, T);
  require(t0 >= 0 && t >= 1 && t0 + t <= tr.K(), "check_local_inequality: window outside trajectory");
  const double L = f.constants().L, M = static_cast<double>(tr.M()), eta = h.eta;
  const double T3 = std::pow(static_cast<double>(T), 3);
  const double mem = 2.0 * L * L * eta * eta * M * M * T3;

  std::vector<Vector> N;
  const auto first = std::max<std::int64_t>(0, t0 - T);
  for (auto j = first; j < t0 + t; ++j) N.push_back(step_noise(tr, f, j));
  auto noise_at = [&](std::int64_t j) -> const Vector& { return N[static_cast<std::size_t>(j - first)]; };

  InequalityReport r;
  double gsum = 0.0;
  for (auto k = t0; k < t0 + t; ++k) gsum += f.grad(tr.x.col(k)).squaredNorm();
  r.lhs = (1.0 + mem) * gsum;

  Vector total = Vector::Zero(tr.d());
  for (auto i = t0; i < t0 + t; ++i) total += noise_at(i);
  const double disp = (tr.x.col(t0 + t) - tr.x.col(t0)).squaredNorm();
  const double noise_total = 3.0 * eta * eta * total.squaredNorm();
  const double main = (disp - noise_total) / (3.0 * eta * eta * M * M * static_cast<double>(t));

  double past = 0.0;
  for (auto k = std::max<std::int64_t>(0, t0 - 2 * T); k < t0; ++k) past += f.grad(tr.x.col(k)).squaredNorm();
  past *= mem;

  double stale = 0.0;
  for (auto k = t0; k < t0 + t; ++k) {
    std::int64_t tmax = 0;
    double best = -1.0;
    for (std::int64_t m = 0; m < tr.M(); ++m) {
      const auto src = tr.source_step[static_cast<std::size_t>(k * tr.M() + m)];
      const double dk = (tr.x.col(k) - tr.x.col(src)).squaredNorm();
      if (dk > best) {
        best = dk;
        tmax = k - src;
      }
    }
    Vector acc = Vector::Zero(tr.d());
    for (auto j = k - tmax; j < k; ++j) acc += noise_at(j);
    stale += acc.squaredNorm();
  }
  stale *= 2.0 * L * L * eta * eta;

  r.rhs = main - past - stale;
  r.residual = r.rhs - r.lhs;
  r.scale = std::max({r.lhs, std::abs(main), disp / (3.0 * eta * eta * M * M * static_cast<double>(t)),
                      noise_total / (3.0 * eta * eta * M * M * static_cast<double>(t)), past, stale});
  r.holds = r.residual <= kPathwiseTolerance * r.scale;
  return r;
}

struct Tl2Result {
  std::int64_t trials = 0;
  std::int64_t successes = 0;         // sum_{t<T_max} ||grad f(x_t)||^2 > F2
  std::int64_t energy_or_confined_successes = 0;  // energy event, or every ||x_t - x_0||^2 <= S^2
  double frequency = 0.0;
  double energy_or_confined_frequency = 0.0;
  double lower_bound = 0.0;  // one-sided 95% bound on frequency
  double F2 = 0.0;
  double S = 0.0;
  std::int64_t horizon = 0;
};

// Continuations of length T_max from the saddle point x_k, which is taken as
// frozen for the preceding 2T steps (delayed reads before the start see x_k).
// Events compare strictly so that a trajectory that never moves does not
// count as an escape when F2 or S is zero.
inline Tl2Result tl2_experiment(const HyperParams& h, const StochasticOracle& oracle, const Vector& xk,
                                const MonteCarloConfig& mc, const DelayModel& model = DelayModel::adversarial_max()) {
  validate(mc);
  require_experiment_ready(h);
  const Objective& f = oracle.objective();
  const double lam = min_eig(f, xk).lambda_min;
  require(lam <= -std::sqrt(h.rho() * h.epsilon()) / 2.0, "tl2: x_k is not a strict saddle at the curvature scale sqrt(rho eps)/2");
  require(2.0 * static_cast<double>(h.T()) * f.grad(xk).squaredNorm() <= h.F, "tl2: preceding 2T gradient energy exceeds F");

  const std::int64_t K = h.T_max;
  Tl2Result res;
  res.trials = mc.trials;
  res.F2 = h.F2;
  res.S = h.S;
  res.horizon = K;
  std::vector<char> hit(static_cast<std::size_t>(mc.trials)), hit4(static_cast<std::size_t>(mc.trials));
  parallel_for(mc.trials, [&](std::int64_t trial) {
    const auto seed = trial_seed(mc.seed, trial);
    RunConfig cfg{h, &oracle, generate(model, K, h.M(), h.T(), seed), seed, xk, {}};
    double energy = 0.0;
    bool confined = true;
    try {
      const auto tr = run(cfg);
      for (std::int64_t t = 0; t < K; ++t) energy += f.grad(tr.x.col(t)).squaredNorm();
      for (std::int64_t t = 0; t <= K && confined; ++t) confined = (tr.x.col(t) - xk).squaredNorm() <= h.S * h.S;
    } catch (const DivergenceError&) {
      energy = std::numeric_limits<double>::infinity();
      confined = false;
    }
    hit[static_cast<std::size_t>(trial)] = energy > h.F2;
    hit4[static_cast<std::size_t>(trial)] = energy > h.F2 || confined;
  });
  for (std::int64_t i = 0; i < mc.trials; ++i) {
    res.successes += hit[static_cast<std::size_t>(i)];
    res.energy_or_confined_successes += hit4[static_cast<std::size_t>(i)];
  }
  res.frequency = static_cast<double>(res.successes) / static_cast<double>(res.trials);
  res.energy_or_confined_frequency = static_cast<double>(res.energy_or_confined_successes) / static_cast<double>(res.trials);
  res.lower_bound = binomial_lower_bound(res.successes, res.trials);
  return res;
}

}  // namespace apsgd
