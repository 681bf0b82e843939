#pragma once

// Two runs from the same point that share every sample key and delay and
// differ only in the sign of the injected noise along the most negative
// curvature direction e1.

#include "apsgd/delay.hpp"
#include "apsgd/engine.hpp"
#include "apsgd/oracles.hpp"
#include "apsgd/params.hpp"
#include "apsgd/stats.hpp"
#include "apsgd/tds.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace apsgd {

enum class CouplingMode {
  SharedSamples,        // both runs use the same theta; oracle noise is re-evaluated at each run's iterate
  SharedGradientNoise,  // run 2 reuses run 1's realized oracle deviations
};

inline constexpr double kEigenGapWarning = 1e-12;

struct CoupledPair {
  Trajectory traj1;
  Trajectory traj2;
  Vector anchor;      // x_k
  Vector e1;          // canonical sign
  double lambda_min = 0.0;
  bool ill_conditioned = false;  // eigen-gap below kEigenGapWarning
  // Noise representation: zeta_1 = a + c e1, zeta_2 = a - c e1 (with
  // `mirror_sign` = -1 the roles are swapped).
  Matrix orth;                   // a_t, d x K
  std::vector<double> mirror;    // c_t
  double mirror_sign = 1.0;

  std::int64_t K() const { return traj1.K(); }
  Vector diff(std::int64_t t) const { return traj1.x.col(t) - traj2.x.col(t); }
};

struct CouplingOptions {
  CouplingMode mode = CouplingMode::SharedSamples;
  double mirror_sign = 1.0;  // -1 swaps the roles of the two runs
};

inline CoupledPair run_coupled(const Vector& xk, const HyperParams& h, const StochasticOracle& oracle,
                               const DelaySchedule& schedule, std::uint64_t seed, const CouplingOptions& opt = {}) {
  require(opt.mirror_sign == 1.0 || opt.mirror_sign == -1.0, "run_coupled: mirror sign must be +-1");
  const Objective& f = oracle.objective();
  const auto eig = min_eig(f, xk);
  require(eig.lambda_min < 0, "run_coupled: anchor has no negative curvature, e1 undefined");
  const Eigen::Index d = oracle.dim();
  const std::int64_t K = schedule.K();

  CoupledPair pair;
  pair.anchor = xk;
  pair.e1 = eig.e1;
  pair.lambda_min = eig.lambda_min;
  pair.ill_conditioned = eig.gap < kEigenGapWarning;
  pair.mirror_sign = opt.mirror_sign;
  pair.orth.resize(d, K);
  pair.mirror.resize(static_cast<std::size_t>(K));
  for (std::int64_t t = 0; t < K; ++t) {
    const Vector z = perturbation(seed, t, d, h.r());
    const double c = pair.e1.dot(z);
    pair.orth.col(t) = z - c * pair.e1;
    pair.mirror[static_cast<std::size_t>(t)] = c;
  }
  const Vector e1 = pair.e1;
  const Matrix& orth = pair.orth;
  const auto& mirror = pair.mirror;
  auto zeta_with = [&, e1](double sign) {
    return [&orth, &mirror, e1, sign](std::int64_t t) -> Vector {
      return orth.col(t) + (sign * mirror[static_cast<std::size_t>(t)]) * e1;
    };
  };

  RunConfig c1{h, &oracle, schedule, seed, xk, {}};
  c1.hooks.zeta = zeta_with(opt.mirror_sign);
  pair.traj1 = run(c1);

  RunConfig c2{h, &oracle, schedule, seed, xk, {}};
  c2.hooks.zeta = zeta_with(-opt.mirror_sign);
  if (opt.mode == CouplingMode::SharedGradientNoise) {
    const Trajectory& t1 = pair.traj1;
    const std::int64_t M = schedule.M();
    c2.hooks.gradient = [&t1, &f, M](std::int64_t t, std::int64_t i, const Vector& xs, SampleKey) -> Vector {
      const auto k = t * M + i;
      const Vector dev = t1.grads.col(k) - f.grad(t1.x.col(t1.source_step[static_cast<std::size_t>(k)]));
      return f.grad(xs) + dev;
    };
  }
  pair.traj2 = run(c2);
  return pair;
}

// Bitwise check that both runs injected a + c e1 and a - c e1 from the same
// stored (a, c). The projections of the realized vectors carry rounding and
// are reported as maxima.
struct MirrorCheck {
  bool representation_exact = true;  // e1 parts are exact negatives, orthogonal parts identical
  double max_e1_sum = 0.0;           // max |e1.zeta1 + e1.zeta2|
  double max_orth_diff = 0.0;        // max ||(I - e1 e1^T)(zeta1 - zeta2)||
};

inline MirrorCheck check_mirror(const CoupledPair& p) {
  MirrorCheck mc;
  const Matrix P = Matrix::Identity(p.e1.size(), p.e1.size()) - p.e1 * p.e1.transpose();
  for (std::int64_t t = 0; t < p.K(); ++t) {
    const double c = p.mirror[static_cast<std::size_t>(t)];
    const double c1 = p.mirror_sign * c, c2 = -p.mirror_sign * c;
    if (c1 != -c2) mc.representation_exact = false;
    const Vector z1 = p.traj1.zeta.col(t), z2 = p.traj2.zeta.col(t);
    const Vector a = p.orth.col(t);
    if (z1 != Vector(a + c1 * p.e1) || z2 != Vector(a + c2 * p.e1)) mc.representation_exact = false;
    mc.max_e1_sum = std::max(mc.max_e1_sum, std::abs(p.e1.dot(z1) + p.e1.dot(z2)));
    mc.max_orth_diff = std::max(mc.max_orth_diff, (P * (z1 - z2)).norm());
  }
  return mc;
}

struct EscapeStats {
  std::int64_t trials = 0;
  std::int64_t successes = 0;  // max_{t <= T_max} ||x_t - x_0|| > S
  double threshold = 0.0;      // S
  std::int64_t horizon = 0;    // T_max
  double frequency = 0.0;
  BinomialInterval ci;         // two-sided 95%
  double lower_bound = 0.0;    // one-sided 95%
  std::vector<std::int64_t> first_exit;   // first t with ||x_t - x_0|| > S; horizon + 1 if none
  std::vector<double> max_displacement;
  double median_first_exit() const {
    return median(std::vector<double>(first_exit.begin(), first_exit.end()));
  }
};

struct EscapeOptions {
  std::int64_t trials = 100;
  std::uint64_t seed = 0;
  DelayModel model = DelayModel::adversarial_max();
};

inline void require_strict_saddle(const HyperParams& h, const Objective& f, const Vector& xk) {
  const double lam = min_eig(f, xk).lambda_min;
  require(lam <= -std::sqrt(h.rho() * h.epsilon()) / 2.0, "x_k is not a strict saddle at the curvature scale sqrt(rho eps)/2");
}

// Independent single runs of T_max steps from x_k. Trial i uses seed
// trial_seed(seed, i) for both its schedule and its randomness, so cells that
// differ only in T share their random numbers.
inline EscapeStats escape_stats(const HyperParams& h, const StochasticOracle& oracle, const Vector& xk,
                                const EscapeOptions& opt) {
  require(opt.trials >= 1, "escape_stats: trials must be positive");
  require_experiment_ready(h);
  require_strict_saddle(h, oracle.objective(), xk);
  const std::int64_t K = h.T_max;
  EscapeStats st;
  st.trials = opt.trials;
  st.threshold = h.S;
  st.horizon = K;
  st.first_exit.assign(static_cast<std::size_t>(opt.trials), K + 1);
  st.max_displacement.assign(static_cast<std::size_t>(opt.trials), 0.0);
  parallel_for(opt.trials, [&](std::int64_t trial) {
    const auto seed = trial_seed(opt.seed, trial);
    RunConfig cfg{h, &oracle, generate(opt.model, K, h.M(), h.T(), seed), seed, xk, {}};
    auto& exit = st.first_exit[static_cast<std::size_t>(trial)];
    auto& maxd = st.max_displacement[static_cast<std::size_t>(trial)];
    try {
      const auto tr = run(cfg);
      for (std::int64_t t = 0; t <= K; ++t) {
        const double dist = (tr.x.col(t) - xk).norm();
        maxd = std::max(maxd, dist);
        if (dist > h.S && exit > K) exit = t;
      }
    } catch (const DivergenceError& e) {
      maxd = std::numeric_limits<double>::infinity();
      exit = std::min<std::int64_t>(exit, e.step() + 1);
    }
  });
  for (auto e : st.first_exit) st.successes += e <= K;
  st.frequency = static_cast<double>(st.successes) / static_cast<double>(st.trials);
  st.ci = clopper_pearson(st.successes, st.trials);
  st.lower_bound = binomial_lower_bound(st.successes, st.trials);
  return st;
}

inline void write_escape_csv(std::ostream& os, const EscapeStats& st) {
  os << "trial,first_exit,max_displacement\n";
  os.precision(17);
  for (std::size_t i = 0; i < st.first_exit.size(); ++i)
    os << i << ',' << st.first_exit[i] << ',' << st.max_displacement[i] << '\n';
}

// First t with ||diff(t)|| >= threshold, or K + 1.
inline std::int64_t coupled_exit_time(const CoupledPair& p, double threshold) {
  for (std::int64_t t = 0; t <= p.K(); ++t)
    if (p.diff(t).norm() >= threshold) return t;
  return p.K() + 1;
}

struct Decomposition {
  std::vector<Vector> psi;       // psi(t), t = 0..K
  std::vector<Vector> residual;  // diff(t) - psi(t)
  std::vector<double> beta;      // beta(t) of the scalar solution at gamma = -lambda_min
  std::vector<char> residual_small;  // ||residual|| <= beta sqrt(M) eta r / (2 sqrt d)
  std::vector<char> psi_large;       // ||psi|| >= 2 beta sqrt(M) eta r / (3 sqrt d)
  std::vector<char> confined;        // both runs within S of x_k up to t
};

// psi(t) = -eta sqrt(M) sum_{i<t} F(i+1, t) (zeta1_i - zeta2_i), with F the
// matrix solution for A = -H, H the Hessian at the anchor. psi is evaluated by
// the forced recursion, which equals the superposition sum.
inline Decomposition decompose(const CoupledPair& p, const MatrixFundamentalSolution& F, const HyperParams& h) {
  const auto rs = RecursionSchedule::from_engine(p.traj1.schedule);
  require(rs == F.schedule(), "decompose: fundamental solution built on a different schedule");
  const std::int64_t K = p.K();
  const Eigen::Index d = p.anchor.size();
  const double M = static_cast<double>(p.traj1.M());
  const double eta = F.eta();
  const double r = h.r();
  const FundamentalSolution fs(-p.lambda_min, eta, rs);

  std::vector<Vector> u(static_cast<std::size_t>(K));
  for (std::int64_t i = 0; i < K; ++i) u[static_cast<std::size_t>(i)] = -eta * std::sqrt(M) * (p.traj1.zeta.col(i) - p.traj2.zeta.col(i));

  Decomposition dc;
  const double unit = std::sqrt(M) * eta * r / std::sqrt(static_cast<double>(d));
  bool inside = true;
  dc.psi = simulate_forced(F.A(), eta, rs, u);
  for (std::int64_t t = 0; t <= K; ++t) {
    dc.residual.push_back(p.diff(t) - dc.psi[static_cast<std::size_t>(t)]);
    dc.beta.push_back(fs.beta(t));
    dc.residual_small.push_back(dc.residual.back().norm() <= dc.beta.back() * unit / 2.0);
    dc.psi_large.push_back(dc.psi[static_cast<std::size_t>(t)].norm() >= 2.0 * dc.beta.back() * unit / 3.0);
    inside = inside && (p.traj1.x.col(t) - p.anchor).norm() <= h.S && (p.traj2.x.col(t) - p.anchor).norm() <= h.S;
    dc.confined.push_back(inside);
  }
  return dc;
}

inline MatrixFundamentalSolution pair_fundamental_solution(const CoupledPair& p, const Objective& f) {
  return MatrixFundamentalSolution(-f.hessian(p.anchor), p.traj1.params.eta,
                                   RecursionSchedule::from_engine(p.traj1.schedule));
}

struct DecomposeStats {
  std::int64_t trials = 0;
  std::int64_t at = 0;  // evaluation step
  std::int64_t residual_small = 0;
  std::int64_t psi_large = 0;
  std::int64_t truncated = 0;  // a run left the S-ball before `at`
  double residual_frequency() const { return static_cast<double>(residual_small) / static_cast<double>(trials); }
  double psi_frequency() const { return static_cast<double>(psi_large) / static_cast<double>(trials); }
  double truncation_frequency() const { return static_cast<double>(truncated) / static_cast<double>(trials); }
};

// Coupled pairs of `horizon` steps from x_k, decomposed and evaluated at the
// final step.
inline DecomposeStats decompose_experiment(const HyperParams& h, const StochasticOracle& oracle, const Vector& xk,
                                           std::int64_t horizon, const EscapeOptions& opt) {
  require(opt.trials >= 1 && horizon >= 1, "decompose_experiment: need trials >= 1, horizon >= 1");
  DecomposeStats st;
  st.trials = opt.trials;
  st.at = horizon;
  std::vector<char> small(static_cast<std::size_t>(opt.trials)), large(small.size()), trunc(small.size());
  parallel_for(opt.trials, [&](std::int64_t trial) {
    const auto seed = trial_seed(opt.seed, trial);
    const auto sched = generate(opt.model, horizon, h.M(), h.T(), seed);
    const auto pair = run_coupled(xk, h, oracle, sched, seed);
    const auto F = pair_fundamental_solution(pair, oracle.objective());
    const auto dc = decompose(pair, F, h);
    small[static_cast<std::size_t>(trial)] = dc.residual_small.back();
    large[static_cast<std::size_t>(trial)] = dc.psi_large.back();
    trunc[static_cast<std::size_t>(trial)] = !dc.confined.back();
  });
  for (std::size_t i = 0; i < small.size(); ++i) {
    st.residual_small += small[i];
    st.psi_large += large[i];
    st.truncated += trunc[i];
  }
  return st;
}

}  // namespace apsgd
