#include "apsgd/diagnostics.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace apsgd;

namespace {

BaseConfig desk_base() {
  BaseConfig b;
  b.L = 1;
  b.rho = 1;
  b.s = 1;
  b.r = 1;
  b.d = 2;
  b.M = 4;
  b.T = 2;
  b.K = 2000;
  b.epsilon = 0.5;
  b.w = 250;
  b.u = 4;
  b.B = 1;
  return b;
}

HyperParams with_eta(std::int64_t d, std::int64_t M, std::int64_t T, double eta, double s, double r, double eps = 0.5) {
  BaseConfig b = desk_base();
  b.d = d;
  b.M = M;
  b.T = T;
  b.s = s;
  b.r = r;
  b.eta = eta;
  b.epsilon = eps;
  return derive_params(b);
}

Trajectory frozen(const Vector& x, std::int64_t K, const HyperParams& h) {
  Trajectory tr;
  tr.x = x.replicate(1, K + 1);
  tr.zeta = Matrix::Zero(x.size(), K);
  tr.grads = Matrix::Zero(x.size(), K * h.M());
  tr.schedule = DelaySchedule::zeros(K, h.M(), h.T());
  tr.source_step.resize(static_cast<std::size_t>(K * h.M()));
  for (std::int64_t t = 0; t < K; ++t)
    for (std::int64_t i = 0; i < h.M(); ++i) tr.source_step[static_cast<std::size_t>(t * h.M() + i)] = t;
  tr.theta.assign(tr.source_step.size(), 0);
  tr.params = h;
  return tr;
}

}  // namespace

TEST(Diagnostics, BlocksRequirePositiveDelay) {
  const auto h = with_eta(2, 1, 0, 0.01, 1, 1);
  const auto f = make_saddle2d(1.0);
  EXPECT_THROW(classify_blocks(frozen(Vector::Zero(2), 10, h), h, *f), PreconditionError);
}

TEST(Diagnostics, FrozenFlatStationaryPointIsThirdKind) {
  const auto h = derive_params(desk_base());
  Matrix H = Matrix::Zero(2, 2);
  H(1, 1) = 1.0;
  const auto f = make_quadratic(H);
  const auto tr = frozen(Vector::Zero(2), 40, h);
  const auto blocks = classify_blocks(tr, h, *f);
  ASSERT_EQ(blocks.size(), 10u);
  for (const auto& b : blocks) {
    EXPECT_EQ(b.kind, BlockKind::Third);
    EXPECT_EQ(b.probe, b.end);
    const auto c = extract_second_order_point(tr, h, *f, b);
    EXPECT_TRUE(c.grad_ok && c.curvature_ok && c.displacement_ok);
  }
  const auto tally = count_kinds(blocks, 40, 2);
  EXPECT_EQ(tally.third, 10);
  EXPECT_EQ(tally.third_kind_quota, 5);
  EXPECT_TRUE(tally.third_kind_quota_met);
}

TEST(Diagnostics, FrozenSaddleIsSecondKind) {
  const auto h = derive_params(desk_base());
  const auto f = make_saddle2d(1.0);
  const auto blocks = classify_blocks(frozen(Vector::Zero(2), 41, h), h, *f);
  ASSERT_EQ(blocks.size(), 11u);
  EXPECT_EQ(blocks.back().end, 41);
  for (const auto& b : blocks) EXPECT_EQ(b.kind, BlockKind::Second);
  EXPECT_THROW(extract_second_order_point(frozen(Vector::Zero(2), 41, h), h, *f, blocks[0]), PreconditionError);
}

TEST(Diagnostics, SteepDescentIsFirstKind) {
  const auto h = with_eta(2, 1, 3, 0.01, 0.1, 0.1);
  const StochasticOracle o(make_quadratic(Matrix::Identity(2, 2)), 0.1);
  const auto tr = run({h, &o, generate(DelayModel::adversarial_max(), 60, 1, 3, 0), 0, Vector::Constant(2, 50.0), {}});
  const auto blocks = classify_blocks(tr, h, o.objective());
  ASSERT_GE(h.F, 0.0);
  EXPECT_GE(blocks[0].grad_energy, h.F);
  EXPECT_EQ(blocks[0].kind, BlockKind::First);
}

TEST(DiagnosticsProperty, KindsPartitionAndReconstruct) {
  const auto h = derive_params(desk_base());
  const StochasticOracle o(make_saddle2d(1.0, 2.0), 1.0);
  const auto tr = run({h, &o, generate(DelayModel::uniform(), 4000, 4, 2, 3), 3, Vector::Zero(2), {}});
  const auto blocks = classify_blocks(tr, h, o.objective());
  std::int64_t covered = 0;
  for (const auto& b : blocks) {
    covered += b.end - b.begin;
    const bool first = b.grad_energy >= h.F;
    const bool second = !first && b.lambda_min <= -std::sqrt(h.rho() * h.epsilon()) / 2;
    const bool third = !first && !second;
    EXPECT_EQ(first + second + third, 1);
    EXPECT_EQ(b.kind, first ? BlockKind::First : second ? BlockKind::Second : BlockKind::Third);
    EXPECT_EQ(block_kind(b.grad_energy, b.lambda_min, h), b.kind);
  }
  EXPECT_EQ(covered, tr.K());
  const auto tally = count_kinds(blocks, tr.K(), h.T());
  EXPECT_EQ(tally.first + tally.second + tally.third, static_cast<std::int64_t>(blocks.size()));
}

TEST(DiagnosticsProperty, ExtractionArgminIsBruteForceScan) {
  const auto h = derive_params(desk_base());
  const StochasticOracle o(make_saddle2d(1.0, 2.0), 1.0);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto tr = run({h, &o, generate(DelayModel::uniform(), 6000, 4, 2, seed), seed, Vector::Zero(2), {}});
    for (const auto& b : classify_blocks(tr, h, o.objective())) {
      if (b.kind != BlockKind::Third) continue;
      std::int64_t arg = -1;
      double best = 0;
      for (auto i = std::max(b.begin, b.end - h.T()); i < b.end; ++i) {
        const double g = o.objective().grad(tr.x.col(i)).squaredNorm();
        if (arg < 0 || g < best) {
          best = g;
          arg = i;
        }
      }
      EXPECT_EQ(extract_second_order_point(tr, h, o.objective(), b).index, arg);
    }
  }
}

TEST(Diagnostics, ConvergedSaddleRunCertifies) {
  const auto h = derive_params(desk_base());
  const StochasticOracle o(make_saddle2d(1.0, 2.0), 1.0);
  const auto tr = run({h, &o, generate(DelayModel::adversarial_max(), 20000, 4, 2, 1), 1, Vector::Zero(2), {}});
  const auto blocks = classify_blocks(tr, h, o.objective());
  const auto cert = first_certified_point(tr, h, o.objective(), blocks);
  ASSERT_TRUE(cert.has_value());
  EXPECT_LE(cert->grad_norm, h.epsilon());
  EXPECT_GE(cert->lambda_min, -std::sqrt(h.rho() * h.epsilon()));
}

TEST(Diagnostics, DescentInequalityNoiselessSynchronous) {
  const auto h = with_eta(2, 2, 0, 0.05, 0.0, 0.0);
  const StochasticOracle o(make_quadratic(Matrix::Identity(2, 2)), 0.0);
  const auto tr = run({h, &o, DelaySchedule::zeros(100, 2), 0, Vector::Constant(2, 3.0), {}});
  for (std::int64_t t0 : {0, 5, 30})
    for (std::int64_t tau : {0, 4, 20}) {
      const auto r = check_descent_inequality(tr, h, o.objective(), t0, tau, 1.0);
      EXPECT_LE(r.residual, 0.0);
      EXPECT_TRUE(r.holds);
    }
}

TEST(Diagnostics, DescentInequalityEmptyMemoryAtStart) {
  const auto h = with_eta(2, 2, 3, 0.01, 0.5, 0.5);
  const StochasticOracle o(make_saddle2d(1.0, 2.0), 0.5);
  const auto tr = run({h, &o, generate(DelayModel::adversarial_max(), 50, 2, 3, 0), 0, Vector::Constant(2, 0.5), {}});
  const auto r = check_descent_inequality(tr, h, o.objective(), 0, 9, 2.0);
  const double L = o.objective().constants().L, eta = 0.01, s2 = 0.5;
  double g = 0;
  for (int k = 0; k <= 9; ++k) g += o.objective().grad(tr.x.col(k)).squaredNorm();
  const double expect = -3.0 * 2 * eta / 8 * g + 4 * eta * s2 * 2 + 2 * eta * eta * L * 4 * 4 * s2 * (10 + 2);
  EXPECT_NEAR(r.rhs, expect, 1e-14 * std::abs(expect) + 1e-16);
}

TEST(DiagnosticsProperty, DescentViolationFrequencyBelowBound) {
  const auto h = with_eta(2, 2, 2, 0.01, 1.0, 1.0);
  const StochasticOracle o(make_saddle2d(1.0, 2.0), 1.0);
  const double iota = 1.0;
  int violations = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto tr = run({h, &o, generate(DelayModel::uniform(), 80, 2, 2, seed), seed, Vector::Zero(2), {}});
    violations += !check_descent_inequality(tr, h, o.objective(), 20, 40, iota).holds;
    ++total;
  }
  EXPECT_LE(binomial_lower_bound(violations, total), 3 * std::exp(-iota));
}

TEST(Diagnostics, DescentPreconditionRejected) {
  // eta^2 (3L/4 - L^2 M T^2 eta) - eta/(2M) >= 0 for large eta and T = 0.
  const auto h = with_eta(2, 4, 0, 2.0, 0.5, 0.5);
  EXPECT_GE(descent_precondition_value(h, 0), 0.0);
  const StochasticOracle o(make_saddle2d(1.0), 0.0);
  Trajectory tr = frozen(Vector::Zero(2), 10, h);
  EXPECT_THROW(check_descent_inequality(tr, h, o.objective(), 0, 1, 1.0), PreconditionError);
  EXPECT_THROW(check_local_inequality(tr, h, o.objective(), 0, 1), PreconditionError);
}

TEST(Diagnostics, LocalInequalitySingleNoiselessStep) {
  const auto h = with_eta(2, 3, 0, 0.05, 0.0, 0.0);
  const StochasticOracle o(make_quadratic(Matrix::Identity(2, 2)), 0.0);
  const auto tr = run({h, &o, DelaySchedule::zeros(10, 3), 0, Vector::Constant(2, 1.0), {}});
  const auto r = check_local_inequality(tr, h, o.objective(), 4, 1);
  // disp = eta^2 M^2 ||g||^2, so rhs = ||g||^2 / 3 and lhs = ||g||^2.
  const double g2 = tr.x.col(4).squaredNorm();
  EXPECT_NEAR(r.lhs, g2, 1e-15 * g2);
  EXPECT_NEAR(r.rhs, g2 / 3, 1e-12 * g2);
  EXPECT_TRUE(r.holds);
}

TEST(DiagnosticsProperty, LocalInequalityPathwiseAllModels) {
  const StochasticOracle o(make_saddle2d(1.0, 2.0), 1.0);
  const auto h = with_eta(2, 4, 3, 0.002, 1.0, 1.0);
  int violations = 0, checked = 0;
  for (auto m : {DelayModel::constant_delay(1), DelayModel::uniform(), DelayModel::round_robin(4),
                 DelayModel::adversarial_max()}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto tr = run({h, &o, generate(m, 600, 4, 3, seed), seed, Vector::Zero(2), {}});
      Stream rs(seed + 100);
      for (int k = 0; k < 100; ++k) {
        const auto t0 = rs.uniform_int(0, 500);
        const auto t = rs.uniform_int(1, 99);
        const auto r = check_local_inequality(tr, h, o.objective(), t0, t);
        violations += !r.holds;
        ++checked;
      }
    }
  }
  EXPECT_EQ(violations, 0) << "of " << checked;
}

TEST(Diagnostics, Tl2RefusesNonStrictSaddle) {
  const auto h = derive_params(desk_base());
  const StochasticOracle o(make_saddle2d(0.0), 1.0);
  EXPECT_THROW(tl2_experiment(h, o, Vector::Zero(2), {10, 1.0, 0}), PreconditionError);
  EXPECT_THROW(tl2_experiment(h, o, Vector::Zero(2), {0, 1.0, 0}), PreconditionError);
}

TEST(Diagnostics, Tl2NoiselessNeverEscapes) {
  auto b = desk_base();
  b.s = 0;
  b.r = 0;
  b.eta = 5e-4;
  const auto h = derive_params(b);
  const StochasticOracle o(make_saddle2d(1.0, 2.0), 0.0);
  const auto r = tl2_experiment(h, o, Vector::Zero(2), {20, 1.0, 0});
  EXPECT_EQ(r.successes, 0);
  EXPECT_EQ(r.frequency, 0.0);
  EXPECT_EQ(r.energy_or_confined_frequency, 1.0);
}

TEST(Diagnostics, Tl2DeskConfigAboveConstant) {
  const auto h = derive_params(desk_base());
  const StochasticOracle o(make_saddle2d(1.0, 2.0), 1.0);
  const auto r = tl2_experiment(h, o, Vector::Zero(2), {100, 1.0, 5});
  EXPECT_EQ(r.horizon, h.T_max);
  EXPECT_GE(r.lower_bound, 1.0 / 24);
  EXPECT_GE(r.energy_or_confined_frequency, r.frequency);
}

TEST(DiagnosticsProperty, Tl2RotationInvariant) {
  auto b = desk_base();
  b.u = 0.5;  // shorter horizon keeps the frequency away from 0 and 1
  const auto h = derive_params(b);
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 1.0;
  D(1, 1) = -1.0;
  const double c = std::cos(0.7), s = std::sin(0.7);
  Matrix Q(2, 2);
  Q << c, -s, s, c;
  const StochasticOracle o1(make_quadratic(D), 1.0);
  Matrix R = Q * D * Q.transpose();
  R = 0.5 * (R + R.transpose());
  const StochasticOracle o2(make_quadratic(R), 1.0);
  const auto r1 = tl2_experiment(h, o1, Vector::Zero(2), {400, 1.0, 1});
  const auto r2 = tl2_experiment(h, o2, Vector::Zero(2), {400, 1.0, 2});
  const double se = std::sqrt(0.25 / 400.0);
  EXPECT_NEAR(r1.frequency, r2.frequency, 4 * std::sqrt(2.0) * se);
}
