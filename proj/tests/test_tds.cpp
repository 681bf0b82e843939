#include "apsgd/tds.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace apsgd;

TEST(Tds, FromEngineShiftsDelaysByOne) {
  const auto rs = RecursionSchedule::from_engine(DelaySchedule(3, 1, 2, {0, 1, 2}));
  EXPECT_EQ(rs.at(1, 0), 1);
  EXPECT_EQ(rs.at(2, 0), 2);
  EXPECT_EQ(rs.at(3, 0), 3);
  EXPECT_THROW(RecursionSchedule(2, 1, 1, {1, 3}), PreconditionError);
  EXPECT_THROW(RecursionSchedule(2, 1, 1, {0, 1}), PreconditionError);
}

TEST(Tds, ZeroDelayIsGeometric) {
  for (std::int64_t M : {1, 3}) {
    const FundamentalSolution fs(0.7, 0.05, RecursionSchedule::undelayed(30, M));
    for (std::int64_t t0 = 0; t0 <= 30; ++t0) {
      EXPECT_EQ(fs.f(t0, t0), 1.0);
      for (std::int64_t t = t0; t <= 30; ++t)
        EXPECT_NEAR(fs.f(t0, t), std::pow(1.0 + M * 0.05 * 0.7, double(t - t0)), 1e-12 * fs.f(t0, t));
    }
  }
}

TEST(Tds, HandUnrolledConstantDelayTable) {
  // f(k) = f(k-1) + 0.1 f(k-2), f(-1) = 0, f(0) = 1.
  const std::vector<double> expect = {1.0, 1.0, 1.1, 1.2, 1.31, 1.43, 1.561};
  const FundamentalSolution fs(1.0, 0.1, RecursionSchedule(6, 1, 1, std::vector<std::int64_t>(6, 2)));
  for (std::int64_t t0 = 0; t0 <= 6; ++t0)
    for (std::int64_t t = t0; t <= 6; ++t) EXPECT_NEAR(fs.f(t0, t), expect[static_cast<std::size_t>(t - t0)], 1e-14);
  EXPECT_EQ(fs.f(3, 2), 0.0);
  double b = 0;
  for (std::int64_t i = 0; i <= 6; ++i) b += fs.f(i, 6) * fs.f(i, 6);
  EXPECT_DOUBLE_EQ(fs.beta(6), std::sqrt(b));
}

TEST(Tds, GrowthAtZeroDelay) {
  for (double gamma : {0.1, 1.0, 5.0}) {
    const FundamentalSolution fs(gamma, 0.02, RecursionSchedule::undelayed(40, 2));
    EXPECT_TRUE(check_growth(fs).empty());
  }
}

TEST(TdsProperty, GrowthOnRandomSchedules) {
  std::int64_t n = 0;
  for (double gamma : {0.1, 1.0})
    for (std::int64_t T = 1; T <= 5; ++T)
      for (std::int64_t M = 1; M <= 2; ++M)
        for (std::uint64_t seed = 0; seed < 10; ++seed, ++n) {
          const FundamentalSolution fs(gamma, 0.1, RecursionSchedule::random(60, M, T, seed * 131 + T));
          const auto v = check_growth(fs);
          EXPECT_TRUE(v.empty()) << "gamma=" << gamma << " T=" << T << " M=" << M << " seed=" << seed;
        }
  EXPECT_EQ(n, 200);
}

TEST(TdsProperty, EnumerationSmallDelays) {
  for (std::int64_t T = 0; T <= 3; ++T) {
    const std::int64_t horizon = T == 3 ? 10 : 12;
    const auto rep = enumerate_schedules(0.2, T, horizon);
    std::int64_t expect = 0, p = 1;
    for (std::int64_t h = 0; h <= horizon; ++h, p *= T + 1) expect += p;
    EXPECT_EQ(rep.schedules, expect);
    EXPECT_EQ(rep.growth_violations, 0) << "T=" << T;
    EXPECT_TRUE(rep.properties.all_pass()) << "T=" << T;
  }
}

TEST(TdsProperty, EnumerationGrowthOnlyFullHorizon) {
  const auto rep = enumerate_schedules(0.5, 3, 12, false);
  EXPECT_EQ(rep.growth_violations, 0);
  EXPECT_EQ(rep.properties.monotone_violations, 0);
}

TEST(TdsProperty, FPropertiesOnRandomSchedules) {
  for (std::int64_t T : {1, 2, 4})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const FundamentalSolution fs(1.0, 0.1, RecursionSchedule::random(40, 3, T, seed));
      const auto rep = check_f_properties(fs);
      EXPECT_TRUE(rep.all_pass()) << "T=" << T << " seed=" << seed;
      EXPECT_GT(rep.beta_growth_checked, 0);
    }
}

TEST(Tds, BetaGrowthGateNeedsPositiveQ) {
  const FundamentalSolution fs(0.0, 0.1, RecursionSchedule::random(20, 1, 2, 0));
  const auto rep = check_f_properties(fs);
  EXPECT_EQ(rep.beta_growth_checked, 0);
  EXPECT_TRUE(rep.all_pass());
  EXPECT_FALSE(tds_detail::beta_growth_applies(100, 2, 0.0));
  // q = 0.1: applies once k - T >= ln 2 / 0.1 = 6.93.
  EXPECT_FALSE(tds_detail::beta_growth_applies(8, 2, 0.1));
  EXPECT_TRUE(tds_detail::beta_growth_applies(9, 2, 0.1));
}

TEST(Tds, RazumikhinGeometricTrace) {
  LyapunovTrace tr;
  tr.T = 3;
  tr.q = 0.05;
  tr.q_m = 1.0;
  for (int j = -3; j <= 50; ++j) tr.V.push_back(std::pow(1.05, j));
  tr.p = std::pow(1.05, -3);
  const auto c = razumikhin_verify(tr);
  EXPECT_TRUE(c.certified());
  EXPECT_GT(c.b_triggered, 0);
}

TEST(Tds, RazumikhinDetectsBoundedDifferenceViolation) {
  LyapunovTrace tr;
  tr.T = 1;
  tr.q = 0.05;
  tr.q_m = 0.9;
  tr.p = 1.0;
  tr.V = {1.0, 1.0, 1.05, 0.5, 0.6};
  const auto c = razumikhin_verify(tr);
  EXPECT_FALSE(c.bounded_difference);
  EXPECT_EQ(c.first_a_failure, 1);
  EXPECT_FALSE(c.conclusion_checked);
  EXPECT_FALSE(c.certified());
}

TEST(Tds, RazumikhinRejectsBadTrace) {
  LyapunovTrace tr;
  tr.T = 2;
  tr.V = {1.0, 2.0};
  EXPECT_THROW(razumikhin_verify(tr), PreconditionError);
  tr.V = {0.5, 1.0, 1.0};
  tr.p = 1.0;
  EXPECT_THROW(razumikhin_verify(tr), PreconditionError);
}

TEST(TdsProperty, RazumikhinFromFundamentalSolution) {
  for (std::int64_t T : {0, 2, 4})
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const FundamentalSolution fs(1.0, 0.05, RecursionSchedule::random(80, 2, T, seed));
      for (std::int64_t t0 : {0, 7}) EXPECT_TRUE(razumikhin_verify(lyapunov_from_fundamental(fs, t0)).certified());
    }
}

TEST(Tds, RoughGrowthAtZeroDelay) {
  Matrix H(2, 2);
  H << 1.0, 0.0, 0.0, -0.5;
  Vector x0(2);
  x0 << 1.0, 1.0;
  const auto rep = rough_growth(H, 0.05, DelaySchedule::zeros(50, 2, 0), x0);
  EXPECT_DOUBLE_EQ(rep.q_tilde, 0.1);
  EXPECT_TRUE(rep.precondition);
  EXPECT_TRUE(rep.holds());
  EXPECT_NEAR(rep.V[1], 1.21, 1e-12);
}

TEST(Tds, RoughGrowthPreconditionBoundary) {
  Matrix H = Matrix::Identity(2, 2);
  Vector x0(2);
  x0 << 1.0, 0.0;
  const auto ok = rough_growth(H, 0.1, generate(DelayModel::adversarial_max(), 60, 1, 2, 0), x0);
  EXPECT_NEAR(ok.q_tilde, 0.096, 1e-15);
  EXPECT_TRUE(ok.precondition);
  EXPECT_TRUE(ok.holds());

  // a = 0.5, T = 2: q~ = 0.5 - 0.125 * 4 = 0. The precondition fails while
  // the Razumikhin certificate still holds for the same recursion.
  const auto sch = generate(DelayModel::adversarial_max(), 60, 1, 2, 0);
  const auto edge = rough_growth(H, 0.5, sch, x0);
  EXPECT_NEAR(edge.q_tilde, 0.0, 1e-15);
  EXPECT_FALSE(edge.precondition);
  const FundamentalSolution fs(1.0, 0.5, RecursionSchedule::from_engine(sch));
  EXPECT_TRUE(razumikhin_verify(lyapunov_from_fundamental(fs)).certified());
}

TEST(TdsProperty, SuperpositionMatchesForcedSimulation) {
  Matrix A(3, 3);
  A << 0.4, -0.1, 0.2, -0.1, -0.3, 0.05, 0.2, 0.05, 0.1;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto rs = RecursionSchedule::random(150, 2, 3, seed);
    const MatrixFundamentalSolution F(A, 0.05, rs);
    Stream st = stream_for(seed, {stream_tag::kPerturbation, 99});
    std::vector<Vector> u(150);
    for (auto& v : u) v = st.normal_vector(3, 1.0);
    const auto y = simulate_forced(A, 0.05, rs, u);
    for (std::int64_t t = 0; t <= 150; ++t) {
      const Vector s = superpose(F, u, t);
      EXPECT_LE((s - y[static_cast<std::size_t>(t)]).norm(), 1e-10 * std::max(1.0, s.norm())) << t;
    }
  }
}

TEST(Tds, ScalarMatchesDiagonalMatrixSolution) {
  const auto rs = RecursionSchedule::random(40, 2, 3, 5);
  const FundamentalSolution fs(0.8, 0.1, rs);
  const MatrixFundamentalSolution F(0.8 * Matrix::Identity(2, 2), 0.1, rs);
  for (std::int64_t t0 = 0; t0 <= 40; t0 += 5)
    for (std::int64_t t = t0; t <= 40; ++t) EXPECT_NEAR(F.F(t0, t)(1, 1), fs.f(t0, t), 1e-12 * fs.f(t0, t));
}
