#include "apsgd/params.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace apsgd;

namespace {

BaseConfig unit_base() {
  BaseConfig b;
  b.L = 1;
  b.rho = 1;
  b.s = 1;
  b.r = 1;
  b.M = 1;
  b.T = 0;
  b.epsilon = 0.1;
  b.w = 1;
  return b;
}

}  // namespace

TEST(Params, StepSizeFromAccuracyAndNoise) {
  const auto h = derive_params(unit_base());
  EXPECT_DOUBLE_EQ(h.sigma2(), 2.0);
  EXPECT_DOUBLE_EQ(h.eta, 0.005);
}

TEST(Params, ZeroDelayZeroBlockThreshold) {
  EXPECT_EQ(derive_params(unit_base()).F, 0.0);
}

TEST(Params, BlockThresholdValue) {
  auto b = unit_base();
  b.T = 10;
  const auto h = derive_params(b);
  EXPECT_EQ(h.c, 4.0);
  EXPECT_NEAR(h.F, 24.0, 1e-12);
}

TEST(Params, LedgerConstantsIndependentEvaluation) {
  for (std::int64_t d : {1, 2, 5, 100}) {
    auto b = unit_base();
    b.d = d;
    const auto h = derive_params(b);
    const double bb = std::log(4.0 * (d + 1.0));
    const double C = 4.0 * std::sqrt(192.0) + 4.0 * bb;
    EXPECT_NEAR(h.b, bb, 1e-14);
    EXPECT_NEAR(h.C, C, 1e-12);
    EXPECT_NEAR(h.p, 1.0 / (1.0 + C), 1e-15);
    EXPECT_NEAR(h.c2, std::log(96.0 * (d + 1.0)), 1e-14);
  }
}

TEST(Params, DerivedQuantitiesMatchClosedForms) {
  BaseConfig b;
  b.L = 2;
  b.rho = 0.5;
  b.s = 0.7;
  b.r = 0.4;
  b.d = 3;
  b.M = 4;
  b.T = 3;
  b.epsilon = 0.2;
  b.w = 50;
  b.u = 2;
  b.B = 1.5;
  const auto h = derive_params(b);
  const double s2 = 0.49 + 0.16;
  const double eta = 0.04 / (50 * s2 * 2);
  const double gam = std::sqrt(0.1) / 2;
  const double a = 4 * eta * gam;
  const auto Tm = 3 + static_cast<std::int64_t>(std::ceil(2 * std::exp(4 * a) / a));
  EXPECT_NEAR(h.eta, eta, 1e-16);
  EXPECT_NEAR(h.gamma, gam, 1e-15);
  EXPECT_NEAR(h.f_exp, 4 * a, 1e-15);
  EXPECT_EQ(h.T_max, Tm);
  EXPECT_NEAR(h.F, 60 * 4 * s2 * eta * 2 * 3, 1e-12);
  EXPECT_NEAR(h.F2, Tm * eta * 2 * s2, 1e-10);
  EXPECT_NEAR(h.q, a * std::exp(-4 * a), 1e-16);
  const double S = 1.5 * std::sqrt(2 * eta * 4 * Tm) * eta * 2 * std::sqrt(double(Tm)) * std::sqrt(s2);
  EXPECT_NEAR(h.S, S, 1e-12 * S);
  EXPECT_GT(h.q, 0);
}

TEST(Params, RejectsBadInputs) {
  auto b = unit_base();
  b.L = 0;
  EXPECT_THROW(derive_params(b), PreconditionError);
  b = unit_base();
  b.M = 0;
  EXPECT_THROW(derive_params(b), PreconditionError);
  b = unit_base();
  b.T = -1;
  EXPECT_THROW(derive_params(b), PreconditionError);
  b = unit_base();
  b.w = -1;
  EXPECT_THROW(derive_params(b), PreconditionError);
  b = unit_base();
  b.epsilon = 4.0;  // sqrt(rho eps) = 2 > L
  EXPECT_THROW(derive_params(b), PreconditionError);
}

TEST(Params, StepBoundaryAndViolation) {
  auto b = unit_base();
  b.M = 2;
  b.T = 3;
  b.eta = 1.0 / (3.0 * 2 * 1 * 4);
  auto rep = check_conditions(derive_params(b));
  EXPECT_TRUE(rep.passed("a.step"));
  b.eta = 1.0 / (2.0 * 4);
  rep = check_conditions(derive_params(b));
  EXPECT_FALSE(rep.passed("a.step"));
  EXPECT_FALSE(rep.feasible);
}

TEST(Params, FeasibleIffEveryConditionHolds) {
  for (double w : {1.0, 10.0, 1e3, 1e6, 1e9}) {
    auto b = unit_base();
    b.w = w;
    b.T = 2;
    b.M = 4;
    const auto rep = check_conditions(derive_params(b));
    ASSERT_EQ(rep.conditions.size(), 9u);
    bool all = true;
    for (const auto& c : rep.conditions) all = all && c.satisfied;
    EXPECT_EQ(rep.feasible, all);
  }
}

TEST(Params, WorkerBounds) {
  auto [a, b] = worker_bounds(1e6, 1);
  EXPECT_NEAR(a, 1000, 1e-9);
  EXPECT_NEAR(b, 100, 1e-9);
  std::tie(a, b) = worker_bounds(7, 7);
  EXPECT_DOUBLE_EQ(a, 1);
  EXPECT_DOUBLE_EQ(b, 1);
  std::tie(a, b) = worker_bounds(8e3, 8);
  EXPECT_NEAR(a, std::sqrt(1000.0), 1e-12);
  EXPECT_NEAR(b, 10, 1e-12);
}

TEST(ParamsProperty, NoiseRescalingLeavesBlockThresholdInvariant) {
  auto b = unit_base();
  b.T = 4;
  b.M = 2;
  const auto h0 = derive_params(b);
  for (double lam : {0.25, 0.5, 2.0, 7.0}) {
    auto bl = b;
    bl.s *= lam;
    bl.r *= lam;
    const auto h = derive_params(bl);
    EXPECT_NEAR(h.sigma, lam * h0.sigma, 1e-14 * lam);
    EXPECT_NEAR(h.eta, h0.eta / (lam * lam), 1e-14 * h0.eta / (lam * lam));
    EXPECT_NEAR(h.F, h0.F, 1e-12 * h0.F);
  }
}

TEST(ParamsProperty, GrowthRateDecreasesInDelay) {
  for (double w : {1.0, 30.0, 500.0}) {
    double prev = std::numeric_limits<double>::infinity();
    for (std::int64_t T = 0; T <= 40; ++T) {
      auto b = unit_base();
      b.w = w;
      b.M = 3;
      b.T = T;
      const double q = derive_params(b).q;
      EXPECT_LT(q, prev);
      EXPECT_GT(q, 0);
      prev = q;
    }
  }
}

TEST(ParamsProperty, SearchFindsFeasiblePointAcrossConfigs) {
  for (std::int64_t d : {2, 4}) {
    for (std::int64_t T : {1, 2, 3}) {
      BaseConfig b;
      b.d = d;
      b.M = 4;
      b.T = T;
      b.epsilon = 0.05;
      const auto res = feasible_search(b);
      ASSERT_TRUE(res.found) << "d=" << d << " T=" << T;
      EXPECT_TRUE(res.report.feasible);
      // The returned point re-derives to the same feasible report.
      EXPECT_TRUE(check_conditions(derive_params(res.base)).feasible);
    }
  }
}
