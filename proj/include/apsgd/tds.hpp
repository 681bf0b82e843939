#pragma once

// Delayed linear recursion
//
//   x(k) = x(k-1) + eta * sum_m A x(k - tt(k, m)),   k >= 1,
//
// with recursion delays tt(k, m) in [1, T+1] (so the right-hand side only
// involves iterates strictly before k) and zero pre-history. An engine
// schedule tau maps to tt(k, m) = tau(k-1, m) + 1.
//
// The fundamental solution f(t0, t) is the response at t to x(t0) = 1 with
// x(n) = 0 for n < t0.

#include "apsgd/delay.hpp"
#include "apsgd/error.hpp"
#include "apsgd/random.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace apsgd {

inline constexpr double kTdsTolerance = 1e-12;

class RecursionSchedule {
 public:
  RecursionSchedule() = default;

  // tt holds rows k = 1..horizon, M entries each.
  RecursionSchedule(std::int64_t horizon, std::int64_t M, std::int64_t T, std::vector<std::int64_t> tt)
      : horizon_(horizon), M_(M), T_(T), tt_(std::move(tt)) {
    require(horizon >= 0 && M >= 1 && T >= 0, "recursion schedule: need horizon >= 0, M >= 1, T >= 0");
    require(static_cast<std::int64_t>(tt_.size()) == horizon * M, "recursion schedule: need horizon*M delays");
    for (auto v : tt_) require(v >= 1 && v <= T + 1, "recursion schedule: delay outside [1, T+1]");
  }

  static RecursionSchedule from_engine(const DelaySchedule& s) {
    std::vector<std::int64_t> tt(s.data().size());
    for (std::size_t j = 0; j < tt.size(); ++j) tt[j] = s.data()[j] + 1;
    return RecursionSchedule(s.K(), s.M(), s.T(), std::move(tt));
  }

  // Zero effective delay: every term reads x(k-1).
  static RecursionSchedule undelayed(std::int64_t horizon, std::int64_t M) {
    return RecursionSchedule(horizon, M, 0, std::vector<std::int64_t>(static_cast<std::size_t>(horizon * M), 1));
  }

  // Delays uniform on [1, T+1], reads before t0 allowed (they see zero).
  static RecursionSchedule random(std::int64_t horizon, std::int64_t M, std::int64_t T, std::uint64_t seed) {
    Stream rs = stream_for(seed, {stream_tag::kSchedule, 0x746473ULL});
    std::vector<std::int64_t> tt(static_cast<std::size_t>(horizon * M));
    for (auto& v : tt) v = rs.uniform_int(1, T + 1);
    return RecursionSchedule(horizon, M, T, std::move(tt));
  }

  std::int64_t horizon() const { return horizon_; }
  std::int64_t M() const { return M_; }
  std::int64_t T() const { return T_; }
  std::int64_t at(std::int64_t k, std::int64_t m) const { return tt_[static_cast<std::size_t>((k - 1) * M_ + m)]; }
  const std::vector<std::int64_t>& data() const { return tt_; }

  friend bool operator==(const RecursionSchedule& a, const RecursionSchedule& b) {
    return a.horizon_ == b.horizon_ && a.M_ == b.M_ && a.T_ == b.T_ && a.tt_ == b.tt_;
  }

 private:
  std::int64_t horizon_ = 0;
  std::int64_t M_ = 1;
  std::int64_t T_ = 0;
  std::vector<std::int64_t> tt_;
};

inline double growth_rate_q(double a, std::int64_t T) { return a * std::exp(-static_cast<double>(T + 1) * a); }

// Scalar response f(t0, t) for t in [t0, horizon], with growth rate eta*gamma per term.
inline std::vector<double> fundamental_row(double eta_gamma, const RecursionSchedule& s, std::int64_t t0) {
  require(t0 >= 0 && t0 <= s.horizon(), "fundamental_row: need 0 <= t0 <= horizon");
  std::vector<double> f(static_cast<std::size_t>(s.horizon() - t0 + 1), 0.0);
  f[0] = 1.0;
  for (std::int64_t k = t0 + 1; k <= s.horizon(); ++k) {
    double acc = 0.0;
    for (std::int64_t m = 0; m < s.M(); ++m) {
      const auto src = k - s.at(k, m);
      if (src >= t0) acc += f[static_cast<std::size_t>(src - t0)];
    }
    f[static_cast<std::size_t>(k - t0)] = f[static_cast<std::size_t>(k - 1 - t0)] + eta_gamma * acc;
  }
  return f;
}

class FundamentalSolution {
 public:
  FundamentalSolution(double gamma, double eta, const RecursionSchedule& s)
      : gamma_(gamma), eta_(eta), schedule_(s), n_(s.horizon() + 1) {
    require(eta > 0 && std::isfinite(eta) && std::isfinite(gamma), "fundamental_solution: need finite gamma, eta > 0");
    table_.assign(static_cast<std::size_t>(n_ * n_), 0.0);
    for (std::int64_t t0 = 0; t0 < n_; ++t0) {
      const auto row = fundamental_row(eta * gamma, s, t0);
      for (std::int64_t t = t0; t < n_; ++t) table_[idx(t0, t)] = row[static_cast<std::size_t>(t - t0)];
    }
    beta_.resize(static_cast<std::size_t>(n_));
    for (std::int64_t k = 0; k < n_; ++k) {
      double acc = 0.0;
      for (std::int64_t i = 0; i <= k; ++i) acc += f(i, k) * f(i, k);
      beta_[static_cast<std::size_t>(k)] = std::sqrt(acc);
    }
  }

  double gamma() const { return gamma_; }
  double eta() const { return eta_; }
  std::int64_t M() const { return schedule_.M(); }
  std::int64_t T() const { return schedule_.T(); }
  std::int64_t horizon() const { return n_ - 1; }
  const RecursionSchedule& schedule() const { return schedule_; }

  // Zero for t < t0.
  double f(std::int64_t t0, std::int64_t t) const { return t < t0 ? 0.0 : table_[idx(t0, t)]; }
  double beta(std::int64_t k) const { return beta_[static_cast<std::size_t>(k)]; }
  double a() const { return static_cast<double>(M()) * eta_ * gamma_; }
  double q() const { return growth_rate_q(a(), T()); }

 private:
  std::size_t idx(std::int64_t t0, std::int64_t t) const { return static_cast<std::size_t>(t0 * n_ + t); }

  double gamma_;
  double eta_;
  RecursionSchedule schedule_;
  std::int64_t n_;
  std::vector<double> table_;
  std::vector<double> beta_;
};

inline FundamentalSolution fundamental_solution(double gamma, double eta, const RecursionSchedule& s) {
  return FundamentalSolution(gamma, eta, s);
}

// Matrix response F(t0, t) of x(k) = x(k-1) + eta sum_m A x(k - tt). Rows are
// built on first use.
class MatrixFundamentalSolution {
 public:
  MatrixFundamentalSolution(Matrix A, double eta, RecursionSchedule s)
      : A_(std::move(A)), eta_(eta), schedule_(std::move(s)), rows_(static_cast<std::size_t>(schedule_.horizon() + 1)) {
    require(A_.rows() == A_.cols() && A_.rows() > 0, "matrix fundamental solution: A must be square");
    require(A_.rows() <= 64, "matrix fundamental solution: dimension limited to 64");
  }

  const Matrix& A() const { return A_; }
  double eta() const { return eta_; }
  const RecursionSchedule& schedule() const { return schedule_; }
  std::int64_t horizon() const { return schedule_.horizon(); }

  const Matrix& F(std::int64_t t0, std::int64_t t) const {
    require(t0 >= 0 && t0 <= t && t <= horizon(), "matrix fundamental solution: need 0 <= t0 <= t <= horizon");
    return row(t0)[static_cast<std::size_t>(t - t0)];
  }

  const std::vector<Matrix>& row(std::int64_t t0) const {
    auto& r = rows_[static_cast<std::size_t>(t0)];
    if (!r.empty()) return r;
    const auto d = A_.rows();
    const Matrix etaA = eta_ * A_;
    r.reserve(static_cast<std::size_t>(horizon() - t0 + 1));
    r.push_back(Matrix::Identity(d, d));
    for (std::int64_t k = t0 + 1; k <= horizon(); ++k) {
      Matrix acc = Matrix::Zero(d, d);
      for (std::int64_t m = 0; m < schedule_.M(); ++m) {
        const auto src = k - schedule_.at(k, m);
        if (src >= t0) acc += r[static_cast<std::size_t>(src - t0)];
      }
      r.push_back(r.back() + etaA * acc);
    }
    return r;
  }

 private:
  Matrix A_;
  double eta_;
  RecursionSchedule schedule_;
  mutable std::vector<std::vector<Matrix>> rows_;
};

// Solution of the forced recursion y(k) = y(k-1) + eta sum_m A y(k - tt) + u(k-1),
// y(0) = 0, by direct simulation.
inline std::vector<Vector> simulate_forced(const Matrix& A, double eta, const RecursionSchedule& s,
                                           const std::vector<Vector>& u) {
  require(static_cast<std::int64_t>(u.size()) >= s.horizon(), "simulate_forced: need a forcing term per step");
  const auto d = A.rows();
  std::vector<Vector> y(static_cast<std::size_t>(s.horizon() + 1), Vector::Zero(d));
  for (std::int64_t k = 1; k <= s.horizon(); ++k) {
    Vector acc = Vector::Zero(d);
    for (std::int64_t m = 0; m < s.M(); ++m) {
      const auto src = k - s.at(k, m);
      if (src >= 0) acc += y[static_cast<std::size_t>(src)];
    }
    y[static_cast<std::size_t>(k)] = y[static_cast<std::size_t>(k - 1)] + eta * (A * acc) + u[static_cast<std::size_t>(k - 1)];
  }
  return y;
}

// sum_{i < t} F(i+1, t) u(i).
inline Vector superpose(const MatrixFundamentalSolution& F, const std::vector<Vector>& u, std::int64_t t) {
  Vector acc = Vector::Zero(F.A().rows());
  for (std::int64_t i = 0; i < t; ++i) acc += F.F(i + 1, t) * u[static_cast<std::size_t>(i)];
  return acc;
}

struct GrowthViolation {
  std::int64_t k = 0;
  std::int64_t t = 0;
  double ratio = 0.0;     // f(k, t+1) / f(k, t)
  double required = 0.0;  // 1 + q
};

// f(k, t+1) >= (1 + q) f(k, t) whenever t - k >= T.
inline std::vector<GrowthViolation> check_growth(const FundamentalSolution& fs) {
  std::vector<GrowthViolation> out;
  const double need = 1.0 + fs.q();
  for (std::int64_t k = 0; k <= fs.horizon(); ++k)
    for (std::int64_t t = k + fs.T(); t + 1 <= fs.horizon(); ++t) {
      const double lhs = fs.f(k, t + 1);
      const double rhs = need * fs.f(k, t);
      if (lhs < rhs * (1.0 - kTdsTolerance)) out.push_back({k, t, lhs / fs.f(k, t), need});
    }
  return out;
}

struct FPropertiesReport {
  std::int64_t submultiplicative_violations = 0;  // f(t0,t1) f(t1,t2) <= f(t0,t2)
  std::int64_t monotone_violations = 0;           // f(t1, t) non-decreasing in t
  std::int64_t beta_transfer_violations = 0;      // f(k, t) beta(k) <= beta(t)
  std::int64_t beta_growth_violations = 0;        // beta^2 lower bound below
  std::int64_t beta_growth_checked = 0;           // indices where the beta^2 bound applies
  bool all_pass() const {
    return submultiplicative_violations == 0 && monotone_violations == 0 && beta_transfer_violations == 0 &&
           beta_growth_violations == 0;
  }
};

namespace tds_detail {

inline bool le_tol(double a, double b) { return a <= b + kTdsTolerance * std::max(std::abs(a), std::abs(b)); }

// beta^2(k) >= (1+q)^{2(k-T)} / (6q) for k - T >= ln 2 / q.
inline bool beta_growth_applies(std::int64_t k, std::int64_t T, double q) {
  return q > 0 && static_cast<double>(k - T) >= std::log(2.0) / q;
}
inline double beta_growth_bound(std::int64_t k, std::int64_t T, double q) {
  return std::exp(2.0 * static_cast<double>(k - T) * std::log1p(q)) / (6.0 * q);
}

}  // namespace tds_detail

inline FPropertiesReport check_f_properties(const FundamentalSolution& fs) {
  using tds_detail::le_tol;
  FPropertiesReport rep;
  const auto H = fs.horizon();
  const double q = fs.q();
  for (std::int64_t t0 = 0; t0 <= H; ++t0)
    for (std::int64_t t1 = t0; t1 <= H; ++t1)
      for (std::int64_t t2 = t1; t2 <= H; ++t2)
        if (!le_tol(fs.f(t0, t1) * fs.f(t1, t2), fs.f(t0, t2))) ++rep.submultiplicative_violations;
  for (std::int64_t t1 = 0; t1 <= H; ++t1)
    for (std::int64_t t2 = t1 + 1; t2 <= H; ++t2)
      if (!le_tol(fs.f(t1, t2 - 1), fs.f(t1, t2))) ++rep.monotone_violations;
  for (std::int64_t k = 0; k <= H; ++k)
    for (std::int64_t t = k; t <= H; ++t)
      if (!le_tol(fs.f(k, t) * fs.beta(k), fs.beta(t))) ++rep.beta_transfer_violations;
  for (std::int64_t k = 0; k <= H; ++k) {
    if (!tds_detail::beta_growth_applies(k, fs.T(), q)) continue;
    ++rep.beta_growth_checked;
    if (!le_tol(tds_detail::beta_growth_bound(k, fs.T(), q), fs.beta(k) * fs.beta(k))) ++rep.beta_growth_violations;
  }
  return rep;
}

struct EnumerationReport {
  std::int64_t schedules = 0;  // every prefix counts as a schedule
  std::int64_t growth_violations = 0;
  FPropertiesReport properties;
};

// Depth-first enumeration of every recursion schedule with M = 1, delays in
// [1, T+1], and horizon up to `horizon`. Each node extends its parent's
// fundamental solution by one column and checks every property whose latest
// index is the new one, so each prefix schedule is fully checked exactly once.
// Without `check_properties` only the growth bound and monotonicity are checked.
inline EnumerationReport enumerate_schedules(double eta_gamma, std::int64_t T, std::int64_t horizon,
                                             bool check_properties = true) {
  require(T >= 0 && horizon >= 0 && horizon <= 30, "enumerate_schedules: need T >= 0, 0 <= horizon <= 30");
  using tds_detail::le_tol;
  const std::int64_t n = horizon + 1;
  const double q = growth_rate_q(eta_gamma, T);
  const double grow = 1.0 + q;
  std::vector<double> f(static_cast<std::size_t>(n * n), 0.0);
  std::vector<double> beta(static_cast<std::size_t>(n), 0.0);
  auto F = [&](std::int64_t t0, std::int64_t t) -> double& { return f[static_cast<std::size_t>(t0 * n + t)]; };
  for (std::int64_t t0 = 0; t0 < n; ++t0) F(t0, t0) = 1.0;
  beta[0] = 1.0;
  EnumerationReport rep;
  rep.schedules = 1;

  std::function<void(std::int64_t)> visit = [&](std::int64_t t) {
    if (t > horizon) return;
    for (std::int64_t tt = 1; tt <= T + 1; ++tt) {
      ++rep.schedules;
      const auto src = t - tt;
      double bsq = 1.0;
      for (std::int64_t t0 = 0; t0 < t; ++t0) {
        const double prev = F(t0, t - 1);
        const double next = prev + eta_gamma * (src >= t0 ? F(t0, src) : 0.0);
        F(t0, t) = next;
        bsq += next * next;
        if (!le_tol(prev, next)) ++rep.properties.monotone_violations;
        if (t - 1 - t0 >= T && next < grow * prev * (1.0 - kTdsTolerance)) ++rep.growth_violations;
      }
      beta[static_cast<std::size_t>(t)] = std::sqrt(bsq);
      if (!check_properties) {
        visit(t + 1);
        continue;
      }
      // Row t0 of a schedule is row 0 of the schedule shifted by t0, which is
      // itself enumerated, so submultiplicativity only needs t0 = 0.
      for (std::int64_t t1 = 0; t1 <= t; ++t1)
        if (!le_tol(F(0, t1) * F(t1, t), F(0, t))) ++rep.properties.submultiplicative_violations;
      for (std::int64_t k = 0; k <= t; ++k)
        if (!le_tol(F(k, t) * beta[static_cast<std::size_t>(k)], beta[static_cast<std::size_t>(t)]))
          ++rep.properties.beta_transfer_violations;
      if (tds_detail::beta_growth_applies(t, T, q)) {
        ++rep.properties.beta_growth_checked;
        if (!le_tol(tds_detail::beta_growth_bound(t, T, q), bsq)) ++rep.properties.beta_growth_violations;
      }
      visit(t + 1);
    }
  };
  visit(1);
  return rep;
}

struct LyapunovTrace {
  std::vector<double> V;  // V[j] is V(j - T)
  std::int64_t T = 0;
  double q = 0.0;
  double q_m = 1.0;
  double p = 1.0;

  double at(std::int64_t t) const { return V[static_cast<std::size_t>(t + T)]; }
  std::int64_t last() const { return static_cast<std::int64_t>(V.size()) - 1 - T; }
};

struct RazumikhinCertificate {
  bool bounded_difference = true;          // V(t+1) >= q_m V(t)
  std::int64_t first_a_failure = -1;
  bool razumikhin = true;                  // growth by 1+q whenever the history stays above the lag bound
  std::int64_t first_b_failure = -1;
  std::int64_t b_triggered = 0;            // indices where the history hypothesis held
  bool conclusion_checked = false;
  bool conclusion = false;
  std::int64_t first_conclusion_failure = -1;
  bool certified() const { return bounded_difference && razumikhin && conclusion_checked && conclusion; }
};

inline RazumikhinCertificate razumikhin_verify(const LyapunovTrace& tr) {
  require(tr.T >= 0 && static_cast<std::int64_t>(tr.V.size()) >= tr.T + 1, "razumikhin: trace must cover [-T, 0]");
  require(tr.p > 0 && tr.p <= 1, "razumikhin: p must lie in (0, 1]");
  require(tr.q_m > 0 && tr.q > -1, "razumikhin: need q_m > 0 and q > -1");
  for (double v : tr.V) require(v > 0 && std::isfinite(v), "razumikhin: V must be positive and finite");
  const double V0 = tr.at(0);
  for (std::int64_t t = -tr.T; t <= 0; ++t)
    require(tr.at(t) >= tr.p * V0, "razumikhin: initial segment violates V(t) >= p V(0)");

  RazumikhinCertificate c;
  const double lag = std::pow(1.0 + tr.q, -static_cast<double>(tr.T)) * tr.q_m / (1.0 + tr.q);
  for (std::int64_t t = 0; t < tr.last(); ++t) {
    const double vt = tr.at(t), vn = tr.at(t + 1);
    if (c.bounded_difference && vn < tr.q_m * vt * (1.0 - kTdsTolerance)) {
      c.bounded_difference = false;
      c.first_a_failure = t;
    }
    bool hyp = true;
    for (std::int64_t tau = 0; tau <= tr.T && hyp; ++tau) hyp = tr.at(t - tau) >= lag * vt;
    if (hyp) {
      ++c.b_triggered;
      if (c.razumikhin && vn < (1.0 + tr.q) * vt * (1.0 - kTdsTolerance)) {
        c.razumikhin = false;
        c.first_b_failure = t;
      }
    }
  }
  if (!c.bounded_difference || !c.razumikhin) return c;
  c.conclusion_checked = true;
  c.conclusion = true;
  for (std::int64_t t = 1; t <= tr.last(); ++t) {
    const double bound = std::pow(1.0 + tr.q, static_cast<double>(t)) * tr.p * V0;
    if (tr.at(t) < bound * (1.0 - kTdsTolerance)) {
      c.conclusion = false;
      c.first_conclusion_failure = t;
      break;
    }
  }
  return c;
}

// V(s) = f(t0, t0 + T + s) for s >= -T, with q from the growth bound,
// q_m = 1 and p = 1 / f(t0, t0 + T).
inline LyapunovTrace lyapunov_from_fundamental(const FundamentalSolution& fs, std::int64_t t0 = 0) {
  require(t0 + fs.T() <= fs.horizon(), "lyapunov_from_fundamental: horizon shorter than T");
  LyapunovTrace tr;
  tr.T = fs.T();
  tr.q = fs.q();
  tr.q_m = 1.0;
  for (std::int64_t t = t0; t <= fs.horizon(); ++t) tr.V.push_back(fs.f(t0, t));
  tr.p = 1.0 / fs.f(t0, t0 + fs.T());
  return tr;
}

struct RoughGrowthReport {
  double a = 0.0;        // M eta gamma
  double q_tilde = 0.0;  // a - a^3 T^2
  bool precondition = false;
  std::vector<double> V;
  std::vector<std::int64_t> violations;  // n where the applicable bound fails
  bool holds() const { return violations.empty(); }
};

// x(n+1) = x(n) + sum_i eta H x(n - tau(n, i)) on an engine schedule, with
// V(n) = x(n)^T P x(n) and P the projector onto the top eigenspace of H.
// Checks V(n+1) >= (1 + q~) V(n) for n > T and V(n+1) >= V(n) for n <= T.
// Violations are always collected; they only refute the bound when the
// precondition q~ > 0 holds.
inline RoughGrowthReport rough_growth(const Matrix& H, double eta, const DelaySchedule& s, const Vector& x0) {
  require(H.rows() == H.cols() && H.rows() == x0.size(), "rough_growth: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Matrix> es(H);
  const auto d = H.rows();
  const double gamma = es.eigenvalues()[d - 1];
  require(gamma > 0, "rough_growth: H needs a positive top eigenvalue");
  Matrix P = Matrix::Zero(d, d);
  const double tol = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < d; ++j)
    if (es.eigenvalues()[j] >= gamma - tol) P += es.eigenvectors().col(j) * es.eigenvectors().col(j).transpose();

  RoughGrowthReport rep;
  const double T = static_cast<double>(s.T());
  rep.a = static_cast<double>(s.M()) * eta * gamma;
  rep.q_tilde = rep.a - rep.a * rep.a * rep.a * T * T;
  rep.precondition = rep.q_tilde > 0;

  std::vector<Vector> x{x0};
  rep.V.push_back(x0.dot(P * x0));
  const Matrix etaH = eta * H;
  for (std::int64_t n = 0; n < s.K(); ++n) {
    Vector acc = Vector::Zero(d);
    for (std::int64_t i = 0; i < s.M(); ++i) acc += x[static_cast<std::size_t>(n - s(n, i))];
    x.push_back(x.back() + etaH * acc);
    rep.V.push_back(x.back().dot(P * x.back()));
    const double vn = rep.V[static_cast<std::size_t>(n)], vnext = rep.V.back();
    const double need = n > s.T() ? (1.0 + rep.q_tilde) * vn : vn;
    if (vnext < need * (1.0 - kTdsTolerance)) rep.violations.push_back(n);
  }
  return rep;
}

}  // namespace apsgd
