#pragma once

// Objectives with exact derivatives, stochastic-gradient oracles built on
// them, and the smallest-eigenvalue probe used by every curvature check.

#include "apsgd/error.hpp"
#include "apsgd/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace apsgd {

struct CertifiedConstants {
  double L = 0.0;
  double rho = 0.0;
  double ell = 0.0;
};

class Objective {
 public:
  virtual ~Objective() = default;

  virtual Eigen::Index dim() const = 0;
  virtual double value(const Vector& x) const = 0;
  virtual Vector grad(const Vector& x) const = 0;
  virtual Matrix hessian(const Vector& x) const = 0;
  virtual CertifiedConstants constants() const = 0;
  virtual std::string name() const = 0;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

// f(x) = 1/2 x^T H x
class Quadratic final : public Objective {
 public:
  explicit Quadratic(Matrix H) : H_(std::move(H)) {
    require(H_.rows() == H_.cols() && H_.rows() > 0, "quadratic: H must be square");
    require((H_ - H_.transpose()).cwiseAbs().maxCoeff() == 0.0, "quadratic: H must be symmetric");
    spectral_norm_ = Eigen::SelfAdjointEigenSolver<Matrix>(H_, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff();
  }

  Eigen::Index dim() const override { return H_.rows(); }
  double value(const Vector& x) const override { return 0.5 * x.dot(H_ * x); }
  Vector grad(const Vector& x) const override { return H_ * x; }
  Matrix hessian(const Vector&) const override { return H_; }
  CertifiedConstants constants() const override { return {spectral_norm_, 0.0, spectral_norm_}; }
  std::string name() const override { return "quadratic"; }

  const Matrix& H() const { return H_; }

 private:
  Matrix H_;
  double spectral_norm_ = 0.0;
};

// f(x, y) = 1/2 x^2 - 1/2 gamma y^2 + 1/4 y^4.
// Strict saddle at the origin with lambda_min = -gamma; minima at (0, +-sqrt(gamma)).
// Constants are certified on the box [-R, R]^2.
class Saddle2d final : public Objective {
 public:
  explicit Saddle2d(double gamma, double box = 10.0) : gamma_(gamma), box_(box) {
    require(gamma >= 0, "saddle2d: gamma must be non-negative");
    require(box > 0, "saddle2d: box radius must be positive");
  }

  Eigen::Index dim() const override { return 2; }
  double value(const Vector& v) const override {
    const double x = v[0], y = v[1];
    return 0.5 * x * x - 0.5 * gamma_ * y * y + 0.25 * y * y * y * y;
  }
  Vector grad(const Vector& v) const override {
    Vector g(2);
    g[0] = v[0];
    g[1] = -gamma_ * v[1] + v[1] * v[1] * v[1];
    return g;
  }
  Matrix hessian(const Vector& v) const override {
    Matrix h = Matrix::Zero(2, 2);
    h(0, 0) = 1.0;
    h(1, 1) = -gamma_ + 3.0 * v[1] * v[1];
    return h;
  }
  CertifiedConstants constants() const override {
    const double L = std::max({1.0, gamma_, 3.0 * box_ * box_ - gamma_});
    return {L, 6.0 * box_, L};
  }
  std::string name() const override { return "saddle2d"; }

  double gamma() const { return gamma_; }
  double box() const { return box_; }

 private:
  double gamma_;
  double box_;
};

// (1/n) sum_i f_i with f_i(x) = base(x) + <b_i, x>, sum_i b_i = 0.
// The full gradient is the ordered average of the per-sample gradients.
class FiniteSum final : public Objective {
 public:
  FiniteSum(ObjectivePtr base, std::vector<Vector> shifts) : base_(std::move(base)), shifts_(std::move(shifts)) {
    require(base_ != nullptr, "finite_sum: base objective required");
    require(!shifts_.empty(), "finite_sum: need at least one sample");
    for (const auto& b : shifts_) require(b.size() == base_->dim(), "finite_sum: shift dimension mismatch");
  }

  // n samples with shifts drawn N(0, spread^2/d) per coordinate, then centered.
  static std::shared_ptr<FiniteSum> random(ObjectivePtr base, std::size_t n, double spread, std::uint64_t seed) {
    require(n >= 1, "finite_sum: n must be positive");
    Stream rs = stream_for(seed, {stream_tag::kSampleNoise, n});
    const auto d = base->dim();
    std::vector<Vector> shifts;
    Vector mean = Vector::Zero(d);
    for (std::size_t i = 0; i < n; ++i) {
      shifts.push_back(rs.normal_vector(d, spread / std::sqrt(static_cast<double>(d))));
      mean += shifts.back();
    }
    mean /= static_cast<double>(n);
    for (auto& b : shifts) b -= mean;
    return std::make_shared<FiniteSum>(std::move(base), std::move(shifts));
  }

  std::size_t size() const { return shifts_.size(); }
  const Vector& shift(std::size_t i) const { return shifts_.at(i); }
  const Objective& base() const { return *base_; }

  double sample_value(const Vector& x, std::size_t i) const { return base_->value(x) + shifts_[i].dot(x); }
  Vector sample_grad(const Vector& x, std::size_t i) const { return base_->grad(x) + shifts_[i]; }

  double max_shift_norm() const {
    double m = 0.0;
    for (const auto& b : shifts_) m = std::max(m, b.norm());
    return m;
  }

  Eigen::Index dim() const override { return base_->dim(); }
  double value(const Vector& x) const override {
    double acc = 0.0;
    for (std::size_t i = 0; i < shifts_.size(); ++i) acc += sample_value(x, i);
    return acc / static_cast<double>(shifts_.size());
  }
  Vector grad(const Vector& x) const override {
    Vector acc = Vector::Zero(dim());
    for (std::size_t i = 0; i < shifts_.size(); ++i) acc += sample_grad(x, i);
    return acc / static_cast<double>(shifts_.size());
  }
  Matrix hessian(const Vector& x) const override { return base_->hessian(x); }
  CertifiedConstants constants() const override { return base_->constants(); }
  std::string name() const override { return "finite_sum"; }

 private:
  ObjectivePtr base_;
  std::vector<Vector> shifts_;
};

inline ObjectivePtr make_quadratic(Matrix H) { return std::make_shared<Quadratic>(std::move(H)); }
inline ObjectivePtr make_saddle2d(double gamma, double box = 10.0) { return std::make_shared<Saddle2d>(gamma, box); }

// Stochastic gradient oracle g(x, theta).
//
// For a FiniteSum objective theta selects a sample uniformly. Otherwise
// g(x, theta) = grad(x) + xi(theta), where xi(theta) is N(0, s^2/d) per
// coordinate, conditioned on ||xi|| <= 6 s by rejection. The rejection region
// is symmetric, so the deviation has mean exactly zero; for fixed theta the
// map x -> g(x, theta) has the Lipschitz constant of grad.
class StochasticOracle {
 public:
  static constexpr double kTruncation = 6.0;

  StochasticOracle(ObjectivePtr objective, double s) : objective_(std::move(objective)), s_(s) {
    require(objective_ != nullptr, "oracle: objective required");
    require(s >= 0 && std::isfinite(s), "oracle: noise scale must be non-negative");
    finite_sum_ = dynamic_cast<const FiniteSum*>(objective_.get());
  }

  const Objective& objective() const { return *objective_; }
  const ObjectivePtr& objective_ptr() const { return objective_; }
  double noise_scale() const { return finite_sum_ ? finite_sum_->max_shift_norm() : s_; }
  Eigen::Index dim() const { return objective_->dim(); }

  Vector deviation(SampleKey theta) const {
    const auto d = objective_->dim();
    if (s_ == 0.0) return Vector::Zero(d);
    Stream rs(derive_key(theta, {stream_tag::kSampleNoise}));
    const double coord = s_ / std::sqrt(static_cast<double>(d));
    for (;;) {
      Vector v = rs.normal_vector(d, coord);
      if (v.norm() <= kTruncation * s_) return v;
    }
  }

  Vector sample(const Vector& x, SampleKey theta) const {
    if (finite_sum_) {
      const auto i = static_cast<std::size_t>(theta % finite_sum_->size());
      return finite_sum_->sample_grad(x, i);
    }
    if (s_ == 0.0) return objective_->grad(x);
    return objective_->grad(x) + deviation(theta);
  }

 private:
  ObjectivePtr objective_;
  double s_;
  const FiniteSum* finite_sum_ = nullptr;
};

inline Vector sample_gradient(const StochasticOracle& oracle, const Vector& x, SampleKey theta) {
  require(x.allFinite(), "sample_gradient: x must be finite");
  return oracle.sample(x, theta);
}

struct MinEigResult {
  double lambda_min = 0.0;
  Vector e1;
  // Gap to the next eigenvalue (dense path only; infinity when d == 1 or unknown).
  double gap = std::numeric_limits<double>::infinity();
};

struct MinEigOptions {
  Eigen::Index dense_limit = 64;
  int max_iterations = 200000;
};

// Fix the sign of an eigenvector: largest-magnitude entry positive.
inline void canonical_sign(Vector& v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  if (v[idx] < 0) v = -v;
}

inline MinEigResult min_eig_of(const Matrix& H, double shift_bound, double tol, const MinEigOptions& opts = {}) {
  require(tol > 0, "min_eig: tol must be positive");
  require(H.rows() == H.cols() && H.rows() > 0, "min_eig: square matrix required");
  const Eigen::Index d = H.rows();
  MinEigResult res;
  if (d <= opts.dense_limit) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(H);
    res.lambda_min = es.eigenvalues()[0];
    res.e1 = es.eigenvectors().col(0);
    if (d > 1) res.gap = es.eigenvalues()[1] - es.eigenvalues()[0];
    canonical_sign(res.e1);
    return res;
  }
  // Power iteration on (c I - H), c >= lambda_max(H).
  const double c = std::max(shift_bound, H.cwiseAbs().rowwise().sum().maxCoeff());
  const Matrix B = c * Matrix::Identity(d, d) - H;
  Vector v = Vector::Ones(d) / std::sqrt(static_cast<double>(d));
  // Break symmetry with a fixed deterministic perturbation.
  for (Eigen::Index j = 0; j < d; ++j) v[j] += 1e-3 * static_cast<double>((j * 7919) % 97) / 97.0;
  v.normalize();
  double mu = v.dot(B * v);
  for (int it = 0; it < opts.max_iterations; ++it) {
    Vector w = B * v;
    const double norm = w.norm();
    if (norm == 0.0) break;
    w /= norm;
    const double next = w.dot(B * w);
    const double resid = (B * w - next * w).norm();
    v = std::move(w);
    mu = next;
    if (resid <= tol) {
      res.lambda_min = c - mu;
      res.e1 = v;
      canonical_sign(res.e1);
      return res;
    }
  }
  throw NonConvergenceError("min_eig: power iteration did not converge");
}

inline MinEigResult min_eig(const Objective& objective, const Vector& x, double tol = 1e-10,
                            const MinEigOptions& opts = {}) {
  return min_eig_of(objective.hessian(x), objective.constants().L, tol, opts);
}

}  // namespace apsgd
