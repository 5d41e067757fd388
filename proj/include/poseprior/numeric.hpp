#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "poseprior/errors.hpp"

namespace poseprior {

/// Symmetric 2x2 matrix [[a, b], [b, c]]. Used for per-joint pixel covariances.
template <typename Scalar>
struct SymMat2 {
  Scalar a{1};
  Scalar b{0};
  Scalar c{1};

  static SymMat2 identity() { return {Scalar(1), Scalar(0), Scalar(1)}; }
  static SymMat2 isotropic(Scalar variance) { return {variance, Scalar(0), variance}; }
  static SymMat2 from_matrix(const Eigen::Matrix<Scalar, 2, 2>& m) {
    return {m(0, 0), Scalar(0.5) * (m(0, 1) + m(1, 0)), m(1, 1)};
  }

  Eigen::Matrix<Scalar, 2, 2> matrix() const {
    Eigen::Matrix<Scalar, 2, 2> m;
    m << a, b, b, c;
    return m;
  }

  Scalar determinant() const { return a * c - b * b; }
  bool positive_definite() const { return a > 0 && determinant() > 0; }

  bool operator==(const SymMat2&) const = default;
};

using SymMat2d = SymMat2<double>;

template <typename Scalar>
SymMat2<Scalar> operator*(Scalar s, const SymMat2<Scalar>& m) {
  return {s * m.a, s * m.b, s * m.c};
}

template <typename Scalar>
SymMat2<Scalar> spd_inverse_2x2(const SymMat2<Scalar>& m) {
  const Scalar det = m.determinant();
  if (!(m.a > 0) || !(det > 0)) {
    throw DefinitenessError("spd_inverse_2x2: matrix is not positive definite");
  }
  return {m.c / det, -m.b / det, m.a / det};
}

template <typename Scalar>
struct Eigen2 {
  Eigen::Matrix<Scalar, 2, 1> values;   // descending
  Eigen::Matrix<Scalar, 2, 2> vectors;  // column i pairs with values(i)
};

/// Closed-form eigendecomposition of a symmetric 2x2 matrix.
template <typename Scalar>
Eigen2<Scalar> eig_2x2(const SymMat2<Scalar>& m) {
  using std::abs;
  using std::hypot;
  using std::sqrt;
  const Scalar half_trace = Scalar(0.5) * (m.a + m.c);
  const Scalar half_diff = Scalar(0.5) * (m.a - m.c);
  const Scalar radius = hypot(half_diff, m.b);
  Eigen2<Scalar> out;
  out.values << half_trace + radius, half_trace - radius;
  if (radius == Scalar(0)) {
    out.vectors.setIdentity();
    return out;
  }
  // Pick the better conditioned of the two null-space rows of (m - lambda I).
  Eigen::Matrix<Scalar, 2, 1> v;
  const Scalar lambda = out.values(0);
  if (abs(m.a - lambda) + abs(m.b) >= abs(m.c - lambda) + abs(m.b)) {
    v << m.b, lambda - m.a;
    if (v.squaredNorm() == Scalar(0)) v << Scalar(1), Scalar(0);
  } else {
    v << lambda - m.c, m.b;
    if (v.squaredNorm() == Scalar(0)) v << Scalar(0), Scalar(1);
  }
  v.normalize();
  out.vectors.col(0) = v;
  out.vectors.col(1) << -v(1), v(0);
  return out;
}

template <typename Scalar>
struct Svd3 {
  Eigen::Matrix<Scalar, 3, 3> U;
  Eigen::Matrix<Scalar, 3, 1> singular_values;  // descending
  Eigen::Matrix<Scalar, 3, 3> V;
};

template <typename Derived>
Svd3<typename Derived::Scalar> svd_3x3(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  static_assert(Derived::RowsAtCompileTime == 3 && Derived::ColsAtCompileTime == 3,
                "svd_3x3 expects a 3x3 matrix");
  Eigen::JacobiSVD<Eigen::Matrix<Scalar, 3, 3>> svd(m.eval(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

/// Identifies one reproducible random sequence. Distinct stream ids under one
/// seed give independent sequences.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

class Rng {
 public:
  explicit Rng(RngStream id) : id_(id), engine_(seeded(id)) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : Rng(RngStream{seed, stream}) {}

  const RngStream& id() const { return id_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [lo, hi].
  long uniform_int(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(engine_); }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

 private:
  static std::mt19937_64 seeded(RngStream id) {
    std::seed_seq seq{static_cast<std::uint32_t>(id.seed), static_cast<std::uint32_t>(id.seed >> 32),
                      static_cast<std::uint32_t>(id.stream), static_cast<std::uint32_t>(id.stream >> 32),
                      0x9e3779b9u};
    return std::mt19937_64(seq);
  }

  RngStream id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Draw from N(mean, diag(variances)).
template <typename DerivedMean, typename DerivedVar>
Eigen::VectorXd gauss_sample(Rng& rng, const Eigen::MatrixBase<DerivedMean>& mean,
                             const Eigen::MatrixBase<DerivedVar>& variances) {
  if (mean.size() != variances.size()) throw ArgumentError("gauss_sample: dimension mismatch");
  if ((variances.array() < 0).any()) throw DefinitenessError("gauss_sample: negative variance");
  Eigen::VectorXd out(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    out(i) = mean(i) + std::sqrt(double(variances(i))) * rng.normal();
  }
  return out;
}

/// Draw from a 2D Gaussian with a full (positive semi-definite) covariance.
inline Eigen::Vector2d gauss_sample(Rng& rng, const Eigen::Vector2d& mean, const SymMat2d& cov) {
  if (cov.a < 0 || cov.c < 0 || cov.determinant() < -1e-12 * (cov.a * cov.c + 1.0)) {
    throw DefinitenessError("gauss_sample: covariance is not positive semi-definite");
  }
  const double z0 = rng.normal();
  const double z1 = rng.normal();
  // Lower Cholesky factor, tolerant of a zero leading entry.
  const double l00 = std::sqrt(cov.a);
  const double l10 = l00 > 0 ? cov.b / l00 : 0.0;
  const double l11 = std::sqrt(std::max(0.0, cov.c - l10 * l10));
  return {mean(0) + l00 * z0, mean(1) + l10 * z0 + l11 * z1};
}

}  // namespace poseprior
