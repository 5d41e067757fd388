#include "poseprior/observation.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/QR>

namespace poseprior {

KeypointObservation KeypointObservation::empty(Eigen::Index num_joints) {
  KeypointObservation obs;
  obs.means.setZero(num_joints, 2);
  obs.covs.assign(num_joints, SymMat2d::isotropic(kFallbackKeypointSigma * kFallbackKeypointSigma));
  obs.valid.assign(num_joints, false);
  obs.cov_fallback.assign(num_joints, true);
  return obs;
}

Eigen::Index KeypointObservation::num_valid() const {
  Eigen::Index n = 0;
  for (bool v : valid) n += v ? 1 : 0;
  return n;
}

void KeypointObservation::check() const {
  const auto n = static_cast<std::size_t>(num_joints());
  if (covs.size() != n || valid.size() != n || cov_fallback.size() != n) {
    throw SchemaError("KeypointObservation: per-joint arrays disagree in length");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (valid[j] && !covs[j].positive_definite()) {
      throw SchemaError("KeypointObservation: covariance of joint " + std::to_string(j) +
                        " is not positive definite");
    }
  }
}

namespace {

void require_same_joints(const Pose& pose, const KeypointObservation& obs) {
  if (pose.num_joints() != obs.num_joints()) {
    throw SchemaError("observation has " + std::to_string(obs.num_joints()) + " joints, pose has " +
                      std::to_string(pose.num_joints()));
  }
}

}  // namespace

double log_likelihood(const Pose& pose, const KeypointObservation& obs, const Camerad& cam) {
  require_same_joints(pose, obs);
  double total = 0.0;
  for (Eigen::Index j = 0; j < obs.num_joints(); ++j) {
    if (!obs.valid[j]) continue;
    const SymMat2d& cov = obs.covs[j];
    const SymMat2d info = spd_inverse_2x2(cov);
    const Eigen::Vector2d r = obs.means.row(j).transpose() - project(pose.joints.row(j).transpose(), cam);
    const double mahalanobis = r.dot(info.matrix() * r);
    total += -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(cov.determinant()) - 0.5 * mahalanobis;
  }
  return total;
}

JointMatrix log_likelihood_grad(const Pose& pose, const KeypointObservation& obs, const Camerad& cam,
                                BehindCameraPolicy policy, int* skipped) {
  require_same_joints(pose, obs);
  JointMatrix grad = JointMatrix::Zero(pose.num_joints(), 3);
  for (Eigen::Index j = 0; j < obs.num_joints(); ++j) {
    if (!obs.valid[j]) continue;
    const Eigen::Vector3d x = pose.joints.row(j).transpose();
    if (!(x(2) > 0.0)) {
      if (policy == BehindCameraPolicy::fail) {
        throw BehindCameraError("joint " + std::to_string(j) + " is behind the camera");
      }
      if (skipped != nullptr) ++*skipped;
      continue;
    }
    const Eigen::Vector2d r = obs.means.row(j).transpose() - project(x, cam);
    grad.row(j) = (projection_jacobian(x, cam).transpose() * (spd_inverse_2x2(obs.covs[j]).matrix() * r)).transpose();
  }
  return grad;
}

JointMatrix sum_sources(std::span<const JointMatrix> grads) {
  if (grads.empty()) throw ArgumentError("sum_sources: no sources");
  JointMatrix total = grads.front();
  for (std::size_t i = 1; i < grads.size(); ++i) {
    if (grads[i].rows() != total.rows()) throw ArgumentError("sum_sources: shape mismatch");
    total += grads[i];
  }
  return total;
}

KeypointObservation transform_covariances(const KeypointObservation& obs, double scale, double theta,
                                          std::span<const double> per_joint_theta) {
  if (!per_joint_theta.empty() && static_cast<Eigen::Index>(per_joint_theta.size()) != obs.num_joints()) {
    throw ArgumentError("transform_covariances: per-joint rotation count does not match joints");
  }
  KeypointObservation out = obs;
  for (Eigen::Index j = 0; j < obs.num_joints(); ++j) {
    if (!out.valid[j]) continue;
    const double angle = per_joint_theta.empty() ? theta : per_joint_theta[j];
    out.covs[j] = rotate_covariance(scale_covariance(out.covs[j], scale), angle);
  }
  return out;
}

KeypointObservation mask_joints(const KeypointObservation& obs, std::span<const int> joints) {
  KeypointObservation out = obs;
  for (int j : joints) {
    if (j < 0 || j >= obs.num_joints()) throw ArgumentError("mask_joints: joint index " + std::to_string(j));
    out.valid[j] = false;
  }
  return out;
}

GaussianFit fit_gaussian_heatmap(const Heatmap& hm, double floor) {
  if ((hm.values < 0).any() || !hm.values.allFinite()) throw ArgumentError("heatmap has negative or non-finite values");
  const double total = hm.values.sum();
  if (!(total > 0.0)) throw InsufficientSupportError("heatmap is all zero");
  const Eigen::ArrayXXd h = hm.values / total;
  const double cutoff = floor * h.maxCoeff();

  std::vector<Eigen::Vector2d> points;
  std::vector<double> weights;
  std::vector<double> logs;
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  double weight_sum = 0.0;
  for (int v = 0; v < hm.height(); ++v) {
    for (int u = 0; u < hm.width(); ++u) {
      const double value = h(v, u);
      if (!(value > cutoff) || value <= 0.0) continue;
      points.push_back(hm.pixel_to_image(u, v));
      weights.push_back(value);
      logs.push_back(std::log(value));
      centroid += value * points.back();
      weight_sum += value;
    }
  }
  if (points.size() < 6) {
    throw InsufficientSupportError("heatmap has " + std::to_string(points.size()) +
                                   " usable pixels, need at least 6");
  }
  centroid /= weight_sum;
  const double scale = hm.stride > 0 ? hm.stride : 1.0;

  // log h ~ k0 + k1 x + k2 y + k3 x^2 + k4 x y + k5 y^2 in centred, stride-scaled coordinates.
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd design(n, 6);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d p = (points[i] - centroid) / scale;
    const double w = std::sqrt(weights[i]);
    design.row(i) << w, w * p.x(), w * p.y(), w * p.x() * p.x(), w * p.x() * p.y(), w * p.y() * p.y();
    rhs(i) = w * logs[i];
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < 6) throw FitFailureError("heatmap support is degenerate for a quadratic fit");
  const Eigen::VectorXd k = qr.solve(rhs);

  // -1/2 (p - m)^T P (p - m) expands to k3 = -P00/2, k4 = -P01, k5 = -P11/2, (k1, k2) = P m.
  const SymMat2d precision{-2.0 * k(3), -k(4), -2.0 * k(5)};
  // A peak needs negative curvature in every direction; flat or saddle-shaped responses are not Gaussian.
  const auto curvature = eig_2x2(precision);
  if (!curvature.values.allFinite() || !(curvature.values(1) > kMinHeatmapCurvature)) {
    throw FitFailureError("log-heatmap is not concave around its peak");
  }
  const double det = precision.determinant();
  const SymMat2d cov_scaled{precision.c / det, -precision.b / det, precision.a / det};
  const Eigen::Vector2d mean_scaled = cov_scaled.matrix() * Eigen::Vector2d(k(1), k(2));

  GaussianFit fit;
  fit.mean = centroid + scale * mean_scaled;
  auto decomposition = eig_2x2(scale * scale * cov_scaled);
  decomposition.values = decomposition.values.cwiseMax(kMinHeatmapEigenvalue);
  fit.cov = SymMat2d::from_matrix(decomposition.vectors * decomposition.values.asDiagonal() *
                                  decomposition.vectors.transpose());
  if (!fit.mean.allFinite() || !fit.cov.positive_definite()) {
    throw FitFailureError("recovered covariance is not positive definite");
  }
  return fit;
}

}  // namespace poseprior
