#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "poseprior/geometry.hpp"
#include "poseprior/numeric.hpp"

namespace poseprior {

/// Keypoint noise used when a detector reports no covariance: sigma = 2 px.
inline constexpr double kFallbackKeypointSigma = 2.0;

/// Per-joint 2D Gaussian detections. Invalid joints carry no information.
struct KeypointObservation {
  Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> means;
  std::vector<SymMat2d> covs;
  std::vector<bool> valid;
  std::vector<bool> cov_fallback;  // covariance was filled from kFallbackKeypointSigma

  static KeypointObservation empty(Eigen::Index num_joints);

  Eigen::Index num_joints() const { return means.rows(); }
  Eigen::Index num_valid() const;
  void check() const;

  bool operator==(const KeypointObservation& o) const {
    return means == o.means && covs == o.covs && valid == o.valid && cov_fallback == o.cov_fallback;
  }
};

enum class BehindCameraPolicy { fail, skip };

double log_likelihood(const Pose& pose, const KeypointObservation& obs, const Camerad& cam);

/// Row j is J_pi(x_j)^T Sigma_j^{-1} (c_j - pi(x_j)) for valid joints, zero otherwise.
/// Under BehindCameraPolicy::skip, valid joints at non-positive depth get a zero
/// row and are counted in *skipped.
JointMatrix log_likelihood_grad(const Pose& pose, const KeypointObservation& obs, const Camerad& cam,
                                BehindCameraPolicy policy = BehindCameraPolicy::fail, int* skipped = nullptr);

JointMatrix sum_sources(std::span<const JointMatrix> grads);

template <typename Scalar>
SymMat2<Scalar> scale_covariance(const SymMat2<Scalar>& cov, Scalar s) {
  if (!(s > Scalar(0))) throw ArgumentError("scale_covariance: scale must be positive");
  return s * cov;
}

/// R(theta) Sigma R(theta)^T.
template <typename Scalar>
SymMat2<Scalar> rotate_covariance(const SymMat2<Scalar>& cov, Scalar theta) {
  using std::cos;
  using std::sin;
  Eigen::Matrix<Scalar, 2, 2> rot;
  rot << cos(theta), -sin(theta), sin(theta), cos(theta);
  return SymMat2<Scalar>::from_matrix(rot * cov.matrix() * rot.transpose());
}

/// Applies scale then rotation to every valid joint's covariance. An empty
/// per_joint_theta means the global theta applies to all joints.
KeypointObservation transform_covariances(const KeypointObservation& obs, double scale, double theta,
                                          std::span<const double> per_joint_theta = {});

KeypointObservation mask_joints(const KeypointObservation& obs, std::span<const int> joints);

/// Detector heatmap. values(v, u) is the response at image point
/// (origin_x + stride * u, origin_y + stride * v).
struct Heatmap {
  Eigen::ArrayXXd values;  // height x width
  double origin_x = 0.0;
  double origin_y = 0.0;
  double stride = 1.0;

  int width() const { return static_cast<int>(values.cols()); }
  int height() const { return static_cast<int>(values.rows()); }
  Eigen::Vector2d pixel_to_image(int u, int v) const { return {origin_x + stride * u, origin_y + stride * v}; }
};

struct GaussianFit {
  Eigen::Vector2d mean;
  SymMat2d cov;
};

inline constexpr double kHeatmapFloor = 1e-6;
inline constexpr double kMinHeatmapEigenvalue = 0.25;
/// Smallest accepted precision eigenvalue of the log-quadratic, per squared grid cell.
inline constexpr double kMinHeatmapCurvature = 1e-10;

/// Fits log H to a log-Gaussian by value-weighted linear least squares over
/// pixels above floor * peak.
GaussianFit fit_gaussian_heatmap(const Heatmap& hm, double floor = kHeatmapFloor);

}  // namespace poseprior
