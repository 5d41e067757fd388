#pragma once

#include <Eigen/Core>

#include "poseprior/errors.hpp"
#include "poseprior/numeric.hpp"

namespace poseprior {

/// Pinhole intrinsics in pixels. No distortion.
template <typename Scalar>
struct Camera {
  Scalar fx{1};
  Scalar fy{1};
  Scalar cx{0};
  Scalar cy{0};

  bool operator==(const Camera&) const = default;
};

using Camerad = Camera<double>;

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 2, 1> project(const Eigen::MatrixBase<Derived>& point,
                                                      const Camera<typename Derived::Scalar>& cam) {
  using Scalar = typename Derived::Scalar;
  const Scalar z = point(2);
  if (!(z > Scalar(0))) throw BehindCameraError("project: point has non-positive depth");
  return {cam.fx * point(0) / z + cam.cx, cam.fy * point(1) / z + cam.cy};
}

/// d project / d point, a 2x3 matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 2, 3> projection_jacobian(const Eigen::MatrixBase<Derived>& point,
                                                                 const Camera<typename Derived::Scalar>& cam) {
  using Scalar = typename Derived::Scalar;
  const Scalar z = point(2);
  if (!(z > Scalar(0))) throw BehindCameraError("projection_jacobian: point has non-positive depth");
  const Scalar inv_z = Scalar(1) / z;
  Eigen::Matrix<Scalar, 2, 3> jac;
  jac << cam.fx * inv_z, Scalar(0), -cam.fx * point(0) * inv_z * inv_z,  //
      Scalar(0), cam.fy * inv_z, -cam.fy * point(1) * inv_z * inv_z;
  return jac;
}

/// J x 3 joint positions in millimeters, one joint per row. Row-major so the
/// storage is the flat (x0, y0, z0, x1, ...) vector the denoiser consumes.
using JointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

enum class PoseFrame { root_relative, absolute_camera };

struct Pose {
  JointMatrix joints;
  PoseFrame frame = PoseFrame::root_relative;
  int root_index = 0;

  Eigen::Index num_joints() const { return joints.rows(); }

  Eigen::Map<const Eigen::VectorXd> flat() const { return {joints.data(), joints.size()}; }
  Eigen::Map<Eigen::VectorXd> flat() { return {joints.data(), joints.size()}; }

  static Pose from_flat(const Eigen::Ref<const Eigen::VectorXd>& flat, PoseFrame frame, int root_index = 0);
};

inline Pose Pose::from_flat(const Eigen::Ref<const Eigen::VectorXd>& flat, PoseFrame frame, int root_index) {
  if (flat.size() % 3 != 0) throw ArgumentError("Pose::from_flat: length is not a multiple of 3");
  Pose pose;
  pose.joints = Eigen::Map<const JointMatrix>(flat.data(), flat.size() / 3, 3);
  pose.frame = frame;
  pose.root_index = root_index;
  return pose;
}

inline Pose to_root_relative(const Pose& pose) {
  if (pose.root_index < 0 || pose.root_index >= pose.num_joints()) {
    throw ArgumentError("to_root_relative: root index out of range");
  }
  Pose out = pose;
  const Eigen::RowVector3d root = pose.joints.row(pose.root_index);
  out.joints.rowwise() -= root;
  out.frame = PoseFrame::root_relative;
  return out;
}

/// Translates a root-relative pose to the camera frame. Joints that end up at
/// non-positive depth are left in place; projection rejects them later.
inline Pose to_absolute(const Pose& pose, const Eigen::Vector3d& root) {
  if (pose.frame != PoseFrame::root_relative) throw ArgumentError("to_absolute: pose is not root-relative");
  Pose out = pose;
  out.joints.rowwise() += root.transpose();
  out.frame = PoseFrame::absolute_camera;
  return out;
}

inline bool all_in_front(const Pose& pose) { return (pose.joints.col(2).array() > 0).all(); }

struct RootEstimate {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d variance = Eigen::Vector3d::Zero();  // diagonal of the covariance, mm^2

  bool operator==(const RootEstimate&) const = default;
};

/// Default root uncertainty when an observation carries none: 100 mm laterally, 200 mm in depth.
inline const Eigen::Vector3d kDefaultRootVariance{100.0 * 100.0, 100.0 * 100.0, 200.0 * 200.0};

inline Eigen::Vector3d sample_root(const RootEstimate& est, Rng& rng) {
  return gauss_sample(rng, est.mean, est.variance);
}

}  // namespace poseprior
