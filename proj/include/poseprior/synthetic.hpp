#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "poseprior/geometry.hpp"
#include "poseprior/io.hpp"

namespace poseprior {

/// Per-joint Euler limits (radians, x then y then z) for the rotation that
/// orients the bone from the parent to this joint.
struct AngleLimits {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};

struct SyntheticSkeletonConfig {
  std::vector<std::string> joint_names;
  std::vector<int> parents;      // -1 for the root
  JointMatrix offsets;           // rest bone vectors in the parent frame, mm; camera axes (y down)
  std::vector<AngleLimits> limits;
  int num_train = 2000;
  int num_test = 200;
  std::uint64_t seed = 0;

  Camerad camera{1000.0, 1000.0, 500.0, 500.0};
  Eigen::Vector3d root_lo{-300.0, -200.0, 4500.0};
  Eigen::Vector3d root_hi{300.0, 200.0, 5500.0};
  double keypoint_sigma = 2.0;                      // px
  Eigen::Vector3d root_noise_std{20.0, 20.0, 50.0};  // mm

  int num_joints() const { return static_cast<int>(parents.size()); }
  int root_index() const;
  /// Throws ConfigError unless the tree is connected, acyclic and sized consistently.
  void check() const;
};

/// 17 joints in the usual mocap order with the pelvis as root.
SyntheticSkeletonConfig default_skeleton();

/// Root-relative joint positions for the given per-joint Euler angles (J x 3).
Pose forward_kinematics(const SyntheticSkeletonConfig& cfg, const JointMatrix& angles);

/// Bone length from each joint to its parent; 0 for the root.
Eigen::VectorXd bone_lengths(const SyntheticSkeletonConfig& cfg, const Pose& pose);

struct SyntheticWorld {
  PoseDataset train;
  PoseDataset test;
  ObservationSet observations;  // one record per test pose, with ground truth
};

/// Train poses use stream 0, test poses stream 1, rendering noise stream 2.
SyntheticWorld generate_synthetic(const SyntheticSkeletonConfig& cfg);

}  // namespace poseprior
