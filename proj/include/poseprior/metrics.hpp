#pragma once

#include <functional>
#include <span>

#include <Eigen/Core>

#include "poseprior/geometry.hpp"
#include "poseprior/observation.hpp"

namespace poseprior {

/// Maps pred onto gt: aligned = scale * rotation * pred + translation.
struct SimilarityTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double scale = 1.0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  JointMatrix apply(const JointMatrix& joints) const;
};

struct Alignment {
  SimilarityTransform transform;
  JointMatrix aligned;
};

enum class ProcrustesMode { similarity, rigid };

/// Mean joint distance after subtracting each pose's root joint.
double mpjpe(const Pose& pred, const Pose& gt);

Alignment procrustes_align(const Pose& pred, const Pose& gt, ProcrustesMode mode = ProcrustesMode::similarity);

double pa_mpjpe(const Pose& pred, const Pose& gt, ProcrustesMode mode = ProcrustesMode::similarity);

inline constexpr double kPckThresholdMm = 150.0;
inline constexpr int kAucSteps = 31;

/// Percentage of root-aligned joints strictly closer than threshold_mm. Exact joints
/// count at every threshold, including zero.
double pck(const Pose& pred, const Pose& gt, double threshold_mm = kPckThresholdMm);

/// Mean PCK over n_steps thresholds evenly spaced on [0, max_threshold_mm].
double auc(const Pose& pred, const Pose& gt, double max_threshold_mm = kPckThresholdMm, int n_steps = kAucSteps);

using PoseMetric = std::function<double(const Pose&, const Pose&)>;

/// Minimum of metric(h, gt) over the hypotheses.
double best_of_m(std::span<const Pose> hypotheses, const Pose& gt, const PoseMetric& metric);

/// Mean over joints of the norm of the per-axis standard deviation across
/// hypotheses (root-relative).
double per_joint_std(std::span<const Pose> hypotheses);

/// Per-joint values of per_joint_std before averaging.
Eigen::VectorXd per_joint_std_by_joint(std::span<const Pose> hypotheses);

/// Mean pixel distance between projected valid joints and their observed means.
double reprojection_error(const Pose& absolute_pose, const KeypointObservation& obs, const Camerad& cam);

}  // namespace poseprior
