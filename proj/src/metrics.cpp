#include "poseprior/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "poseprior/numeric.hpp"

namespace poseprior {

JointMatrix SimilarityTransform::apply(const JointMatrix& joints) const {
  JointMatrix out = (scale * (joints * rotation.transpose())).eval();
  out.rowwise() += translation.transpose();
  return out;
}

namespace {

void require_same_shape(const Pose& pred, const Pose& gt) {
  if (pred.num_joints() != gt.num_joints()) {
    throw ArgumentError("pose joint counts differ: " + std::to_string(pred.num_joints()) + " vs " +
                        std::to_string(gt.num_joints()));
  }
  if (pred.num_joints() == 0) throw ArgumentError("poses have no joints");
}

Eigen::VectorXd root_aligned_distances(const Pose& pred, const Pose& gt) {
  require_same_shape(pred, gt);
  const JointMatrix a = to_root_relative(pred).joints;
  const JointMatrix b = to_root_relative(gt).joints;
  return (a - b).rowwise().norm();
}

}  // namespace

double mpjpe(const Pose& pred, const Pose& gt) { return root_aligned_distances(pred, gt).mean(); }

Alignment procrustes_align(const Pose& pred, const Pose& gt, ProcrustesMode mode) {
  require_same_shape(pred, gt);
  if (pred.num_joints() < 3) throw AlignmentError("procrustes_align: need at least 3 joints");
  const Eigen::RowVector3d mu_pred = pred.joints.colwise().mean();
  const Eigen::RowVector3d mu_gt = gt.joints.colwise().mean();
  const JointMatrix p = pred.joints.rowwise() - mu_pred;
  const JointMatrix g = gt.joints.rowwise() - mu_gt;

  const double var_pred = p.squaredNorm();
  const Eigen::Matrix3d cross = g.transpose() * p;  // sum_j g_j p_j^T
  const auto svd = svd_3x3(cross);
  const double scale_ref = std::max(var_pred, g.squaredNorm());
  // Degenerate: a point cloud, or (for gt) all joints on one line.
  if (!(var_pred > 0.0) || !(g.squaredNorm() > 0.0) || svd.singular_values(1) <= 1e-12 * scale_ref) {
    throw AlignmentError("procrustes_align: degenerate configuration");
  }
  Eigen::Vector3d reflect(1.0, 1.0, 1.0);
  if ((svd.U * svd.V.transpose()).determinant() < 0.0) reflect(2) = -1.0;

  Alignment out;
  out.transform.rotation = svd.U * reflect.asDiagonal() * svd.V.transpose();
  out.transform.scale =
      mode == ProcrustesMode::similarity ? svd.singular_values.dot(reflect) / var_pred : 1.0;
  out.transform.translation =
      mu_gt.transpose() - out.transform.scale * out.transform.rotation * mu_pred.transpose();
  out.aligned = out.transform.apply(pred.joints);
  return out;
}

double pa_mpjpe(const Pose& pred, const Pose& gt, ProcrustesMode mode) {
  const Alignment al = procrustes_align(pred, gt, mode);
  return (al.aligned - gt.joints).rowwise().norm().mean();
}

namespace {

/// Strict below the threshold, except that an exact joint always counts.
double percent_correct(const Eigen::VectorXd& d, double threshold_mm) {
  const auto hits = ((d.array() < threshold_mm) || (d.array() == 0.0)).count();
  return 100.0 * static_cast<double>(hits) / static_cast<double>(d.size());
}

}  // namespace

double pck(const Pose& pred, const Pose& gt, double threshold_mm) {
  return percent_correct(root_aligned_distances(pred, gt), threshold_mm);
}

double auc(const Pose& pred, const Pose& gt, double max_threshold_mm, int n_steps) {
  if (n_steps < 2) throw ArgumentError("auc: need at least two thresholds");
  const Eigen::VectorXd d = root_aligned_distances(pred, gt);
  double total = 0.0;
  for (int i = 0; i < n_steps; ++i) {
    const double threshold = max_threshold_mm * i / (n_steps - 1);
    total += percent_correct(d, threshold);
  }
  return total / n_steps;
}

double best_of_m(std::span<const Pose> hypotheses, const Pose& gt, const PoseMetric& metric) {
  if (hypotheses.empty()) throw ArgumentError("best_of_m: no hypotheses");
  double best = std::numeric_limits<double>::infinity();
  for (const Pose& h : hypotheses) best = std::min(best, metric(h, gt));
  return best;
}

Eigen::VectorXd per_joint_std_by_joint(std::span<const Pose> hypotheses) {
  if (hypotheses.size() < 2) throw ArgumentError("per_joint_std: need at least two hypotheses");
  const Eigen::Index joints = hypotheses.front().num_joints();
  // Offsets from the first hypothesis keep identical sets at exactly zero.
  const JointMatrix ref = to_root_relative(hypotheses.front()).joints;
  JointMatrix sum = JointMatrix::Zero(joints, 3);
  for (const Pose& h : hypotheses) {
    if (h.num_joints() != joints) throw ArgumentError("per_joint_std: joint counts differ");
    sum += to_root_relative(h).joints - ref;
  }
  const double m = static_cast<double>(hypotheses.size());
  const JointMatrix mean = sum / m;
  JointMatrix sq = JointMatrix::Zero(joints, 3);
  for (const Pose& h : hypotheses) sq += (to_root_relative(h).joints - ref - mean).array().square().matrix();
  return (sq / m).array().sqrt().matrix().rowwise().norm();
}

double per_joint_std(std::span<const Pose> hypotheses) { return per_joint_std_by_joint(hypotheses).mean(); }

double reprojection_error(const Pose& absolute_pose, const KeypointObservation& obs, const Camerad& cam) {
  if (absolute_pose.num_joints() != obs.num_joints()) throw ArgumentError("reprojection_error: joint counts differ");
  double total = 0.0;
  int count = 0;
  for (Eigen::Index j = 0; j < obs.num_joints(); ++j) {
    if (!obs.valid[j]) continue;
    const Eigen::Vector2d uv = project(absolute_pose.joints.row(j).transpose(), cam);
    total += (uv - obs.means.row(j).transpose()).norm();
    ++count;
  }
  if (count == 0) throw ArgumentError("reprojection_error: no valid joints");
  return total / count;
}

}  // namespace poseprior
