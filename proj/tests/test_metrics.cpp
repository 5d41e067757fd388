#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include "metric_oracles.hpp"
#include "poseprior/metrics.hpp"

using namespace poseprior;

namespace {

Pose random_pose(Rng& rng, int joints, double spread = 300.0) {
  Pose p;
  p.joints = JointMatrix(joints, 3);
  for (int j = 0; j < joints; ++j) p.joints.row(j) = spread * rng.normal_vector(3).transpose();
  return p;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized().toRotationMatrix();
}

Pose transformed(const Pose& p, const Eigen::Matrix3d& r, double s, const Eigen::Vector3d& t) {
  Pose out = p;
  out.joints = (s * (p.joints * r.transpose())).eval();
  out.joints.rowwise() += t.transpose();
  return out;
}

double squared_residual(const JointMatrix& a, const JointMatrix& b) { return (a - b).squaredNorm(); }

}  // namespace

TEST(Mpjpe, Examples) {
  Rng rng(1, 0);
  const Pose gt = random_pose(rng, 15);
  EXPECT_EQ(mpjpe(gt, gt), 0.0);
  Pose moved = gt;
  moved.joints(4, 1) += 30.0;
  EXPECT_NEAR(mpjpe(moved, gt), 2.0, 1e-12);
  EXPECT_THROW(mpjpe(random_pose(rng, 14), gt), ArgumentError);
}

TEST(Mpjpe, CommonTranslationInvariance) {
  Rng rng(2, 0);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng, 17), b = random_pose(rng, 17);
    const Eigen::Vector3d t = 1000.0 * rng.normal_vector(3);
    EXPECT_NEAR(mpjpe(transformed(a, Eigen::Matrix3d::Identity(), 1.0, t),
                      transformed(b, Eigen::Matrix3d::Identity(), 1.0, t)),
                mpjpe(a, b), 1e-9);
  }
}

TEST(Metrics, AgreeWithBruteForce) {
  Rng rng(3, 0);
  for (int i = 0; i < 100; ++i) {
    const int joints = static_cast<int>(rng.uniform_int(3, 20));
    const Pose gt = random_pose(rng, joints);
    Pose pred = random_pose(rng, joints, 80.0);
    pred.joints += gt.joints;
    EXPECT_NEAR(mpjpe(pred, gt), oracle::mpjpe(pred, gt), 1e-9);
    EXPECT_NEAR(pa_mpjpe(pred, gt), oracle::pa_mpjpe(pred, gt), 1e-9);
    EXPECT_NEAR(pck(pred, gt), oracle::pck(pred, gt, 150.0), 1e-9);
    EXPECT_NEAR(auc(pred, gt), oracle::auc(pred, gt), 1e-9);

    std::vector<Pose> hyps;
    const int m = static_cast<int>(rng.uniform_int(2, 10));
    for (int k = 0; k < m; ++k) {
      Pose h = random_pose(rng, joints, 60.0);
      h.joints += gt.joints;
      hyps.push_back(h);
    }
    double brute = 1e300;
    for (const Pose& h : hyps) brute = std::min(brute, oracle::mpjpe(h, gt));
    EXPECT_NEAR(best_of_m(hyps, gt, [](const Pose& a, const Pose& b) { return mpjpe(a, b); }), brute, 1e-9);
    EXPECT_NEAR(per_joint_std(hyps), oracle::per_joint_std(hyps), 1e-9);
  }
}

TEST(Procrustes, RecoversPlantedSimilarity) {
  Rng rng(4, 0);
  for (int i = 0; i < 100; ++i) {
    const Pose gt = random_pose(rng, 17);
    const Eigen::Matrix3d r = random_rotation(rng);
    const double s = std::exp(rng.normal());
    const Eigen::Vector3d t = 500.0 * rng.normal_vector(3);
    const Pose pred = transformed(gt, r, s, t);
    const Alignment al = procrustes_align(pred, gt);
    EXPECT_TRUE(al.transform.rotation.isApprox(r.transpose(), 1e-8));
    EXPECT_NEAR(al.transform.scale, 1.0 / s, 1e-8 / s);
    EXPECT_LT((al.aligned - gt.joints).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(pa_mpjpe(pred, gt), 1e-8);
    EXPECT_NEAR(al.transform.rotation.determinant(), 1.0, 1e-9);
    EXPECT_TRUE((al.transform.rotation * al.transform.rotation.transpose()).isIdentity(1e-9));
  }
}

TEST(Procrustes, IdentityAndPureScale) {
  Rng rng(5, 0);
  const Pose gt = random_pose(rng, 17);
  const Alignment same = procrustes_align(gt, gt);
  EXPECT_TRUE(same.transform.rotation.isIdentity(1e-9));
  EXPECT_NEAR(same.transform.scale, 1.0, 1e-12);
  EXPECT_LT(same.transform.translation.norm(), 1e-9);
  Pose doubled = gt;
  doubled.joints *= 2.0;
  EXPECT_NEAR(procrustes_align(doubled, gt).transform.scale, 0.5, 1e-12);
  EXPECT_LT(pa_mpjpe(doubled, gt), 1e-9);
  EXPECT_NEAR(procrustes_align(doubled, gt, ProcrustesMode::rigid).transform.scale, 1.0, 0.0);
  EXPECT_GT(pa_mpjpe(doubled, gt, ProcrustesMode::rigid), 1.0);
}

TEST(Procrustes, ReflectionIsNotAllowed) {
  Rng rng(6, 0);
  const Pose gt = random_pose(rng, 17);
  Pose mirrored = gt;
  mirrored.joints.col(0) *= -1.0;
  const Alignment al = procrustes_align(mirrored, gt);
  EXPECT_NEAR(al.transform.rotation.determinant(), 1.0, 1e-9);
  EXPECT_GT(pa_mpjpe(mirrored, gt), 1.0);
}

TEST(Procrustes, OptimalAgainstRandomTransforms) {
  Rng rng(7, 0);
  for (int i = 0; i < 20; ++i) {
    const Pose gt = random_pose(rng, 17);
    Pose pred = random_pose(rng, 17, 50.0);
    pred.joints += gt.joints;
    const double best = squared_residual(procrustes_align(pred, gt).aligned, gt.joints);
    for (int k = 0; k < 100; ++k) {
      const Pose cand = transformed(pred, random_rotation(rng), std::exp(0.3 * rng.normal()), 50.0 * rng.normal_vector(3));
      EXPECT_LE(best, squared_residual(cand.joints, gt.joints) + 1e-9);
    }
  }
}

TEST(Procrustes, InvariantToSimilarityOfPred) {
  Rng rng(8, 0);
  for (int i = 0; i < 100; ++i) {
    const Pose gt = random_pose(rng, 17);
    Pose pred = random_pose(rng, 17, 80.0);
    pred.joints += gt.joints;
    const Pose moved = transformed(pred, random_rotation(rng), std::exp(rng.normal()), 300.0 * rng.normal_vector(3));
    EXPECT_NEAR(pa_mpjpe(moved, gt), pa_mpjpe(pred, gt), 1e-9 * (1.0 + pa_mpjpe(pred, gt)));
  }
}

TEST(Procrustes, Degenerate) {
  Pose a;
  a.joints = JointMatrix::Zero(5, 3);
  Rng rng(9, 0);
  const Pose b = random_pose(rng, 5);
  EXPECT_THROW(procrustes_align(a, b), AlignmentError);
  Pose line = b;
  for (int j = 0; j < 5; ++j) line.joints.row(j) = Eigen::RowVector3d(1, 2, 3) * j;
  EXPECT_THROW(procrustes_align(b, line), AlignmentError);
  EXPECT_THROW(procrustes_align(random_pose(rng, 2), random_pose(rng, 2)), AlignmentError);
}

TEST(Pck, Examples) {
  Rng rng(10, 0);
  Pose gt = random_pose(rng, 10);
  gt.joints = gt.joints.array().round().matrix();  // keep the boundary distances exact
  EXPECT_EQ(pck(gt, gt), 100.0);
  EXPECT_EQ(auc(gt, gt), 100.0);
  EXPECT_EQ(pck(gt, gt, 0.0), 100.0);
  Pose far = gt;
  far.joints(3, 2) += 151.0;
  EXPECT_NEAR(pck(far, gt), 90.0, 1e-12);
  Pose edge = gt;
  edge.joints(3, 0) += 150.0;
  EXPECT_NEAR(pck(edge, gt), 90.0, 1e-12);
  EXPECT_NEAR(pck(far, gt, 0.0), 90.0, 1e-12);
  Pose nudged = gt;
  nudged.joints.col(1).array() += 1.0;
  nudged.joints(0, 1) -= 1.0;  // root stays, every other joint is 1 mm off after root alignment
  EXPECT_NEAR(pck(nudged, gt, 0.0), 10.0, 1e-12);
}

TEST(Auc, AllJointsAtUpperThreshold) {
  Rng rng(11, 0);
  Pose gt = random_pose(rng, 10);
  gt.joints = gt.joints.array().round().matrix();
  gt.joints.row(0).setZero();
  Pose pred = gt;
  for (int j = 1; j < 10; ++j) pred.joints(j, 0) += 150.0;
  // Only the root joint scores; 150 mm misses the open upper endpoint.
  EXPECT_NEAR(auc(pred, gt), 10.0, 1e-12);
}

TEST(BestOfM, Properties) {
  Rng rng(12, 0);
  const Pose gt = random_pose(rng, 17);
  std::vector<Pose> hyps;
  for (int k = 0; k < 50; ++k) {
    Pose h = random_pose(rng, 17, 100.0);
    h.joints += gt.joints;
    hyps.push_back(h);
  }
  const PoseMetric metric = [](const Pose& a, const Pose& b) { return mpjpe(a, b); };
  const std::span<const Pose> all(hyps);
  EXPECT_EQ(best_of_m(all.first(1), gt, metric), mpjpe(hyps[0], gt));
  double prev = 1e300;
  for (std::size_t m = 1; m <= hyps.size(); ++m) {
    const double v = best_of_m(all.first(m), gt, metric);
    EXPECT_LE(v, prev);
    prev = v;
  }
  hyps.push_back(gt);
  EXPECT_EQ(best_of_m(hyps, gt, metric), 0.0);
  EXPECT_THROW(best_of_m({}, gt, metric), ArgumentError);
}

TEST(PerJointStd, Examples) {
  Rng rng(13, 0);
  const Pose p = random_pose(rng, 5);
  const std::vector<Pose> same{p, p, p};
  EXPECT_EQ(per_joint_std(same), 0.0);
  Pose q = p;
  q.joints(2, 0) += 10.0;
  const std::vector<Pose> pair{p, q};
  const Eigen::VectorXd by = per_joint_std_by_joint(pair);
  EXPECT_NEAR(by(2), 5.0, 1e-12);
  EXPECT_NEAR(per_joint_std(pair), 1.0, 1e-12);
  EXPECT_THROW(per_joint_std(std::vector<Pose>{p}), ArgumentError);
}

TEST(Reprojection, Examples) {
  const Camerad cam{1000.0, 1000.0, 500.0, 500.0};
  Pose pose;
  pose.frame = PoseFrame::absolute_camera;
  pose.joints = JointMatrix(2, 3);
  pose.joints << 0, 0, 1000, 100, -50, 1000;
  KeypointObservation obs = KeypointObservation::empty(2);
  obs.means << 500, 500, 600, 450;
  obs.valid = {true, true};
  EXPECT_EQ(reprojection_error(pose, obs, cam), 0.0);
  obs.valid = {false, true};
  obs.means.row(1) << 603, 454;
  EXPECT_NEAR(reprojection_error(pose, obs, cam), 5.0, 1e-12);
  obs.valid = {false, false};
  EXPECT_THROW(reprojection_error(pose, obs, cam), ArgumentError);
  obs.valid = {true, false};
  pose.joints(0, 2) = -1.0;
  EXPECT_THROW(reprojection_error(pose, obs, cam), BehindCameraError);
}
