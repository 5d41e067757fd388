#include <gtest/gtest.h>

#include "poseprior/metrics.hpp"
#include "poseprior/synthetic.hpp"

using namespace poseprior;

TEST(Synthetic, ZeroRangesGiveTheRestPose) {
  SyntheticSkeletonConfig cfg = default_skeleton();
  for (auto& l : cfg.limits) l.lo = l.hi = Eigen::Vector3d::Zero();
  cfg.num_train = 20;
  cfg.num_test = 2;
  const SyntheticWorld world = generate_synthetic(cfg);
  Pose rest;
  rest.joints = JointMatrix::Zero(17, 3);
  for (int j = 1; j < 17; ++j) rest.joints.row(j) = rest.joints.row(cfg.parents[j]) + cfg.offsets.row(j);
  for (std::size_t i = 0; i < world.train.records.size(); ++i) {
    EXPECT_TRUE(world.train.pose(i).joints.isApprox(rest.joints, 1e-12));
  }
}

TEST(Synthetic, BoneLengthsArePreserved) {
  SyntheticSkeletonConfig cfg = default_skeleton();
  cfg.num_train = 500;
  const SyntheticWorld world = generate_synthetic(cfg);
  Eigen::VectorXd expected(17);
  for (int j = 0; j < 17; ++j) expected(j) = cfg.offsets.row(j).norm();
  for (std::size_t i = 0; i < world.train.records.size(); ++i) {
    const Pose p = world.train.pose(i);
    EXPECT_LT((bone_lengths(cfg, p) - expected).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(p.joints.row(0), Eigen::RowVector3d::Zero());
  }
}

TEST(Synthetic, DatasetsAreDeterministicAndDistinct) {
  SyntheticSkeletonConfig cfg = default_skeleton();
  cfg.num_train = 50;
  cfg.num_test = 10;
  const SyntheticWorld a = generate_synthetic(cfg);
  const SyntheticWorld b = generate_synthetic(cfg);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.observations, b.observations);
  EXPECT_NE(a.train.records[0].joints, a.test.records[0].joints);
  cfg.seed = 1;
  EXPECT_NE(generate_synthetic(cfg).train, a.train);
  EXPECT_EQ(a.observations.records.size(), 10u);
  EXPECT_EQ(a.train.records[3].subject, "train");
}

TEST(Synthetic, KeypointNoiseMatchesDeclaredCovariance) {
  SyntheticSkeletonConfig cfg = default_skeleton();
  cfg.num_train = 0;
  cfg.num_test = 600;  // 600 frames x 17 joints > 1e4 residuals
  cfg.keypoint_sigma = 3.0;
  const SyntheticWorld world = generate_synthetic(cfg);
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  long n = 0;
  for (const auto& rec : world.observations.records) {
    const auto& kp = rec.sources.at(0);
    for (int j = 0; j < 17; ++j) {
      EXPECT_EQ(kp.covs[j], SymMat2d::isotropic(9.0));
      const Eigen::Vector2d r = kp.means.row(j).transpose() - project(rec.gt_absolute->row(j).transpose(), rec.camera);
      sum += r;
      scatter += r * r.transpose();
      ++n;
    }
  }
  ASSERT_GE(n, 10000);
  const Eigen::Vector2d mean = sum / n;
  const Eigen::Matrix2d cov = scatter / n - mean * mean.transpose();
  EXPECT_NEAR(cov(0, 0), 9.0, 0.9);
  EXPECT_NEAR(cov(1, 1), 9.0, 0.9);
  EXPECT_NEAR(cov(0, 1), 0.0, 0.9);
  EXPECT_LT(mean.norm(), 0.1);
}

TEST(Synthetic, GroundTruthReprojectionMatchesInjectedNoise) {
  SyntheticSkeletonConfig cfg = default_skeleton();
  cfg.num_train = 0;
  cfg.num_test = 600;
  const SyntheticWorld world = generate_synthetic(cfg);
  double total = 0.0;
  for (const auto& rec : world.observations.records) {
    const Pose gt{*rec.gt_absolute, PoseFrame::absolute_camera, 0};
    total += reprojection_error(gt, rec.sources[0], rec.camera);
  }
  // The norm of a 2D isotropic Gaussian residual has mean sigma * sqrt(pi / 2).
  const double expected = cfg.keypoint_sigma * std::sqrt(std::numbers::pi / 2.0);
  EXPECT_NEAR(total / world.observations.records.size(), expected, 0.1 * expected);
}

TEST(Synthetic, RootEstimatesCarryDeclaredNoise) {
  SyntheticSkeletonConfig cfg = default_skeleton();
  cfg.num_train = 0;
  cfg.num_test = 2000;
  const SyntheticWorld world = generate_synthetic(cfg);
  Eigen::Vector3d sq = Eigen::Vector3d::Zero();
  for (const auto& rec : world.observations.records) {
    const Eigen::Vector3d err = rec.root.mean - rec.gt_absolute->row(0).transpose();
    sq += err.cwiseProduct(err);
    EXPECT_EQ(rec.root.variance, Eigen::Vector3d(cfg.root_noise_std.array().square()));
    EXPECT_TRUE(all_in_front(Pose{*rec.gt_absolute, PoseFrame::absolute_camera, 0}));
  }
  const Eigen::Vector3d var = sq / world.observations.records.size();
  for (int k = 0; k < 3; ++k) {
    const double declared = cfg.root_noise_std(k) * cfg.root_noise_std(k);
    EXPECT_NEAR(var(k), declared, 0.1 * declared);
  }
}

TEST(Synthetic, InvalidTreesAreRejected) {
  SyntheticSkeletonConfig cycle = default_skeleton();
  cycle.parents[2] = 5;  // parent after child
  EXPECT_THROW(generate_synthetic(cycle), ConfigError);

  SyntheticSkeletonConfig two_roots = default_skeleton();
  two_roots.parents[7] = -1;
  EXPECT_THROW(generate_synthetic(two_roots), ConfigError);

  SyntheticSkeletonConfig self = default_skeleton();
  self.parents[3] = 3;
  EXPECT_THROW(generate_synthetic(self), ConfigError);

  SyntheticSkeletonConfig zero_bone = default_skeleton();
  zero_bone.offsets.row(4).setZero();
  EXPECT_THROW(generate_synthetic(zero_bone), ConfigError);

  SyntheticSkeletonConfig limits = default_skeleton();
  limits.limits[2].lo(0) = 1.0;
  limits.limits[2].hi(0) = -1.0;
  EXPECT_THROW(generate_synthetic(limits), ConfigError);

  SyntheticSkeletonConfig behind = default_skeleton();
  behind.root_lo(2) = -100.0;
  EXPECT_THROW(generate_synthetic(behind), ConfigError);
}

TEST(ForwardKinematics, SingleBoneRotation) {
  SyntheticSkeletonConfig cfg;
  cfg.parents = {-1, 0, 1};
  cfg.offsets = JointMatrix(3, 3);
  cfg.offsets << 0, 0, 0, 0, 100, 0, 0, 50, 0;
  cfg.limits.resize(3);
  JointMatrix angles = JointMatrix::Zero(3, 3);
  angles(1, 2) = std::numbers::pi / 2;  // rotate bone 1 (and its subtree) about z
  const Pose p = forward_kinematics(cfg, angles);
  EXPECT_TRUE(p.joints.row(1).isApprox(Eigen::RowVector3d(-100, 0, 0), 1e-12));
  EXPECT_TRUE(p.joints.row(2).isApprox(Eigen::RowVector3d(-150, 0, 0), 1e-12));
  EXPECT_THROW(forward_kinematics(cfg, JointMatrix::Zero(2, 3)), ArgumentError);
}
