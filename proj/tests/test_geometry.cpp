#include <gtest/gtest.h>

#include "poseprior/geometry.hpp"

using namespace poseprior;

namespace {

const Camerad kCam{1000.0, 1000.0, 500.0, 500.0};

Eigen::Vector3d random_point(Rng& rng) {
  const double z = 500.0 + 7500.0 * rng.uniform();
  return {z * (rng.uniform() - 0.5), z * (rng.uniform() - 0.5), z};
}

Pose random_pose(Rng& rng, int joints) {
  Pose p;
  p.joints = JointMatrix(joints, 3);
  for (int j = 0; j < joints; ++j) p.joints.row(j) = 300.0 * rng.normal_vector(3).transpose();
  p.joints.row(0).setZero();
  return p;
}

}  // namespace

TEST(Project, OpticalAxis) {
  for (double z : {1.0, 250.0, 9000.0}) EXPECT_EQ(project(Eigen::Vector3d(0, 0, z), kCam), Eigen::Vector2d(500, 500));
}

TEST(Project, HandArithmetic) {
  // 1000 * 100 / 1000 + 500 = 600; 1000 * -50 / 1000 + 500 = 450.
  EXPECT_TRUE(project(Eigen::Vector3d(100, -50, 1000), kCam).isApprox(Eigen::Vector2d(600, 450)));
}

TEST(Project, RayInvariance) {
  Rng rng(1, 0);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d p = random_point(rng);
    const double k = 0.1 + 5.0 * rng.uniform();
    EXPECT_TRUE(project(Eigen::Vector3d(k * p), kCam).isApprox(project(p, kCam), 1e-12));
  }
}

TEST(Project, BehindCamera) {
  EXPECT_THROW(project(Eigen::Vector3d(1, 2, 0), kCam), BehindCameraError);
  EXPECT_THROW(project(Eigen::Vector3d(1, 2, -5), kCam), BehindCameraError);
  EXPECT_THROW(projection_jacobian(Eigen::Vector3d(1, 2, 0), kCam), BehindCameraError);
}

TEST(Project, FloatScalar) {
  const Camera<float> cam{1000.f, 1000.f, 500.f, 500.f};
  EXPECT_TRUE(project(Eigen::Vector3f(100, -50, 1000), cam).isApprox(Eigen::Vector2f(600, 450)));
}

TEST(ProjectionJacobian, OnAxis) {
  const Camerad cam{800.0, 900.0, 10.0, 20.0};
  Eigen::Matrix<double, 2, 3> expected;
  expected << 800.0 / 4000.0, 0, 0, 0, 900.0 / 4000.0, 0;
  EXPECT_TRUE(projection_jacobian(Eigen::Vector3d(0, 0, 4000), cam).isApprox(expected));
}

TEST(ProjectionJacobian, MatchesFiniteDifferences) {
  Rng rng(2, 0);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d p = random_point(rng);
    const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(p, kCam);
    Eigen::Matrix<double, 2, 3> fd;
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-3;
      Eigen::Vector3d hi = p, lo = p;
      hi(k) += h;
      lo(k) -= h;
      fd.col(k) = (project(hi, kCam) - project(lo, kCam)) / (2 * h);
    }
    EXPECT_LE((jac - fd).cwiseAbs().maxCoeff(), 1e-6 * jac.cwiseAbs().maxCoeff()) << p.transpose();
    Eigen::JacobiSVD<Eigen::Matrix<double, 2, 3>> svd(jac);
    EXPECT_EQ(svd.rank(), 2);
  }
}

TEST(RootRelative, RootAtOriginAndDistancesPreserved) {
  Rng rng(3, 0);
  Pose p = random_pose(rng, 17);
  p.joints.rowwise() += Eigen::RowVector3d(10, 20, 5000);
  p.frame = PoseFrame::absolute_camera;
  p.root_index = 3;
  const Pose r = to_root_relative(p);
  EXPECT_EQ(r.frame, PoseFrame::root_relative);
  EXPECT_EQ(r.joints.row(3), Eigen::RowVector3d::Zero());
  for (int a = 0; a < 17; ++a)
    for (int b = 0; b < 17; ++b)
      EXPECT_NEAR((r.joints.row(a) - r.joints.row(b)).norm(), (p.joints.row(a) - p.joints.row(b)).norm(), 1e-9);
}

TEST(RootRelative, RoundTripWithAbsolute) {
  Rng rng(4, 0);
  const Pose p = random_pose(rng, 17);
  const Eigen::Vector3d root(-120.0, 35.0, 4800.0);
  const Pose a = to_absolute(p, root);
  EXPECT_EQ(a.frame, PoseFrame::absolute_camera);
  EXPECT_TRUE(((a.joints.col(2).array() - p.joints.col(2).array()) == root(2)).all());
  const Pose back = to_root_relative(a);
  EXPECT_TRUE(back.joints.isApprox(p.joints, 1e-12));
  EXPECT_EQ(to_absolute(p, Eigen::Vector3d::Zero()).joints, p.joints);
}

TEST(RootRelative, RejectsWrongFrame) {
  Pose p;
  p.joints = JointMatrix::Zero(2, 3);
  p.frame = PoseFrame::absolute_camera;
  EXPECT_THROW(to_absolute(p, Eigen::Vector3d::Zero()), ArgumentError);
  p.root_index = 5;
  EXPECT_THROW(to_root_relative(p), ArgumentError);
}

TEST(Pose, FlatViewIsRowMajor) {
  Pose p;
  p.joints = JointMatrix(2, 3);
  p.joints << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(Eigen::VectorXd(p.flat()), Eigen::VectorXd::LinSpaced(6, 1, 6));
  EXPECT_EQ(Pose::from_flat(p.flat(), PoseFrame::root_relative).joints, p.joints);
  EXPECT_THROW(Pose::from_flat(Eigen::VectorXd::Zero(4), PoseFrame::root_relative), ArgumentError);
}

TEST(SampleRoot, ZeroVarianceAndDeterminism) {
  Rng a(5, 1), b(5, 1);
  const RootEstimate zero{{1.0, 2.0, 3000.0}, Eigen::Vector3d::Zero()};
  EXPECT_EQ(sample_root(zero, a), zero.mean);
  const RootEstimate est{{0.0, 0.0, 5000.0}, kDefaultRootVariance};
  Rng c(5, 2), d(5, 2);
  EXPECT_EQ(sample_root(est, c), sample_root(est, d));
}

TEST(SampleRoot, MonteCarloMoments) {
  Rng rng(6, 0);
  const RootEstimate est{{10.0, -20.0, 5000.0}, {400.0, 900.0, 2500.0}};
  const int n = 100000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero(), sq = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d r = sample_root(est, rng) - est.mean;
    sum += r;
    sq += r.cwiseProduct(r);
  }
  const Eigen::Vector3d mean = sum / n;
  const Eigen::Vector3d var = sq / n - mean.cwiseProduct(mean);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(mean(k), 0.0, 0.02 * std::sqrt(est.variance(k)));
    EXPECT_NEAR(var(k), est.variance(k), 0.02 * est.variance(k));
  }
}
