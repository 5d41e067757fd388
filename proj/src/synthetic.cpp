#include "poseprior/synthetic.hpp"

#include <numbers>

#include <Eigen/Geometry>

namespace poseprior {

int SyntheticSkeletonConfig::root_index() const {
  for (int j = 0; j < num_joints(); ++j)
    if (parents[j] < 0) return j;
  throw ConfigError("skeleton has no root");
}

void SyntheticSkeletonConfig::check() const {
  const int n = num_joints();
  if (n < 1) throw ConfigError("skeleton has no joints");
  if (offsets.rows() != n || static_cast<int>(limits.size()) != n) {
    throw ConfigError("skeleton offsets and limits must have one entry per joint");
  }
  if (!joint_names.empty() && static_cast<int>(joint_names.size()) != n) {
    throw ConfigError("skeleton joint names must have one entry per joint");
  }
  int roots = 0;
  for (int j = 0; j < n; ++j) {
    if (parents[j] < 0) {
      ++roots;
      continue;
    }
    // Parents must precede children, which rules out cycles and keeps FK a single pass.
    if (parents[j] >= j) throw ConfigError("skeleton joint " + std::to_string(j) + " has a parent that does not precede it");
    if (!(offsets.row(j).norm() > 0.0)) throw ConfigError("skeleton bone " + std::to_string(j) + " has zero length");
  }
  if (roots != 1) throw ConfigError("skeleton must have exactly one root");
  if (parents[0] >= 0) throw ConfigError("skeleton root must be joint 0");
  for (const auto& l : limits)
    if ((l.lo.array() > l.hi.array()).any()) throw ConfigError("skeleton angle limit has lo > hi");
  if (num_train < 0 || num_test < 0) throw ConfigError("skeleton sample counts must be non-negative");
  if (!(keypoint_sigma > 0.0)) throw ConfigError("keypoint sigma must be positive");
  if ((root_lo.array() > root_hi.array()).any() || !(root_lo(2) > 0.0)) {
    throw ConfigError("root placement box must lie in front of the camera");
  }
}

SyntheticSkeletonConfig default_skeleton() {
  SyntheticSkeletonConfig cfg;
  cfg.joint_names = {"pelvis",    "r_hip",      "r_knee",  "r_ankle",    "l_hip",   "l_knee",
                     "l_ankle",   "spine",      "thorax",  "neck",       "head",    "l_shoulder",
                     "l_elbow",   "l_wrist",    "r_shoulder", "r_elbow", "r_wrist"};
  cfg.parents = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};
  cfg.offsets.resize(17, 3);
  // y points down, as in the camera frame.
  cfg.offsets << 0, 0, 0,  //
      -130, 0, 0,          // r_hip
      0, 450, 0,           // r_knee
      0, 440, 0,           // r_ankle
      130, 0, 0,           // l_hip
      0, 450, 0,           // l_knee
      0, 440, 0,           // l_ankle
      0, -230, 0,          // spine
      0, -250, 0,          // thorax
      0, -100, 0,          // neck
      0, -120, 0,          // head
      170, 0, 0,           // l_shoulder
      0, 280, 0,           // l_elbow
      0, 250, 0,           // l_wrist
      -170, 0, 0,          // r_shoulder
      0, 280, 0,           // r_elbow
      0, 250, 0;           // r_wrist

  auto lim = [](double xl, double xh, double yl, double yh, double zl, double zh) {
    return AngleLimits{{xl, yl, zl}, {xh, yh, zh}};
  };
  const double pi = std::numbers::pi;
  cfg.limits = {
      lim(-0.15, 0.15, -pi / 4, pi / 4, -0.15, 0.15),  // pelvis: global orientation
      lim(0, 0, 0, 0, 0, 0),                           // r_hip
      lim(-1.2, 0.4, -0.3, 0.3, -0.4, 0.2),            // r_knee: thigh swing
      lim(0.0, 1.6, 0, 0, 0, 0),                       // r_ankle: knee bend
      lim(0, 0, 0, 0, 0, 0),                           // l_hip
      lim(-1.2, 0.4, -0.3, 0.3, -0.2, 0.4),            // l_knee
      lim(0.0, 1.6, 0, 0, 0, 0),                       // l_ankle
      lim(-0.2, 0.5, -0.3, 0.3, -0.2, 0.2),            // spine
      lim(-0.2, 0.2, -0.2, 0.2, -0.1, 0.1),            // thorax
      lim(-0.3, 0.3, -0.4, 0.4, -0.2, 0.2),            // neck
      lim(-0.3, 0.3, -0.3, 0.3, -0.2, 0.2),            // head
      lim(0, 0, -0.1, 0.1, -0.2, 0.2),                 // l_shoulder
      lim(-1.6, 1.6, -0.5, 0.5, -1.6, 0.3),            // l_elbow: upper arm
      lim(-2.2, 0.0, 0, 0, 0, 0),                      // l_wrist: forearm
      lim(0, 0, -0.1, 0.1, -0.2, 0.2),                 // r_shoulder
      lim(-1.6, 1.6, -0.5, 0.5, -0.3, 1.6),            // r_elbow
      lim(-2.2, 0.0, 0, 0, 0, 0),                      // r_wrist
  };
  return cfg;
}

namespace {

Eigen::Matrix3d euler(const Eigen::Vector3d& a) {
  using Eigen::AngleAxisd;
  return (AngleAxisd(a(2), Eigen::Vector3d::UnitZ()) * AngleAxisd(a(1), Eigen::Vector3d::UnitY()) *
          AngleAxisd(a(0), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

JointMatrix random_angles(const SyntheticSkeletonConfig& cfg, Rng& rng) {
  JointMatrix angles(cfg.num_joints(), 3);
  for (int j = 0; j < cfg.num_joints(); ++j)
    for (int k = 0; k < 3; ++k) {
      const double lo = cfg.limits[j].lo(k);
      const double hi = cfg.limits[j].hi(k);
      angles(j, k) = lo + (hi - lo) * rng.uniform();
    }
  return angles;
}

PoseDataset make_dataset(const SyntheticSkeletonConfig& cfg, int n, Rng& rng, const std::string& subject) {
  PoseDataset ds;
  ds.num_joints = cfg.num_joints();
  ds.joint_names = cfg.joint_names;
  ds.root_index = cfg.root_index();
  ds.records.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Pose p = forward_kinematics(cfg, random_angles(cfg, rng));
    ds.records.push_back({i, p.flat(), subject, i});
  }
  return ds;
}

}  // namespace

Pose forward_kinematics(const SyntheticSkeletonConfig& cfg, const JointMatrix& angles) {
  const int n = cfg.num_joints();
  if (angles.rows() != n) throw ArgumentError("forward_kinematics: one angle triple per joint required");
  std::vector<Eigen::Matrix3d> global(static_cast<std::size_t>(n));
  Pose pose;
  pose.joints = JointMatrix::Zero(n, 3);
  pose.root_index = cfg.root_index();
  for (int j = 0; j < n; ++j) {
    const Eigen::Matrix3d local = euler(angles.row(j).transpose());
    const int p = cfg.parents[j];
    if (p < 0) {
      global[j] = local;
      continue;
    }
    global[j] = global[p] * local;
    pose.joints.row(j) = pose.joints.row(p) + (global[j] * cfg.offsets.row(j).transpose()).transpose();
  }
  return pose;
}

Eigen::VectorXd bone_lengths(const SyntheticSkeletonConfig& cfg, const Pose& pose) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(cfg.num_joints());
  for (int j = 0; j < cfg.num_joints(); ++j)
    if (cfg.parents[j] >= 0) out(j) = (pose.joints.row(j) - pose.joints.row(cfg.parents[j])).norm();
  return out;
}

SyntheticWorld generate_synthetic(const SyntheticSkeletonConfig& cfg) {
  cfg.check();
  SyntheticWorld world;
  Rng train_rng(cfg.seed, 0);
  Rng test_rng(cfg.seed, 1);
  Rng render_rng(cfg.seed, 2);
  world.train = make_dataset(cfg, cfg.num_train, train_rng, "train");
  world.test = make_dataset(cfg, cfg.num_test, test_rng, "test");

  ObservationSet& obs = world.observations;
  obs.num_joints = cfg.num_joints();
  obs.joint_names = cfg.joint_names;
  obs.root_index = cfg.root_index();
  const double var = cfg.keypoint_sigma * cfg.keypoint_sigma;
  for (std::size_t i = 0; i < world.test.records.size(); ++i) {
    ObservationRecord rec;
    rec.frame_id = static_cast<long>(i);
    rec.camera = cfg.camera;
    Eigen::Vector3d root;
    for (int k = 0; k < 3; ++k) root(k) = cfg.root_lo(k) + (cfg.root_hi(k) - cfg.root_lo(k)) * render_rng.uniform();
    const Pose gt = to_absolute(world.test.pose(i), root);
    KeypointObservation kp = KeypointObservation::empty(cfg.num_joints());
    for (int j = 0; j < cfg.num_joints(); ++j) {
      const SymMat2d cov = SymMat2d::isotropic(var);
      kp.means.row(j) = gauss_sample(render_rng, project(gt.joints.row(j).transpose(), cfg.camera), cov).transpose();
      kp.covs[j] = cov;
      kp.valid[j] = true;
      kp.cov_fallback[j] = false;
    }
    rec.sources.push_back(std::move(kp));
    const Eigen::Vector3d root_var = cfg.root_noise_std.array().square();
    rec.root.mean = gauss_sample(render_rng, root, root_var);
    rec.root.variance = root_var;
    rec.gt_absolute = gt.joints;
    obs.records.push_back(std::move(rec));
  }
  return world;
}

}  // namespace poseprior
