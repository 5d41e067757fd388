#pragma once

#include <cmath>

#include <Eigen/Core>

#include "poseprior/denoiser.hpp"
#include "poseprior/observation.hpp"
#include "poseprior/synthetic.hpp"

namespace poseprior::testing {

/// Unnormalized Gaussian density rendered on a w x h grid.
inline Heatmap render_gaussian(const Eigen::Vector2d& mean, const SymMat2d& cov, int width, int height,
                               double origin_x = 0.0, double origin_y = 0.0, double stride = 1.0) {
  Heatmap hm;
  hm.values.resize(height, width);
  hm.origin_x = origin_x;
  hm.origin_y = origin_y;
  hm.stride = stride;
  const Eigen::Matrix2d info = spd_inverse_2x2(cov).matrix();
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Eigen::Vector2d d = hm.pixel_to_image(u, v) - mean;
      hm.values(v, u) = std::exp(-0.5 * d.dot(info * d));
    }
  }
  return hm;
}

/// Random SPD 2x2 with eigenvalues drawn uniformly from [lo, hi].
inline SymMat2d random_spd(Rng& rng, double lo, double hi) {
  const double theta = 2.0 * M_PI * rng.uniform();
  Eigen::Matrix2d rot;
  rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  const Eigen::Vector2d ev(lo + (hi - lo) * rng.uniform(), lo + (hi - lo) * rng.uniform());
  return SymMat2d::from_matrix(rot * ev.asDiagonal() * rot.transpose());
}

inline KeypointObservation random_observation(Rng& rng, int joints) {
  KeypointObservation obs = KeypointObservation::empty(joints);
  for (int j = 0; j < joints; ++j) {
    obs.means.row(j) << 500.0 + 200.0 * rng.normal(), 500.0 + 200.0 * rng.normal();
    obs.covs[j] = random_spd(rng, 1.0, 25.0);
    obs.valid[j] = true;
    obs.cov_fallback[j] = false;
  }
  return obs;
}

/// Absolute pose with every joint well in front of the camera.
inline Pose random_absolute_pose(Rng& rng, int joints) {
  Pose p;
  p.frame = PoseFrame::absolute_camera;
  p.joints = JointMatrix(joints, 3);
  for (int j = 0; j < joints; ++j) {
    p.joints.row(j) << 400.0 * rng.normal(), 400.0 * rng.normal(), 2000.0 + 4000.0 * rng.uniform();
  }
  return p;
}

/// Settings of the small synthetic benchmark used by the slower tests.
struct ToySettings {
  int hidden = 64;
  int steps = 100;
  long train_steps = 2000;
  int batch = 256;
  double lr = 1e-3;
  double ema = 0.995;
  std::uint64_t seed = 0;
};

struct ToyWorld {
  SyntheticWorld world;
  DenoiserModel model;
  DiffusionSchedule schedule;
};

inline ToyWorld build_toy_world(const ToySettings& s = {}) {
  SyntheticSkeletonConfig cfg = default_skeleton();
  cfg.seed = s.seed;
  SyntheticWorld world = generate_synthetic(cfg);
  Rng init(s.seed, 0);
  DenoiserModel model = DenoiserModel::initialize({cfg.num_joints(), s.hidden, s.steps, 0.008}, init);
  TrainOptions opt;
  opt.steps = s.train_steps;
  opt.batch_size = s.batch;
  opt.adam.lr = s.lr;
  opt.ema_decay = s.ema;
  Rng rng(s.seed, 1);
  train(model, world.train.matrix(), opt, rng);
  DiffusionSchedule sched = model.schedule();
  return {std::move(world), std::move(model), std::move(sched)};
}

}  // namespace poseprior::testing
