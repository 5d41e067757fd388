#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "poseprior/denoiser.hpp"
#include "poseprior/geometry.hpp"
#include "poseprior/observation.hpp"
#include "poseprior/schedule.hpp"

namespace poseprior {

/// Where the likelihood gradient enters the reverse step.
enum class GuidanceSpace {
  denoised_estimate,  // x0' = x0 + gamma * grad log p(c | x0)
  noisy_state,        // eps' = eps - sqrt(1 - alphabar_t) * gamma * grad log p(c | x_t)
};

struct GuidanceConfig {
  double gamma = 2e-4;
  double cov_scale = 1.0;
  double cov_rotate = 0.0;                   // radians, every joint
  std::vector<double> cov_rotate_per_joint;  // overrides cov_rotate when non-empty
  RenoiseVariant renoise = RenoiseVariant::variance_preserving;
  GuidanceSpace space = GuidanceSpace::denoised_estimate;
  bool sample_root = true;  // false: every hypothesis uses the root mean
  int num_hypotheses = 50;
  std::uint64_t seed = 0;
  int threads = 1;

  void check() const;
};

/// Conditioning for one frame. Each source is summed into the gradient.
struct GuidanceProblem {
  std::vector<KeypointObservation> sources;
  Camerad camera;
  RootEstimate root;
  int root_index = 0;
};

struct HypothesisSet {
  std::vector<Pose> poses;  // root-relative, mm
  std::vector<Eigen::Vector3d> roots;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> noise_streams;
  std::vector<std::uint64_t> root_streams;
  long behind_camera_skips = 0;
};

/// Bound on every coordinate of the denoised estimate, in normalized units.
/// Early estimates are dominated by amplified noise; unclipped, they put joints
/// at or behind the image plane where the projection gradient blows up.
inline constexpr double kDenoisedClip = 8.0;

/// Root draws use their own stream so they never shift the diffusion noise.
inline constexpr std::uint64_t kRootStreamOffset = std::uint64_t{1} << 62;

/// Reverse process without guidance. Hypothesis m uses stream m under seed.
std::vector<Pose> sample_unconditional(const DenoiserModel& model, const DiffusionSchedule& sched,
                                       std::uint64_t seed, int n, int threads = 1, int root_index = 0);

HypothesisSet sample_guided(const DenoiserModel& model, const DiffusionSchedule& sched,
                            const GuidanceProblem& problem, const GuidanceConfig& cfg);

/// Guided sampling with the listed joints removed from every source.
HypothesisSet complete_pose(const DenoiserModel& model, const DiffusionSchedule& sched,
                            const GuidanceProblem& problem, std::span<const int> masked_joints,
                            const GuidanceConfig& cfg);

struct DiversityRow {
  double scale;
  double per_joint_std_mm;
};

std::vector<DiversityRow> diversity_sweep(const DenoiserModel& model, const DiffusionSchedule& sched,
                                          const GuidanceProblem& problem, const GuidanceConfig& cfg,
                                          std::span<const double> scales);

/// Gradient of the summed source log-likelihoods with respect to the normalized
/// state x (3J), for a root-relative pose placed at root.
Eigen::VectorXd guidance_gradient(const DenoiserModel& model, const Eigen::VectorXd& x, const Eigen::Vector3d& root,
                                  std::span<const KeypointObservation> sources, const Camerad& cam,
                                  long* behind_camera_skips = nullptr);

/// Mean over hypotheses of the reprojection error against obs, each placed at its own root.
double mean_reprojection_error(const HypothesisSet& set, const KeypointObservation& obs, const Camerad& cam);

}  // namespace poseprior
