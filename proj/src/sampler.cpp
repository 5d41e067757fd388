#include "poseprior/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <thread>

#include "poseprior/metrics.hpp"

namespace poseprior {

void GuidanceConfig::check() const {
  if (!(gamma >= 0.0)) throw ArgumentError("guidance: gamma must be >= 0");
  if (!(cov_scale > 0.0)) throw ArgumentError("guidance: covariance scale must be > 0");
  if (num_hypotheses < 1) throw ArgumentError("guidance: need at least one hypothesis");
}

namespace {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots; the first failing index is rethrown.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::clamp(threads, 1, std::max(n, 1));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

bool has_guidance(const GuidanceConfig& cfg, std::span<const KeypointObservation> sources) {
  if (cfg.gamma == 0.0) return false;
  return std::any_of(sources.begin(), sources.end(), [](const auto& s) { return s.num_valid() > 0; });
}

Eigen::VectorXd clip_denoised(const Eigen::VectorXd& x0) {
  return x0.cwiseMax(-kDenoisedClip).cwiseMin(kDenoisedClip);
}

struct Trajectory {
  Eigen::VectorXd x0;
  long skips = 0;
};

/// One reverse-process trajectory from x_T to x_0 in normalized space.
Trajectory reverse_process(const DenoiserModel& model, const DiffusionSchedule& sched, Rng& noise,
                           const GuidanceConfig* cfg, std::span<const KeypointObservation> sources,
                           const Camerad& cam, const Eigen::Vector3d& root) {
  const int dim = model.config.input_dim();
  Trajectory out;
  Eigen::VectorXd x = noise.normal_vector(dim);
  const bool guided = cfg != nullptr && has_guidance(*cfg, sources);
  const GuidanceSpace space = cfg != nullptr ? cfg->space : GuidanceSpace::denoised_estimate;
  const RenoiseVariant variant = cfg != nullptr ? cfg->renoise : RenoiseVariant::variance_preserving;
  for (int t = sched.steps(); t >= 1; --t) {
    Eigen::VectorXd eps = predict_noise(model, x, t);
    if (guided && space == GuidanceSpace::noisy_state) {
      const Eigen::VectorXd g = guidance_gradient(model, x, root, sources, cam, &out.skips);
      eps -= std::sqrt(1.0 - sched.alphabar(t)) * cfg->gamma * g;
    }
    Eigen::VectorXd x0 = clip_denoised(estimate_x0(x, eps, t, sched));
    if (guided && space == GuidanceSpace::denoised_estimate) {
      x0 = clip_denoised(x0 + cfg->gamma * guidance_gradient(model, x0, root, sources, cam, &out.skips));
    }
    x = renoise_step(x0, t, noise, sched, variant);
    if (!x.allFinite()) throw DivergenceError("reverse process produced a non-finite state", t);
  }
  out.x0 = std::move(x);
  return out;
}

Pose to_output_pose(const DenoiserModel& model, const Eigen::VectorXd& x, int root_index) {
  return to_root_relative(Pose::from_flat(model.denormalize(x), PoseFrame::root_relative, root_index));
}

}  // namespace

Eigen::VectorXd guidance_gradient(const DenoiserModel& model, const Eigen::VectorXd& x, const Eigen::Vector3d& root,
                                  std::span<const KeypointObservation> sources, const Camerad& cam,
                                  long* behind_camera_skips) {
  const Pose absolute = to_absolute(Pose::from_flat(model.denormalize(x), PoseFrame::root_relative), root);
  std::vector<JointMatrix> grads;
  grads.reserve(sources.size());
  for (const auto& obs : sources) {
    int skipped = 0;
    grads.push_back(log_likelihood_grad(absolute, obs, cam, BehindCameraPolicy::skip, &skipped));
    if (behind_camera_skips != nullptr) *behind_camera_skips += skipped;
  }
  const JointMatrix total = sum_sources(grads);
  // Chain rule from millimeters into the normalized state.
  return (Eigen::Map<const Eigen::VectorXd>(total.data(), total.size()).array() * model.norm_std.array()).matrix();
}

std::vector<Pose> sample_unconditional(const DenoiserModel& model, const DiffusionSchedule& sched,
                                       std::uint64_t seed, int n, int threads, int root_index) {
  if (n < 0) throw ArgumentError("sample_unconditional: negative sample count");
  std::vector<Pose> poses(static_cast<std::size_t>(n));
  parallel_for(n, threads, [&](int m) {
    Rng noise(seed, static_cast<std::uint64_t>(m));
    const Trajectory tr = reverse_process(model, sched, noise, nullptr, {}, Camerad{}, Eigen::Vector3d::Zero());
    poses[m] = to_output_pose(model, tr.x0, root_index);
  });
  return poses;
}

HypothesisSet sample_guided(const DenoiserModel& model, const DiffusionSchedule& sched,
                            const GuidanceProblem& problem, const GuidanceConfig& cfg) {
  cfg.check();
  std::vector<KeypointObservation> sources;
  sources.reserve(problem.sources.size());
  for (const auto& obs : problem.sources) {
    if (obs.num_joints() != model.config.num_joints) {
      throw SchemaError("observation has " + std::to_string(obs.num_joints()) + " joints, model expects " +
                        std::to_string(model.config.num_joints));
    }
    obs.check();
    sources.push_back(transform_covariances(obs, cfg.cov_scale, cfg.cov_rotate, cfg.cov_rotate_per_joint));
  }

  const int m_total = cfg.num_hypotheses;
  HypothesisSet set;
  set.seed = cfg.seed;
  set.poses.resize(m_total);
  set.roots.resize(m_total);
  set.noise_streams.resize(m_total);
  set.root_streams.resize(m_total);
  std::vector<long> skips(static_cast<std::size_t>(m_total), 0);

  parallel_for(m_total, cfg.threads, [&](int m) {
    const auto noise_stream = static_cast<std::uint64_t>(m);
    const std::uint64_t root_stream = kRootStreamOffset + noise_stream;
    Rng root_rng(cfg.seed, root_stream);
    const Eigen::Vector3d root = cfg.sample_root ? sample_root(problem.root, root_rng) : problem.root.mean;
    Rng noise(cfg.seed, noise_stream);
    const Trajectory tr = reverse_process(model, sched, noise, &cfg, sources, problem.camera, root);
    set.poses[m] = to_output_pose(model, tr.x0, problem.root_index);
    set.roots[m] = root;
    set.noise_streams[m] = noise_stream;
    set.root_streams[m] = root_stream;
    skips[m] = tr.skips;
  });
  for (long s : skips) set.behind_camera_skips += s;
  return set;
}

HypothesisSet complete_pose(const DenoiserModel& model, const DiffusionSchedule& sched,
                            const GuidanceProblem& problem, std::span<const int> masked_joints,
                            const GuidanceConfig& cfg) {
  if (masked_joints.empty()) throw ArgumentError("complete_pose: no joints masked");
  GuidanceProblem masked = problem;
  for (auto& obs : masked.sources) obs = mask_joints(obs, masked_joints);
  return sample_guided(model, sched, masked, cfg);
}

std::vector<DiversityRow> diversity_sweep(const DenoiserModel& model, const DiffusionSchedule& sched,
                                          const GuidanceProblem& problem, const GuidanceConfig& cfg,
                                          std::span<const double> scales) {
  std::vector<DiversityRow> rows;
  rows.reserve(scales.size());
  for (double s : scales) {
    if (!(s > 0.0)) throw ArgumentError("diversity_sweep: scales must be positive");
    GuidanceConfig scaled = cfg;
    scaled.cov_scale = s;
    const HypothesisSet set = sample_guided(model, sched, problem, scaled);
    rows.push_back({s, per_joint_std(set.poses)});
  }
  return rows;
}

double mean_reprojection_error(const HypothesisSet& set, const KeypointObservation& obs, const Camerad& cam) {
  if (set.poses.empty()) throw ArgumentError("mean_reprojection_error: empty hypothesis set");
  double total = 0.0;
  for (std::size_t m = 0; m < set.poses.size(); ++m) {
    total += reprojection_error(to_absolute(set.poses[m], set.roots[m]), obs, cam);
  }
  return total / static_cast<double>(set.poses.size());
}

}  // namespace poseprior
