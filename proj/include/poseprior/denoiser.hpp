#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "poseprior/numeric.hpp"
#include "poseprior/schedule.hpp"

namespace poseprior {

struct DenoiserConfig {
  int num_joints = 17;
  int hidden = 1024;
  int steps = 1000;  // diffusion steps T
  double offset = 0.008;

  int input_dim() const { return 3 * num_joints; }
  bool operator==(const DenoiserConfig&) const = default;
};

/// Ordered list of dense tensors. Biases and batch-norm vectors are n x 1.
struct ParamSet {
  std::vector<Eigen::MatrixXd> tensors;

  std::size_t size() const { return tensors.size(); }
  Eigen::Index num_scalars() const;
  ParamSet zeros_like() const;
  double squared_norm() const;
  bool operator==(const ParamSet& o) const { return tensors == o.tensors; }
};

/// Tensor order inside ParamSet. Checkpoints store tensors in this order.
namespace param {
inline constexpr int kTimeW1 = 0;
inline constexpr int kTimeB1 = 1;
inline constexpr int kTimeW2 = 2;
inline constexpr int kTimeB2 = 3;
inline constexpr int kInW = 4;
inline constexpr int kInB = 5;
inline constexpr int kNumTrunkLayers = 4;  // two residual blocks of two layers
inline constexpr int trunk_w(int layer) { return 6 + 4 * layer; }
inline constexpr int trunk_b(int layer) { return 7 + 4 * layer; }
inline constexpr int bn_gamma(int layer) { return 8 + 4 * layer; }
inline constexpr int bn_beta(int layer) { return 9 + 4 * layer; }
inline constexpr int kOutW = 22;
inline constexpr int kOutB = 23;
inline constexpr int kCount = 24;
}  // namespace param

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kMinNormStd = 1.0;  // mm; the root joint has zero spread

/// Noise-prediction network eps_theta(x_t, t) with its training state.
struct DenoiserModel {
  DenoiserConfig config;
  ParamSet params;
  ParamSet ema;
  ParamSet adam_m;
  ParamSet adam_v;
  long adam_step = 0;
  std::vector<Eigen::VectorXd> running_mean;  // one per trunk layer
  std::vector<Eigen::VectorXd> running_var;
  Eigen::VectorXd norm_mean;  // mm, length 3J
  Eigen::VectorXd norm_std;

  /// Kaiming-uniform weights, zero biases, unit batch-norm scale.
  static DenoiserModel initialize(const DenoiserConfig& config, Rng& rng);

  DiffusionSchedule schedule() const { return cosine_schedule(config.steps, config.offset); }

  Eigen::VectorXd normalize(const Eigen::VectorXd& pose_mm) const;
  Eigen::VectorXd denormalize(const Eigen::VectorXd& x) const;

  bool operator==(const DenoiserModel&) const = default;
};

/// Sinusoidal timestep encoding of width dim.
Eigen::VectorXd sinusoidal_embedding(int t, int dim);

enum class ForwardMode { train, eval };
enum class Weights { live, ema };

struct BatchNormStats {
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::VectorXd> var;  // biased, over the batch
};

/// Batched forward pass. x is 3J x B in normalized space; t holds one step per column.
/// Train mode normalizes with batch statistics and reports them in *stats.
Eigen::MatrixXd forward(const DenoiserModel& model, const Eigen::MatrixXd& x, std::span<const int> t,
                        ForwardMode mode, Weights weights = Weights::live, BatchNormStats* stats = nullptr);

/// Eval-mode prediction for one state using the EMA weights.
Eigen::VectorXd predict_noise(const DenoiserModel& model, const Eigen::VectorXd& x_t, int t);

struct LossAndGrads {
  double loss = 0.0;
  ParamSet grads;
  BatchNormStats batch_stats;
};

/// Simplified objective for fixed draws: mean over columns of ||eps - eps_theta(x_t, t)||^2.
LossAndGrads loss_and_grads(const DenoiserModel& model, const Eigen::MatrixXd& x0, std::span<const int> t,
                            const Eigen::MatrixXd& eps);

/// Draws t ~ U{1..T} and eps ~ N(0, I) per column (t first, then eps), then evaluates the loss.
LossAndGrads loss_and_grads(const DenoiserModel& model, const Eigen::MatrixXd& x0, Rng& rng);

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(DenoiserModel& model, const ParamSet& grads, const AdamOptions& opt);
void ema_update(DenoiserModel& model, double decay);
void update_running_stats(DenoiserModel& model, const BatchNormStats& batch, Eigen::Index batch_size);

/// Rounds every stored tensor to float precision, the checkpoint storage type.
void quantize_to_float(DenoiserModel& model);

struct TrainOptions {
  long steps = 100000;
  int batch_size = 256;
  AdamOptions adam{};
  double ema_decay = 0.995;
  bool track_ema = true;
  long checkpoint_every = 0;  // 0 disables periodic checkpoints
};

struct TrainLogEntry {
  long step;
  double loss;
  double grad_norm;
};

struct TrainCallbacks {
  std::function<void(const TrainLogEntry&)> on_step;
  std::function<void(const DenoiserModel&, long step)> on_checkpoint;
};

/// poses: N x 3J root-relative millimeters, one pose per row.
void compute_normalization(DenoiserModel& model, const Eigen::MatrixXd& poses);

void train(DenoiserModel& model, const Eigen::MatrixXd& poses, const TrainOptions& options, Rng& rng,
           const TrainCallbacks& callbacks = {});

}  // namespace poseprior
