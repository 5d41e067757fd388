#include "poseprior/denoiser.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace poseprior {

Eigen::Index ParamSet::num_scalars() const {
  Eigen::Index n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  out.tensors.reserve(tensors.size());
  for (const auto& t : tensors) out.tensors.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  return out;
}

double ParamSet::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors) s += t.squaredNorm();
  return s;
}

namespace {

Eigen::MatrixXd kaiming_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(cols));
  Eigen::MatrixXd w(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) w(r, c) = bound * (2.0 * rng.uniform() - 1.0);
  return w;
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& a) { return a.cwiseMax(0.0); }

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& a) { return (a.array() > 0.0).cast<double>().matrix(); }

void quantize(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

void quantize(ParamSet& p) {
  for (auto& t : p.tensors) quantize(t);
}

void quantize(Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<double>(static_cast<float>(v(i)));
}

struct ForwardCache {
  Eigen::MatrixXd embedding;
  Eigen::MatrixXd time_pre;  // before relu
  Eigen::MatrixXd time_hidden;
  Eigen::MatrixXd time_emb;
  Eigen::MatrixXd x;
  std::array<Eigen::MatrixXd, param::kNumTrunkLayers> input;  // activation + time embedding
  std::array<Eigen::MatrixXd, param::kNumTrunkLayers> xhat;
  std::array<Eigen::MatrixXd, param::kNumTrunkLayers> bn_out;  // before relu
  std::array<Eigen::VectorXd, param::kNumTrunkLayers> inv_std;
  Eigen::MatrixXd out_input;
};

Eigen::MatrixXd run_forward(const DenoiserModel& model, const ParamSet& p, const Eigen::MatrixXd& x,
                            std::span<const int> t, ForwardMode mode, BatchNormStats* stats, ForwardCache* cache) {
  const int dim = model.config.input_dim();
  const int hidden = model.config.hidden;
  if (x.rows() != dim) {
    throw ArgumentError("denoiser forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                        std::to_string(dim));
  }
  if (static_cast<Eigen::Index>(t.size()) != x.cols()) throw ArgumentError("denoiser forward: one step per column");
  const Eigen::Index batch = x.cols();
  if (batch == 0) throw ArgumentError("denoiser forward: empty batch");
  if (mode == ForwardMode::train && batch < 2) throw ArgumentError("denoiser forward: train mode needs batch >= 2");

  Eigen::MatrixXd embedding(hidden, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (t[b] < 1 || t[b] > model.config.steps) throw ArgumentError("denoiser forward: step out of range");
    embedding.col(b) = sinusoidal_embedding(t[b], hidden);
  }
  Eigen::MatrixXd time_pre = p.tensors[param::kTimeW1] * embedding;
  time_pre.colwise() += p.tensors[param::kTimeB1].col(0);
  Eigen::MatrixXd time_hidden = relu(time_pre);
  Eigen::MatrixXd time_emb = p.tensors[param::kTimeW2] * time_hidden;
  time_emb.colwise() += p.tensors[param::kTimeB2].col(0);

  Eigen::MatrixXd h = p.tensors[param::kInW] * x;
  h.colwise() += p.tensors[param::kInB].col(0);

  if (stats != nullptr) {
    stats->mean.assign(param::kNumTrunkLayers, {});
    stats->var.assign(param::kNumTrunkLayers, {});
  }
  Eigen::MatrixXd block_in;
  for (int layer = 0; layer < param::kNumTrunkLayers; ++layer) {
    if (layer % 2 == 0) block_in = h;
    Eigen::MatrixXd input = h + time_emb;
    Eigen::MatrixXd z = p.tensors[param::trunk_w(layer)] * input;
    z.colwise() += p.tensors[param::trunk_b(layer)].col(0);

    Eigen::VectorXd mean;
    Eigen::VectorXd var;
    if (mode == ForwardMode::train) {
      mean = z.rowwise().mean();
      var = (z.colwise() - mean).array().square().rowwise().mean();
      if (stats != nullptr) {
        stats->mean[layer] = mean;
        stats->var[layer] = var;
      }
    } else {
      mean = model.running_mean[layer];
      var = model.running_var[layer];
    }
    const Eigen::VectorXd inv_std = (var.array() + kBatchNormEps).rsqrt().matrix();
    Eigen::MatrixXd xhat = (z.colwise() - mean).array().colwise() * inv_std.array();
    Eigen::MatrixXd y = (xhat.array().colwise() * p.tensors[param::bn_gamma(layer)].col(0).array()).matrix();
    y.colwise() += p.tensors[param::bn_beta(layer)].col(0);
    h = relu(y);
    if (layer % 2 == 1) h += block_in;

    if (cache != nullptr) {
      cache->input[layer] = std::move(input);
      cache->xhat[layer] = std::move(xhat);
      cache->bn_out[layer] = std::move(y);
      cache->inv_std[layer] = inv_std;
    }
  }
  Eigen::MatrixXd out_input = h + time_emb;
  Eigen::MatrixXd out = p.tensors[param::kOutW] * out_input;
  out.colwise() += p.tensors[param::kOutB].col(0);

  if (cache != nullptr) {
    cache->embedding = std::move(embedding);
    cache->time_pre = std::move(time_pre);
    cache->time_hidden = std::move(time_hidden);
    cache->time_emb = std::move(time_emb);
    cache->x = x;
    cache->out_input = std::move(out_input);
  }
  return out;
}

}  // namespace

DenoiserModel DenoiserModel::initialize(const DenoiserConfig& config, Rng& rng) {
  if (config.num_joints < 1 || config.hidden < 2 || config.steps < 1) {
    throw ArgumentError("DenoiserModel: invalid configuration");
  }
  const Eigen::Index hidden = config.hidden;
  const Eigen::Index dim = config.input_dim();
  DenoiserModel model;
  model.config = config;
  auto& t = model.params.tensors;
  t.resize(param::kCount);
  t[param::kTimeW1] = kaiming_uniform(hidden, hidden, rng);
  t[param::kTimeB1] = Eigen::MatrixXd::Zero(hidden, 1);
  t[param::kTimeW2] = kaiming_uniform(hidden, hidden, rng);
  t[param::kTimeB2] = Eigen::MatrixXd::Zero(hidden, 1);
  t[param::kInW] = kaiming_uniform(hidden, dim, rng);
  t[param::kInB] = Eigen::MatrixXd::Zero(hidden, 1);
  for (int layer = 0; layer < param::kNumTrunkLayers; ++layer) {
    t[param::trunk_w(layer)] = kaiming_uniform(hidden, hidden, rng);
    t[param::trunk_b(layer)] = Eigen::MatrixXd::Zero(hidden, 1);
    t[param::bn_gamma(layer)] = Eigen::MatrixXd::Ones(hidden, 1);
    t[param::bn_beta(layer)] = Eigen::MatrixXd::Zero(hidden, 1);
  }
  t[param::kOutW] = kaiming_uniform(dim, hidden, rng);
  t[param::kOutB] = Eigen::MatrixXd::Zero(dim, 1);
  quantize(model.params);
  model.ema = model.params;
  model.adam_m = model.params.zeros_like();
  model.adam_v = model.params.zeros_like();
  model.running_mean.assign(param::kNumTrunkLayers, Eigen::VectorXd::Zero(hidden));
  model.running_var.assign(param::kNumTrunkLayers, Eigen::VectorXd::Ones(hidden));
  model.norm_mean = Eigen::VectorXd::Zero(dim);
  model.norm_std = Eigen::VectorXd::Ones(dim);
  return model;
}

Eigen::VectorXd DenoiserModel::normalize(const Eigen::VectorXd& pose_mm) const {
  return ((pose_mm - norm_mean).array() / norm_std.array()).matrix();
}

Eigen::VectorXd DenoiserModel::denormalize(const Eigen::VectorXd& x) const {
  return (x.array() * norm_std.array()).matrix() + norm_mean;
}

Eigen::VectorXd sinusoidal_embedding(int t, int dim) {
  Eigen::VectorXd e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / std::max(half, 1));
    e(i) = std::sin(t * freq);
    e(i + half) = std::cos(t * freq);
  }
  if (dim % 2 == 1) e(dim - 1) = 0.0;
  return e;
}

Eigen::MatrixXd forward(const DenoiserModel& model, const Eigen::MatrixXd& x, std::span<const int> t,
                        ForwardMode mode, Weights weights, BatchNormStats* stats) {
  const ParamSet& p = weights == Weights::ema ? model.ema : model.params;
  return run_forward(model, p, x, t, mode, stats, nullptr);
}

Eigen::VectorXd predict_noise(const DenoiserModel& model, const Eigen::VectorXd& x_t, int t) {
  const int steps[1] = {t};
  return run_forward(model, model.ema, x_t, steps, ForwardMode::eval, nullptr, nullptr).col(0);
}

LossAndGrads loss_and_grads(const DenoiserModel& model, const Eigen::MatrixXd& x0, std::span<const int> t,
                            const Eigen::MatrixXd& eps) {
  const Eigen::Index batch = x0.cols();
  if (batch == 0) throw ArgumentError("loss_and_grads: empty batch");
  if (eps.rows() != x0.rows() || eps.cols() != batch) throw ArgumentError("loss_and_grads: noise shape mismatch");
  const DiffusionSchedule sched = model.schedule();
  Eigen::MatrixXd x_t(x0.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) x_t.col(b) = forward_sample(x0.col(b), t[b], eps.col(b), sched);

  const ParamSet& p = model.params;
  LossAndGrads result;
  ForwardCache cache;
  const Eigen::MatrixXd out = run_forward(model, p, x_t, t, ForwardMode::train, &result.batch_stats, &cache);
  const Eigen::MatrixXd residual = out - eps;
  result.loss = residual.squaredNorm() / static_cast<double>(batch);

  ParamSet& g = result.grads;
  g = p.zeros_like();
  const Eigen::MatrixXd d_out = (2.0 / static_cast<double>(batch)) * residual;
  g.tensors[param::kOutW] = d_out * cache.out_input.transpose();
  g.tensors[param::kOutB] = d_out.rowwise().sum();
  const Eigen::MatrixXd d_out_input = p.tensors[param::kOutW].transpose() * d_out;
  Eigen::MatrixXd d_time = d_out_input;
  Eigen::MatrixXd d_h = d_out_input;

  Eigen::MatrixXd d_skip;
  for (int layer = param::kNumTrunkLayers - 1; layer >= 0; --layer) {
    if (layer % 2 == 1) d_skip = d_h;
    const Eigen::MatrixXd d_y = (d_h.array() * (cache.bn_out[layer].array() > 0.0).cast<double>()).matrix();
    const Eigen::MatrixXd& xhat = cache.xhat[layer];
    g.tensors[param::bn_gamma(layer)] = (d_y.array() * xhat.array()).rowwise().sum().matrix();
    g.tensors[param::bn_beta(layer)] = d_y.rowwise().sum();
    const Eigen::ArrayXXd d_xhat = d_y.array().colwise() * p.tensors[param::bn_gamma(layer)].col(0).array();
    const Eigen::ArrayXd sum_d = d_xhat.rowwise().sum();
    const Eigen::ArrayXd sum_dx = (d_xhat * xhat.array()).rowwise().sum();
    const double n = static_cast<double>(batch);
    Eigen::ArrayXXd d_z = (n * d_xhat).colwise() - sum_d;
    d_z -= xhat.array().colwise() * sum_dx;
    d_z = d_z.colwise() * (cache.inv_std[layer].array() / n);

    g.tensors[param::trunk_w(layer)] = d_z.matrix() * cache.input[layer].transpose();
    g.tensors[param::trunk_b(layer)] = d_z.matrix().rowwise().sum();
    const Eigen::MatrixXd d_input = p.tensors[param::trunk_w(layer)].transpose() * d_z.matrix();
    d_time += d_input;
    d_h = d_input;
    if (layer % 2 == 0) d_h += d_skip;
  }
  g.tensors[param::kInW] = d_h * cache.x.transpose();
  g.tensors[param::kInB] = d_h.rowwise().sum();

  g.tensors[param::kTimeW2] = d_time * cache.time_hidden.transpose();
  g.tensors[param::kTimeB2] = d_time.rowwise().sum();
  const Eigen::MatrixXd d_time_pre =
      ((p.tensors[param::kTimeW2].transpose() * d_time).array() * relu_mask(cache.time_pre).array()).matrix();
  g.tensors[param::kTimeW1] = d_time_pre * cache.embedding.transpose();
  g.tensors[param::kTimeB1] = d_time_pre.rowwise().sum();
  return result;
}

LossAndGrads loss_and_grads(const DenoiserModel& model, const Eigen::MatrixXd& x0, Rng& rng) {
  if (x0.cols() == 0) throw ArgumentError("loss_and_grads: empty batch");
  std::vector<int> t(static_cast<std::size_t>(x0.cols()));
  Eigen::MatrixXd eps(x0.rows(), x0.cols());
  for (Eigen::Index b = 0; b < x0.cols(); ++b) {
    t[b] = static_cast<int>(rng.uniform_int(1, model.config.steps));
    eps.col(b) = rng.normal_vector(x0.rows());
  }
  return loss_and_grads(model, x0, t, eps);
}

void adam_step(DenoiserModel& model, const ParamSet& grads, const AdamOptions& opt) {
  if (grads.size() != model.params.size()) throw ArgumentError("adam_step: gradient layout mismatch");
  ++model.adam_step;
  const double correction1 = 1.0 - std::pow(opt.beta1, static_cast<double>(model.adam_step));
  const double correction2 = 1.0 - std::pow(opt.beta2, static_cast<double>(model.adam_step));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Eigen::ArrayXXd g = grads.tensors[i].array();
    auto m = model.adam_m.tensors[i].array();
    auto v = model.adam_v.tensors[i].array();
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.square();
    model.params.tensors[i].array() -= opt.lr * (m / correction1) / ((v / correction2).sqrt() + opt.eps);
  }
  quantize(model.params);
  quantize(model.adam_m);
  quantize(model.adam_v);
}

void ema_update(DenoiserModel& model, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw ArgumentError("ema_update: decay must lie in [0, 1)");
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    model.ema.tensors[i] = decay * model.ema.tensors[i] + (1.0 - decay) * model.params.tensors[i];
  }
  quantize(model.ema);
}

void update_running_stats(DenoiserModel& model, const BatchNormStats& batch, Eigen::Index batch_size) {
  const double unbias = static_cast<double>(batch_size) / static_cast<double>(std::max<Eigen::Index>(batch_size - 1, 1));
  for (int layer = 0; layer < param::kNumTrunkLayers; ++layer) {
    model.running_mean[layer] =
        (1.0 - kBatchNormMomentum) * model.running_mean[layer] + kBatchNormMomentum * batch.mean[layer];
    model.running_var[layer] =
        (1.0 - kBatchNormMomentum) * model.running_var[layer] + kBatchNormMomentum * unbias * batch.var[layer];
    quantize(model.running_mean[layer]);
    quantize(model.running_var[layer]);
  }
}

void quantize_to_float(DenoiserModel& model) {
  quantize(model.params);
  quantize(model.ema);
  quantize(model.adam_m);
  quantize(model.adam_v);
  for (auto& v : model.running_mean) quantize(v);
  for (auto& v : model.running_var) quantize(v);
}

void compute_normalization(DenoiserModel& model, const Eigen::MatrixXd& poses) {
  if (poses.rows() == 0) throw ArgumentError("compute_normalization: empty dataset");
  if (poses.cols() != model.config.input_dim()) throw SchemaError("compute_normalization: pose dimension mismatch");
  model.norm_mean = poses.colwise().mean().transpose();
  const Eigen::MatrixXd centred = poses.rowwise() - model.norm_mean.transpose();
  model.norm_std = (centred.array().square().colwise().mean().sqrt()).transpose().matrix().cwiseMax(kMinNormStd);
}

void train(DenoiserModel& model, const Eigen::MatrixXd& poses, const TrainOptions& options, Rng& rng,
           const TrainCallbacks& callbacks) {
  if (options.steps <= 0) return;
  if (poses.rows() == 0) throw ArgumentError("train: dataset is empty");
  if (options.batch_size < 2) throw ArgumentError("train: batch size must be >= 2");
  compute_normalization(model, poses);

  Eigen::MatrixXd normalized = poses.rowwise() - model.norm_mean.transpose();
  normalized = (normalized.array().rowwise() / model.norm_std.transpose().array()).matrix();

  Eigen::MatrixXd batch(model.config.input_dim(), options.batch_size);
  for (long step = 1; step <= options.steps; ++step) {
    for (int b = 0; b < options.batch_size; ++b) {
      batch.col(b) = normalized.row(rng.uniform_int(0, poses.rows() - 1)).transpose();
    }
    LossAndGrads lg = loss_and_grads(model, batch, rng);
    const double grad_norm = std::sqrt(lg.grads.squared_norm());
    if (!std::isfinite(lg.loss) || !std::isfinite(grad_norm)) {
      std::ostringstream msg;
      msg << "training diverged: loss=" << lg.loss << " grad_norm=" << grad_norm;
      throw DivergenceError(msg.str(), step);
    }
    adam_step(model, lg.grads, options.adam);
    update_running_stats(model, lg.batch_stats, options.batch_size);
    if (options.track_ema) ema_update(model, options.ema_decay);
    if (callbacks.on_step) callbacks.on_step({step, lg.loss, grad_norm});
    if (options.checkpoint_every > 0 && step % options.checkpoint_every == 0 && callbacks.on_checkpoint) {
      callbacks.on_checkpoint(model, step);
    }
  }
}

}  // namespace poseprior
