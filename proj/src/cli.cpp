#include "poseprior/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>

#include "poseprior/config.hpp"
#include "poseprior/io.hpp"
#include "poseprior/metrics.hpp"
#include "poseprior/sampler.hpp"
#include "poseprior/synthetic.hpp"

namespace poseprior {

namespace {

const char* env(const char* name) { return std::getenv(name); }

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

/// Command-line flags that override configuration keys.
class FlagBinder {
 public:
  CLI::Option* bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    entries_.push_back({nullptr, key, std::make_unique<std::string>()});
    auto& e = entries_.back();
    e.option = app->add_option(flag, *e.value, help);
    return e.option;
  }

  void apply(ConfigTree& tree) const {
    for (const auto& e : entries_)
      if (e.option->count() > 0) set_config_value(tree, e.key, *e.value);
  }

 private:
  struct Entry {
    CLI::Option* option;
    std::string key;
    std::unique_ptr<std::string> value;
  };
  std::list<Entry> entries_;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::string config_path;
  FlagBinder flags;
};

ConfigTree resolve(Context& ctx, const std::string& command) {
  ConfigTree tree = default_config_tree();
  if (!ctx.config_path.empty()) merge_config_file(tree, ctx.config_path);
  merge_environment(tree, env);
  ctx.flags.apply(tree);
  ctx.err << "# poseprior " << command << ": resolved configuration\n" << describe_config(tree);
  return tree;
}

std::string require_path(const std::string& value, const std::string& what) {
  if (value.empty()) throw ArgumentError("missing " + what);
  return value;
}

/// Opens path for writing, or returns ctx.out when path is empty or "-".
class OutputTarget {
 public:
  OutputTarget(std::ostream& fallback, const std::string& path) : stream_(&fallback) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::trunc);
      if (!file_) throw FormatError("cannot write " + path);
      stream_ = &file_;
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

std::vector<std::string> joint_names_for(int num_joints, const std::vector<std::string>& preferred,
                                         const AppConfig& cfg) {
  if (!preferred.empty()) return preferred;
  if (cfg.skeleton.num_joints() == num_joints) return cfg.skeleton.joint_names;
  return {};
}

// ---------------------------------------------------------------- synth

int cmd_synth(Context& ctx) {
  const AppConfig cfg = decode_config(resolve(ctx, "synth"));
  const std::filesystem::path dir = require_path(cfg.paths.output, "--out directory");
  std::filesystem::create_directories(dir);
  const SyntheticWorld world = generate_synthetic(cfg.skeleton);
  save_poses(world.train, dir / "train.jsonl");
  save_poses(world.test, dir / "test.jsonl");
  save_observations(world.observations, dir / "observations.jsonl");
  ctx.err << "wrote " << world.train.records.size() << " training poses, " << world.test.records.size()
          << " test poses and observations to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  std::string log;
  long checkpoint_every = 0;
};

int cmd_train(Context& ctx, const TrainFlags& flags) {
  const AppConfig cfg = decode_config(resolve(ctx, "train"));
  const std::string out = require_path(cfg.paths.output, "--out");
  const PoseDataset data = load_poses(require_path(cfg.paths.poses, "--poses"));
  const TrainSettings& ts = cfg.train;

  Rng init_rng(ts.seed, 0);
  DenoiserModel model = DenoiserModel::initialize({data.num_joints, ts.hidden, ts.T, ts.offset}, init_rng);
  TrainOptions opt;
  opt.steps = ts.steps;
  opt.batch_size = ts.batch;
  opt.adam.lr = ts.lr;
  opt.ema_decay = ts.ema;
  opt.checkpoint_every = flags.checkpoint_every;

  OutputTarget log(ctx.err, flags.log.empty() ? out + ".loss.csv" : flags.log);
  log.get() << "step,loss,grad_norm\n";
  const long report_every = std::max<long>(1, ts.steps / 10);
  TrainCallbacks callbacks;
  callbacks.on_step = [&](const TrainLogEntry& e) {
    log.get() << e.step << ',' << num(e.loss) << ',' << num(e.grad_norm) << '\n';
    if (e.step % report_every == 0) ctx.err << "step " << e.step << "/" << ts.steps << " loss " << e.loss << "\n";
  };
  callbacks.on_checkpoint = [&](const DenoiserModel& m, long step) {
    save_checkpoint(m, out + ".step" + std::to_string(step));
  };

  Rng train_rng(ts.seed, 1);
  train(model, data.matrix(), opt, train_rng, callbacks);
  save_checkpoint(model, out);
  ctx.err << "saved " << out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- sampling commands

struct SamplingFlags {
  std::string space = "x0";
  std::string csv;
  std::string mask;
  long max_frames = 0;
};

GuidanceConfig guidance_from(const AppConfig& cfg, const SamplingFlags& flags) {
  GuidanceConfig gc;
  gc.gamma = cfg.sampler.gamma;
  gc.cov_scale = cfg.sampler.cov_scale;
  gc.cov_rotate = cfg.sampler.cov_rotate;
  gc.num_hypotheses = cfg.sampler.M;
  gc.seed = cfg.sampler.seed;
  gc.renoise = cfg.sampler.renoise == "linear" ? RenoiseVariant::linear_noise : RenoiseVariant::variance_preserving;
  if (flags.space == "x0") {
    gc.space = GuidanceSpace::denoised_estimate;
  } else if (flags.space == "xt") {
    gc.space = GuidanceSpace::noisy_state;
  } else {
    throw ArgumentError("--space must be x0 or xt");
  }
  gc.threads = capped_threads(cfg.sampler.threads, env);
  gc.check();
  return gc;
}

/// Joint indices named by a comma list of names or indices; "all" selects every joint.
std::vector<int> parse_mask(const std::string& spec, int num_joints, const std::vector<std::string>& names) {
  std::vector<int> out;
  if (spec == "all") {
    for (int j = 0; j < num_joints; ++j) out.push_back(j);
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    int index = -1;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), index);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      const auto it = std::find(names.begin(), names.end(), item);
      if (it == names.end()) throw ArgumentError("unknown joint '" + item + "'");
      index = static_cast<int>(it - names.begin());
    }
    if (index < 0 || index >= num_joints) throw ArgumentError("joint index " + item + " out of range");
    if (std::find(out.begin(), out.end(), index) == out.end()) out.push_back(index);
  }
  return out;
}

void check_compatible(const DenoiserModel& model, const ObservationSet& obs) {
  if (obs.num_joints != model.config.num_joints) {
    throw SchemaError("observation file has " + std::to_string(obs.num_joints) + " joints, checkpoint expects " +
                      std::to_string(model.config.num_joints));
  }
}

std::size_t frame_count(const ObservationSet& obs, long max_frames) {
  return max_frames > 0 ? std::min(obs.records.size(), static_cast<std::size_t>(max_frames)) : obs.records.size();
}

struct FrameMetrics {
  std::optional<double> mpjpe, pa_mpjpe, pck, auc, reprojection;
};

/// Best-of-M: minimum MPJPE and PA-MPJPE over hypotheses; PCK and AUC of the
/// minimum-MPJPE hypothesis.
FrameMetrics best_of_m_metrics(std::span<const Pose> hypotheses, const Pose& gt) {
  FrameMetrics m;
  std::size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const double e = mpjpe(hypotheses[i], gt);
    if (e < best_err) {
      best_err = e;
      best = i;
    }
  }
  m.mpjpe = best_err;
  m.pa_mpjpe = best_of_m(hypotheses, gt, [](const Pose& p, const Pose& g) { return pa_mpjpe(p, g); });
  m.pck = pck(hypotheses[best], gt);
  m.auc = auc(hypotheses[best], gt);
  return m;
}

const char* kMetricsHeader = "frame_id,M,mpjpe,pa_mpjpe,pck150,auc,reprojection_px\n";

void write_metrics_row(std::ostream& out, const std::string& frame, std::size_t m, const FrameMetrics& fm) {
  auto field = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  out << frame << ',' << m << ',' << field(fm.mpjpe) << ',' << field(fm.pa_mpjpe) << ',' << field(fm.pck) << ','
      << field(fm.auc) << ',' << field(fm.reprojection) << '\n';
}

/// Running means of the metric columns over frames.
class MetricsAverage {
 public:
  void add(const FrameMetrics& fm) {
    add_one(0, fm.mpjpe);
    add_one(1, fm.pa_mpjpe);
    add_one(2, fm.pck);
    add_one(3, fm.auc);
    add_one(4, fm.reprojection);
  }
  FrameMetrics mean() const {
    auto get = [this](int i) -> std::optional<double> {
      if (count_[i] == 0) return std::nullopt;
      return sum_[i] / count_[i];
    };
    return {get(0), get(1), get(2), get(3), get(4)};
  }

 private:
  void add_one(int i, const std::optional<double>& v) {
    if (!v) return;
    sum_[i] += *v;
    ++count_[i];
  }
  std::array<double, 5> sum_{};
  std::array<long, 5> count_{};
};

int cmd_estimate(Context& ctx, const SamplingFlags& flags, const char* name) {
  const bool completion = !flags.mask.empty();
  const AppConfig cfg = decode_config(resolve(ctx, name));
  const std::string out = require_path(cfg.paths.output, "--out");
  const DenoiserModel model = load_checkpoint(require_path(cfg.paths.model, "--model"));
  const ObservationSet obs = load_observations(require_path(cfg.paths.observations, "--obs"));
  check_compatible(model, obs);
  const GuidanceConfig gc = guidance_from(cfg, flags);
  const auto names = joint_names_for(obs.num_joints, obs.joint_names, cfg);
  const std::vector<int> mask = completion ? parse_mask(flags.mask, obs.num_joints, names) : std::vector<int>{};
  ctx.err << "# seed " << gc.seed << ", threads " << gc.threads << "\n";

  HypothesisFile file;
  file.num_joints = obs.num_joints;
  file.joint_names = obs.joint_names;
  file.root_index = obs.root_index;
  file.meta = {name,           gc.seed,         gc.gamma, gc.cov_scale, gc.cov_rotate, gc.num_hypotheses,
               cfg.sampler.renoise, flags.space, mask};

  OutputTarget csv(ctx.err, flags.csv.empty() ? out + ".csv" : flags.csv);
  csv.get() << kMetricsHeader;
  MetricsAverage average;
  const DiffusionSchedule sched = model.schedule();
  const std::size_t frames = frame_count(obs, flags.max_frames);
  long skips = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    const ObservationRecord& rec = obs.records[f];
    const GuidanceProblem problem{rec.sources, rec.camera, rec.root, obs.root_index};
    const HypothesisSet set =
        mask.empty() ? sample_guided(model, sched, problem, gc) : complete_pose(model, sched, problem, mask, gc);
    skips += set.behind_camera_skips;
    append_hypotheses(file, rec.frame_id, set);

    FrameMetrics fm;
    if (rec.gt_absolute) {
      const Pose gt = to_root_relative(Pose{*rec.gt_absolute, PoseFrame::absolute_camera, obs.root_index});
      fm = best_of_m_metrics(set.poses, gt);
    }
    if (rec.sources.front().num_valid() > 0) {
      fm.reprojection = mean_reprojection_error(set, rec.sources.front(), rec.camera);
    }
    write_metrics_row(csv.get(), std::to_string(rec.frame_id), set.poses.size(), fm);
    average.add(fm);
  }
  write_metrics_row(csv.get(), "all", static_cast<std::size_t>(gc.num_hypotheses), average.mean());
  save_hypotheses(file, out);
  ctx.err << "wrote " << file.records.size() << " hypotheses for " << frames << " frames to " << out;
  if (skips > 0) ctx.err << " (" << skips << " behind-camera joint evaluations skipped)";
  ctx.err << "\n";
  return kExitOk;
}

int cmd_sample(Context& ctx, int n) {
  const AppConfig cfg = decode_config(resolve(ctx, "sample"));
  const std::string out = require_path(cfg.paths.output, "--out");
  if (n < 0) throw ArgumentError("-n must be >= 0");
  const DenoiserModel model = load_checkpoint(require_path(cfg.paths.model, "--model"));
  const int threads = capped_threads(cfg.sampler.threads, env);
  ctx.err << "# seed " << cfg.sampler.seed << ", threads " << threads << "\n";
  const std::vector<Pose> poses = sample_unconditional(model, model.schedule(), cfg.sampler.seed, n, threads);

  PoseDataset ds;
  ds.num_joints = model.config.num_joints;
  ds.joint_names = joint_names_for(ds.num_joints, {}, cfg);
  for (int i = 0; i < n; ++i) ds.records.push_back({i, poses[i].flat(), std::nullopt, std::nullopt});
  save_poses(ds, out);
  ctx.err << "wrote " << n << " poses to " << out << "\n";
  return kExitOk;
}

struct SweepFlags {
  std::string kind;
  std::vector<double> values;
  long max_frames = 0;
};

int cmd_sweep(Context& ctx, const SweepFlags& flags) {
  const AppConfig cfg = decode_config(resolve(ctx, "sweep"));
  if (flags.kind != "cov-scale" && flags.kind != "gamma") throw ArgumentError("--sweep must be cov-scale or gamma");
  if (flags.values.empty()) throw ArgumentError("--values is empty");
  const DenoiserModel model = load_checkpoint(require_path(cfg.paths.model, "--model"));
  const ObservationSet obs = load_observations(require_path(cfg.paths.observations, "--obs"));
  check_compatible(model, obs);
  const GuidanceConfig base = guidance_from(cfg, SamplingFlags{});
  const DiffusionSchedule sched = model.schedule();
  const std::size_t frames = frame_count(obs, flags.max_frames);
  if (frames == 0) throw ArgumentError("observation file has no frames");

  OutputTarget target(ctx.out, cfg.paths.output);
  std::ostream& csv = target.get();
  csv << (flags.kind == "cov-scale" ? "s,per_joint_std_mm\n" : "gamma,reprojection_px,mpjpe_mm\n");
  for (double value : flags.values) {
    GuidanceConfig gc = base;
    if (flags.kind == "cov-scale") {
      gc.cov_scale = value;
    } else {
      gc.gamma = value;
    }
    gc.check();
    double std_sum = 0.0, rep_sum = 0.0, mpjpe_sum = 0.0;
    long rep_n = 0, mpjpe_n = 0;
    for (std::size_t f = 0; f < frames; ++f) {
      const ObservationRecord& rec = obs.records[f];
      const GuidanceProblem problem{rec.sources, rec.camera, rec.root, obs.root_index};
      if (flags.kind == "cov-scale") {
        const auto rows = diversity_sweep(model, sched, problem, gc, std::span<const double>(&value, 1));
        std_sum += rows.front().per_joint_std_mm;
        continue;
      }
      const HypothesisSet set = sample_guided(model, sched, problem, gc);
      if (rec.sources.front().num_valid() > 0) {
        rep_sum += mean_reprojection_error(set, rec.sources.front(), rec.camera);
        ++rep_n;
      }
      if (rec.gt_absolute) {
        const Pose gt = to_root_relative(Pose{*rec.gt_absolute, PoseFrame::absolute_camera, obs.root_index});
        for (const Pose& p : set.poses) mpjpe_sum += mpjpe(p, gt);
        mpjpe_n += static_cast<long>(set.poses.size());
      }
    }
    if (flags.kind == "cov-scale") {
      csv << num(value) << ',' << num(std_sum / static_cast<double>(frames)) << '\n';
    } else {
      csv << num(value) << ',' << (rep_n ? num(rep_sum / rep_n) : "") << ','
          << (mpjpe_n ? num(mpjpe_sum / mpjpe_n) : "") << '\n';
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- heatmaps

int cmd_fit_heatmap(Context& ctx, const std::vector<std::string>& files, long frame_id) {
  const AppConfig cfg = decode_config(resolve(ctx, "fit-heatmap"));
  if (files.empty()) throw ArgumentError("no heatmap files given");
  KeypointObservation obs = KeypointObservation::empty(static_cast<Eigen::Index>(files.size()));
  for (std::size_t j = 0; j < files.size(); ++j) {
    const Heatmap hm = load_heatmap(files[j]);
    try {
      const GaussianFit fit = fit_gaussian_heatmap(hm);
      obs.means.row(static_cast<Eigen::Index>(j)) = fit.mean.transpose();
      obs.covs[j] = fit.cov;
      obs.cov_fallback[j] = false;
      obs.valid[j] = true;
    } catch (const InsufficientSupportError& e) {
      ctx.err << "warning: joint " << j << " (" << files[j] << "): " << e.what() << "; marked invalid\n";
    } catch (const FitFailureError& e) {
      ctx.err << "warning: joint " << j << " (" << files[j] << "): " << e.what() << "; marked invalid\n";
    }
  }
  OutputTarget target(ctx.out, cfg.paths.output);
  write_keypoint_fragment(target.get(), frame_id, obs);
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateFlags {
  std::string hypotheses;
  std::string ground_truth;
  long stride = 1;
};

int cmd_evaluate(Context& ctx, const EvaluateFlags& flags) {
  const AppConfig cfg = decode_config(resolve(ctx, "evaluate"));
  if (flags.stride < 1) throw ArgumentError("--stride must be >= 1");
  const HypothesisFile hyps = load_hypotheses(require_path(flags.hypotheses, "--hyp"));
  const PoseDataset gt = load_poses(require_path(flags.ground_truth, "--gt"));
  if (gt.num_joints != hyps.num_joints) throw SchemaError("hypothesis and ground-truth joint counts differ");
  std::optional<ObservationSet> obs;
  if (!cfg.paths.observations.empty()) obs = load_observations(cfg.paths.observations);

  std::map<long, std::size_t> gt_by_id;
  for (std::size_t i = 0; i < gt.records.size(); ++i) gt_by_id[gt.records[i].id] = i;
  std::map<long, std::size_t> obs_by_id;
  if (obs)
    for (std::size_t i = 0; i < obs->records.size(); ++i) obs_by_id[obs->records[i].frame_id] = i;

  // Frames in file order, hypotheses grouped per frame.
  std::vector<long> order;
  std::map<long, std::vector<const HypothesisRecord*>> by_frame;
  for (const auto& r : hyps.records) {
    auto& list = by_frame[r.frame_id];
    if (list.empty()) order.push_back(r.frame_id);
    list.push_back(&r);
  }

  OutputTarget target(ctx.out, cfg.paths.output);
  std::ostream& csv = target.get();
  csv << kMetricsHeader;
  MetricsAverage average;
  std::size_t evaluated = 0;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(flags.stride)) {
    const long frame = order[i];
    const auto it = gt_by_id.find(frame);
    if (it == gt_by_id.end()) throw SchemaError("frame " + std::to_string(frame) + " has no ground-truth pose");
    const Pose truth = gt.pose(it->second);
    std::vector<Pose> poses;
    HypothesisSet set;
    for (const HypothesisRecord* r : by_frame[frame]) {
      poses.push_back(Pose::from_flat(r->joints, PoseFrame::root_relative, hyps.root_index));
      set.roots.push_back(r->root);
    }
    FrameMetrics fm = best_of_m_metrics(poses, truth);
    if (obs) {
      const auto o = obs_by_id.find(frame);
      if (o == obs_by_id.end()) throw SchemaError("frame " + std::to_string(frame) + " has no observation");
      const ObservationRecord& rec = obs->records[o->second];
      if (rec.sources.front().num_valid() > 0) {
        set.poses = poses;
        fm.reprojection = mean_reprojection_error(set, rec.sources.front(), rec.camera);
      }
    }
    write_metrics_row(csv, std::to_string(frame), poses.size(), fm);
    average.add(fm);
    ++evaluated;
  }
  const std::size_t m = order.empty() ? 0 : by_frame[order.front()].size();
  write_metrics_row(csv, "all", m, average.mean());
  ctx.err << "evaluated " << evaluated << " of " << order.size() << " frames (stride " << flags.stride << ")\n";
  return kExitOk;
}

int cmd_config(Context& ctx) {
  const ConfigTree tree = resolve(ctx, "config");
  decode_config(tree);
  boost::property_tree::write_ini(ctx.out, tree);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion pose prior with geometric guidance for 3D human pose estimation", "poseprior"};
  app.require_subcommand(1);
  Context ctx{out, err, {}, {}};
  app.add_option("--config", ctx.config_path, "INI configuration file")->check(CLI::ExistingFile);
  auto& flags = ctx.flags;

  auto add_threads = [&](CLI::App* sub) {
    flags.bind(sub, "--threads", "sampler.threads", "worker threads (capped by POSEPRIOR_THREADS)");
  };

  auto* synth = app.add_subcommand("synth", "generate the synthetic skeleton world");
  flags.bind(synth, "--out", "paths.output", "output directory");
  flags.bind(synth, "--num-train", "skeleton.num_train", "training poses");
  flags.bind(synth, "--num-test", "skeleton.num_test", "test poses with observations");
  flags.bind(synth, "--seed", "skeleton.seed", "random seed");

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train the denoiser on a pose file");
  flags.bind(train_cmd, "--poses", "paths.poses", "training pose file");
  flags.bind(train_cmd, "--out", "paths.output", "checkpoint path");
  flags.bind(train_cmd, "--steps", "train.steps", "optimizer steps (default 100000)");
  flags.bind(train_cmd, "--batch", "train.batch", "batch size (default 256)");
  flags.bind(train_cmd, "--lr", "train.lr", "Adam learning rate (default 1e-4)");
  flags.bind(train_cmd, "--ema", "train.ema", "EMA decay (default 0.995)");
  flags.bind(train_cmd, "--hidden", "train.hidden", "hidden width (default 1024)");
  flags.bind(train_cmd, "--T", "train.T", "diffusion steps (default 1000)");
  flags.bind(train_cmd, "--offset", "train.offset", "cosine schedule offset (default 0.008)");
  flags.bind(train_cmd, "--seed", "train.seed", "random seed");
  train_cmd->add_option("--log", train_flags.log, "loss log CSV (default <out>.loss.csv)");
  train_cmd->add_option("--checkpoint-every", train_flags.checkpoint_every, "write <out>.step<N> every N steps");

  SamplingFlags sampling;
  auto add_sampling = [&](CLI::App* sub) {
    flags.bind(sub, "--model", "paths.model", "checkpoint");
    flags.bind(sub, "--obs", "paths.observations", "observation file");
    flags.bind(sub, "--out", "paths.output", "hypothesis file");
    flags.bind(sub, "-M", "sampler.M", "hypotheses per frame (default 50)");
    flags.bind(sub, "--gamma", "sampler.gamma", "guidance scale (default 2e-4)");
    flags.bind(sub, "--cov-scale", "sampler.cov_scale", "keypoint covariance scale s (default 1)");
    flags.bind(sub, "--cov-rotate", "sampler.cov_rotate", "keypoint covariance rotation, radians (default 0)");
    flags.bind(sub, "--renoise", "sampler.renoise", "renoising rule: vp or linear (default vp)");
    flags.bind(sub, "--seed", "sampler.seed", "random seed");
    add_threads(sub);
    sub->add_option("--space", sampling.space, "where guidance is applied: x0 or xt (default x0)");
    sub->add_option("--csv", sampling.csv, "per-frame metrics CSV (default <out>.csv)");
    sub->add_option("--max-frames", sampling.max_frames, "only the first N frames");
  };
  auto* estimate = app.add_subcommand("estimate", "guided sampling of 3D pose hypotheses");
  add_sampling(estimate);
  auto* complete = app.add_subcommand("complete", "guided sampling with joints masked out");
  add_sampling(complete);
  complete->add_option("--mask", sampling.mask, "comma-separated joint names or indices, or 'all'");

  int sample_n = 0;
  auto* sample = app.add_subcommand("sample", "unconditional pose samples");
  flags.bind(sample, "--model", "paths.model", "checkpoint");
  flags.bind(sample, "--out", "paths.output", "pose file");
  flags.bind(sample, "--seed", "sampler.seed", "random seed");
  add_threads(sample);
  sample->add_option("-n", sample_n, "number of samples")->required();

  SweepFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "diversity or guidance-strength sweep as CSV");
  flags.bind(sweep, "--model", "paths.model", "checkpoint");
  flags.bind(sweep, "--obs", "paths.observations", "observation file");
  flags.bind(sweep, "--out", "paths.output", "CSV path (default standard output)");
  flags.bind(sweep, "-M", "sampler.M", "hypotheses per frame (default 50)");
  flags.bind(sweep, "--gamma", "sampler.gamma", "guidance scale (default 2e-4)");
  flags.bind(sweep, "--cov-scale", "sampler.cov_scale", "keypoint covariance scale s (default 1)");
  flags.bind(sweep, "--seed", "sampler.seed", "random seed");
  add_threads(sweep);
  sweep->add_option("--sweep", sweep_flags.kind, "cov-scale or gamma")->required();
  sweep->add_option("--values", sweep_flags.values, "comma-separated values")->required()->delimiter(',');
  sweep->add_option("--max-frames", sweep_flags.max_frames, "only the first N frames");

  std::vector<std::string> heatmap_files;
  long frame_id = 0;
  auto* fit = app.add_subcommand("fit-heatmap", "fit Gaussians to per-joint heatmaps");
  flags.bind(fit, "--out", "paths.output", "output path (default standard output)");
  fit->add_option("--frame-id", frame_id, "frame id of the record");
  fit->add_option("heatmaps", heatmap_files, "one heatmap file per joint, in joint order")->required();

  EvaluateFlags eval_flags;
  auto* evaluate = app.add_subcommand("evaluate", "best-of-M metrics for a hypothesis file");
  evaluate->add_option("--hyp", eval_flags.hypotheses, "hypothesis file")->required();
  evaluate->add_option("--gt", eval_flags.ground_truth, "ground-truth pose file (record id = frame id)")->required();
  flags.bind(evaluate, "--obs", "paths.observations", "observation file, adds reprojection error");
  flags.bind(evaluate, "--out", "paths.output", "CSV path (default standard output)");
  evaluate->add_option("--stride", eval_flags.stride, "evaluate every N-th frame (default 1)");

  auto* config = app.add_subcommand("config", "print the resolved configuration as INI");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (synth->parsed()) return cmd_synth(ctx);
    if (train_cmd->parsed()) return cmd_train(ctx, train_flags);
    if (estimate->parsed()) return cmd_estimate(ctx, sampling, "estimate");
    if (complete->parsed()) return cmd_estimate(ctx, sampling, "complete");
    if (sample->parsed()) return cmd_sample(ctx, sample_n);
    if (sweep->parsed()) return cmd_sweep(ctx, sweep_flags);
    if (fit->parsed()) return cmd_fit_heatmap(ctx, heatmap_files, frame_id);
    if (evaluate->parsed()) return cmd_evaluate(ctx, eval_flags);
    if (config->parsed()) return cmd_config(ctx);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << " (step " << e.step << ")\n";
    return kExitDivergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace poseprior
