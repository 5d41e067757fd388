#include "poseprior/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace poseprior {

using nlohmann::json;

namespace {

constexpr const char* kPoseFormat = "poseprior/poses";
constexpr const char* kObservationFormat = "poseprior/observations";
constexpr const char* kHypothesisFormat = "poseprior/hypotheses";
constexpr double kRootTolerance = 1e-6;  // mm

std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------- JSON lines

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  /// Next non-blank line parsed as JSON, or nullopt at end of input.
  std::optional<json> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_number_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        return json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), line_number_);
      }
    }
    return std::nullopt;
  }

  long line() const { return line_number_; }

 private:
  std::istream& in_;
  long line_number_ = 0;
};

template <typename T>
T field(const json& j, const char* key, long line) {
  if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'", line);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad field '") + key + "': " + e.what(), line);
  }
}

Eigen::VectorXd vector_field(const json& j, const char* key, long line, Eigen::Index expected) {
  const auto values = field<std::vector<double>>(j, key, line);
  if (expected >= 0 && static_cast<Eigen::Index>(values.size()) != expected) {
    throw SchemaError("field '" + std::string(key) + "' has " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(expected) + " (line " + std::to_string(line) + ")");
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json to_json(const Eigen::Ref<const Eigen::VectorXd>& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

struct Header {
  int num_joints = 0;
  std::vector<std::string> joint_names;
  int root_index = 0;
};

json header_json(const char* format, int version, const Header& h) {
  return json{{"format", format},
              {"version", version},
              {"J", h.num_joints},
              {"joints", h.joint_names},
              {"root_index", h.root_index}};
}

Header read_header(LineReader& reader, const char* format, int version, json* raw = nullptr) {
  const auto j = reader.next();
  if (!j) throw FormatError(std::string("empty file, expected a ") + format + " header");
  const long line = reader.line();
  if (field<std::string>(*j, "format", line) != format) {
    throw FormatError(std::string("not a ") + format + " file");
  }
  if (field<int>(*j, "version", line) != version) {
    throw VersionError(std::string(format) + " version " + std::to_string(field<int>(*j, "version", line)) +
                       " is not supported");
  }
  Header h;
  h.num_joints = field<int>(*j, "J", line);
  if (h.num_joints < 1) throw SchemaError("header declares no joints");
  if (j->contains("joints")) h.joint_names = field<std::vector<std::string>>(*j, "joints", line);
  if (!h.joint_names.empty() && static_cast<int>(h.joint_names.size()) != h.num_joints) {
    throw SchemaError("header joint names do not match J");
  }
  if (j->contains("root_index")) h.root_index = field<int>(*j, "root_index", line);
  if (h.root_index < 0 || h.root_index >= h.num_joints) throw SchemaError("header root_index out of range");
  if (raw != nullptr) *raw = *j;
  return h;
}

void check_root_at_origin(const Eigen::VectorXd& joints, int root_index, long line) {
  if (joints.segment<3>(3 * root_index).cwiseAbs().maxCoeff() > kRootTolerance) {
    throw SchemaError("pose record has its root joint away from the origin (line " + std::to_string(line) + ")");
  }
}

// ------------------------------------------------------------ binary helpers

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> bytes{};
  if (!in.read(bytes.data(), bytes.size())) throw FormatError("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

void put_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

void expect_magic(std::istream& in, const char (&magic)[5]) {
  std::array<char, 4> got{};
  if (!in.read(got.data(), 4) || std::memcmp(got.data(), magic, 4) != 0) {
    throw FormatError(std::string("bad magic, expected ") + magic);
  }
}

}  // namespace

// ---------------------------------------------------------------- poses

Eigen::MatrixXd PoseDataset::matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(records.size()), 3 * num_joints);
  for (std::size_t i = 0; i < records.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = records[i].joints.transpose();
  return m;
}

Pose PoseDataset::pose(std::size_t i) const {
  return Pose::from_flat(records.at(i).joints, PoseFrame::root_relative, root_index);
}

void write_poses(std::ostream& out, const PoseDataset& dataset) {
  out << header_json(kPoseFormat, kPoseFormatVersion, {dataset.num_joints, dataset.joint_names, dataset.root_index})
             .dump()
      << '\n';
  for (const auto& r : dataset.records) {
    if (r.joints.size() != 3 * dataset.num_joints) throw SchemaError("pose record has the wrong length");
    json j{{"id", r.id}, {"joints", to_json(r.joints)}};
    if (r.subject) j["subject"] = *r.subject;
    if (r.frame) j["frame"] = *r.frame;
    out << j.dump() << '\n';
  }
}

PoseDataset read_poses(std::istream& in) {
  LineReader reader(in);
  const Header h = read_header(reader, kPoseFormat, kPoseFormatVersion);
  PoseDataset ds;
  ds.num_joints = h.num_joints;
  ds.joint_names = h.joint_names;
  ds.root_index = h.root_index;
  while (auto j = reader.next()) {
    const long line = reader.line();
    PoseRecord r;
    r.id = field<long>(*j, "id", line);
    r.joints = vector_field(*j, "joints", line, 3 * h.num_joints);
    check_root_at_origin(r.joints, h.root_index, line);
    if (j->contains("subject")) r.subject = field<std::string>(*j, "subject", line);
    if (j->contains("frame")) r.frame = field<long>(*j, "frame", line);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

void save_poses(const PoseDataset& dataset, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_poses(out, dataset);
}

PoseDataset load_poses(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_poses(in);
}

// ---------------------------------------------------------------- observations

namespace {

json keypoints_json(const KeypointObservation& obs) {
  json arr = json::array();
  for (Eigen::Index j = 0; j < obs.num_joints(); ++j) {
    json kp{{"mean", {obs.means(j, 0), obs.means(j, 1)}}, {"valid", static_cast<bool>(obs.valid[j])}};
    if (!obs.cov_fallback[j]) kp["cov"] = {obs.covs[j].a, obs.covs[j].b, obs.covs[j].c};
    arr.push_back(std::move(kp));
  }
  return arr;
}

KeypointObservation parse_keypoints(const json& arr, int num_joints, long line) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != num_joints) {
    throw SchemaError("keypoint list must have J entries (line " + std::to_string(line) + ")");
  }
  KeypointObservation obs = KeypointObservation::empty(num_joints);
  for (int j = 0; j < num_joints; ++j) {
    const json& kp = arr[j];
    obs.valid[j] = kp.contains("valid") ? field<bool>(kp, "valid", line) : true;
    if (kp.contains("mean")) {
      obs.means.row(j) = vector_field(kp, "mean", line, 2).transpose();
    } else if (obs.valid[j]) {
      throw ParseError("valid keypoint " + std::to_string(j) + " has no mean", line);
    }
    if (kp.contains("cov")) {
      const Eigen::VectorXd c = vector_field(kp, "cov", line, 3);
      obs.covs[j] = {c(0), c(1), c(2)};
      obs.cov_fallback[j] = false;
      if (obs.valid[j] && !obs.covs[j].positive_definite()) {
        throw SchemaError("keypoint " + std::to_string(j) + " covariance is not positive definite (line " +
                          std::to_string(line) + ")");
      }
    }
  }
  return obs;
}

}  // namespace

void write_observations(std::ostream& out, const ObservationSet& set) {
  out << header_json(kObservationFormat, kObservationFormatVersion, {set.num_joints, set.joint_names, set.root_index})
             .dump()
      << '\n';
  for (const auto& r : set.records) {
    json j{{"frame_id", r.frame_id},
           {"camera", {{"fx", r.camera.fx}, {"fy", r.camera.fy}, {"cx", r.camera.cx}, {"cy", r.camera.cy}}}};
    if (r.sources.size() == 1) {
      j["keypoints"] = keypoints_json(r.sources.front());
    } else {
      json sources = json::array();
      for (const auto& s : r.sources) sources.push_back(keypoints_json(s));
      j["sources"] = std::move(sources);
    }
    json root{{"mean", to_json(r.root.mean)}};
    if (!r.root_fallback) root["var"] = to_json(r.root.variance);
    j["root"] = std::move(root);
    if (r.gt_absolute) j["gt"] = to_json(Eigen::Map<const Eigen::VectorXd>(r.gt_absolute->data(), r.gt_absolute->size()));
    out << j.dump() << '\n';
  }
}

void write_keypoint_fragment(std::ostream& out, long frame_id, const KeypointObservation& obs) {
  out << json{{"frame_id", frame_id}, {"keypoints", keypoints_json(obs)}}.dump() << '\n';
}

ObservationSet read_observations(std::istream& in) {
  LineReader reader(in);
  const Header h = read_header(reader, kObservationFormat, kObservationFormatVersion);
  ObservationSet set;
  set.num_joints = h.num_joints;
  set.joint_names = h.joint_names;
  set.root_index = h.root_index;
  while (auto j = reader.next()) {
    const long line = reader.line();
    ObservationRecord r;
    r.frame_id = field<long>(*j, "frame_id", line);
    const json cam = field<json>(*j, "camera", line);
    r.camera = {field<double>(cam, "fx", line), field<double>(cam, "fy", line), field<double>(cam, "cx", line),
                field<double>(cam, "cy", line)};
    if (!(r.camera.fx > 0 && r.camera.fy > 0)) throw SchemaError("camera focal lengths must be positive");
    if (j->contains("keypoints")) {
      r.sources.push_back(parse_keypoints((*j)["keypoints"], h.num_joints, line));
    } else if (j->contains("sources")) {
      for (const auto& s : (*j)["sources"]) r.sources.push_back(parse_keypoints(s, h.num_joints, line));
    } else {
      throw ParseError("record has neither 'keypoints' nor 'sources'", line);
    }
    if (j->contains("root")) {
      const json& root = (*j)["root"];
      r.root.mean = vector_field(root, "mean", line, 3);
      if (root.contains("var")) {
        r.root.variance = vector_field(root, "var", line, 3);
        if ((r.root.variance.array() < 0).any()) throw SchemaError("root variance must be non-negative");
      } else {
        r.root.variance = kDefaultRootVariance;
        r.root_fallback = true;
      }
    } else {
      throw ParseError("record has no root estimate", line);
    }
    if (j->contains("gt")) {
      const Eigen::VectorXd gt = vector_field(*j, "gt", line, 3 * h.num_joints);
      r.gt_absolute = Eigen::Map<const JointMatrix>(gt.data(), h.num_joints, 3);
    }
    set.records.push_back(std::move(r));
  }
  return set;
}

void save_observations(const ObservationSet& set, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_observations(out, set);
}

ObservationSet load_observations(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_observations(in);
}

// ---------------------------------------------------------------- hypotheses

void append_hypotheses(HypothesisFile& file, long frame_id, const HypothesisSet& set) {
  for (std::size_t m = 0; m < set.poses.size(); ++m) {
    const Pose& p = set.poses[m];
    if (p.num_joints() != file.num_joints) throw SchemaError("hypothesis joint count differs from file");
    HypothesisRecord r;
    r.frame_id = frame_id;
    r.hypothesis = static_cast<int>(m);
    r.noise_stream = set.noise_streams.at(m);
    r.root_stream = set.root_streams.at(m);
    r.root = set.roots.at(m);
    r.joints = p.flat();
    file.records.push_back(std::move(r));
  }
}

void write_hypotheses(std::ostream& out, const HypothesisFile& file) {
  json header = header_json(kHypothesisFormat, kHypothesisFormatVersion,
                            {file.num_joints, file.joint_names, file.root_index});
  const SamplerMeta& m = file.meta;
  header["meta"] = {{"command", m.command},
                    {"seed", m.seed},
                    {"gamma", m.gamma},
                    {"cov_scale", m.cov_scale},
                    {"cov_rotate", m.cov_rotate},
                    {"M", m.num_hypotheses},
                    {"renoise_variant", m.renoise_variant},
                    {"guidance_space", m.guidance_space},
                    {"masked_joints", m.masked_joints}};
  out << header.dump() << '\n';
  for (const auto& r : file.records) {
    json j{{"frame_id", r.frame_id},
           {"hypothesis", r.hypothesis},
           {"noise_stream", r.noise_stream},
           {"root_stream", r.root_stream},
           {"root", to_json(r.root)},
           {"joints", to_json(r.joints)}};
    out << j.dump() << '\n';
  }
}

HypothesisFile read_hypotheses(std::istream& in) {
  LineReader reader(in);
  json raw;
  const Header h = read_header(reader, kHypothesisFormat, kHypothesisFormatVersion, &raw);
  HypothesisFile file;
  file.num_joints = h.num_joints;
  file.joint_names = h.joint_names;
  file.root_index = h.root_index;
  if (raw.contains("meta")) {
    const json& m = raw["meta"];
    const long line = 1;
    file.meta.command = field<std::string>(m, "command", line);
    file.meta.seed = field<std::uint64_t>(m, "seed", line);
    file.meta.gamma = field<double>(m, "gamma", line);
    file.meta.cov_scale = field<double>(m, "cov_scale", line);
    file.meta.cov_rotate = field<double>(m, "cov_rotate", line);
    file.meta.num_hypotheses = field<int>(m, "M", line);
    file.meta.renoise_variant = field<std::string>(m, "renoise_variant", line);
    file.meta.guidance_space = field<std::string>(m, "guidance_space", line);
    if (m.contains("masked_joints")) file.meta.masked_joints = field<std::vector<int>>(m, "masked_joints", line);
  }
  while (auto j = reader.next()) {
    const long line = reader.line();
    HypothesisRecord r;
    r.frame_id = field<long>(*j, "frame_id", line);
    r.hypothesis = field<int>(*j, "hypothesis", line);
    r.noise_stream = field<std::uint64_t>(*j, "noise_stream", line);
    r.root_stream = field<std::uint64_t>(*j, "root_stream", line);
    r.root = vector_field(*j, "root", line, 3);
    r.joints = vector_field(*j, "joints", line, 3 * h.num_joints);
    check_root_at_origin(r.joints, h.root_index, line);
    file.records.push_back(std::move(r));
  }
  return file;
}

void save_hypotheses(const HypothesisFile& file, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_hypotheses(out, file);
}

HypothesisFile load_hypotheses(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_hypotheses(in);
}

// ---------------------------------------------------------------- heatmaps

void write_heatmap(std::ostream& out, const Heatmap& hm) {
  if (hm.width() > 0xffff || hm.height() > 0xffff) throw ArgumentError("heatmap too large for the file format");
  put_magic(out, "HMP1");
  put<std::uint16_t>(out, static_cast<std::uint16_t>(hm.width()));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(hm.height()));
  put<float>(out, static_cast<float>(hm.origin_x));
  put<float>(out, static_cast<float>(hm.origin_y));
  put<float>(out, static_cast<float>(hm.stride));
  for (int v = 0; v < hm.height(); ++v)
    for (int u = 0; u < hm.width(); ++u) put<float>(out, static_cast<float>(hm.values(v, u)));
}

Heatmap read_heatmap(std::istream& in) {
  expect_magic(in, "HMP1");
  const int width = get<std::uint16_t>(in);
  const int height = get<std::uint16_t>(in);
  Heatmap hm;
  hm.origin_x = get<float>(in);
  hm.origin_y = get<float>(in);
  hm.stride = get<float>(in);
  hm.values.resize(height, width);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const float value = get<float>(in);
      if (!(value >= 0.0f) || !std::isfinite(value)) throw FormatError("heatmap contains a negative or non-finite value");
      hm.values(v, u) = value;
    }
  }
  return hm;
}

void save_heatmap(const Heatmap& hm, const std::filesystem::path& path) {
  auto out = open_out(path, true);
  write_heatmap(out, hm);
}

Heatmap load_heatmap(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  return read_heatmap(in);
}

// ---------------------------------------------------------------- checkpoints

namespace {

void put_tensors(std::ostream& out, const ParamSet& p) {
  for (const auto& t : p.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) put<float>(out, static_cast<float>(t.data()[i]));
  }
}

ParamSet get_tensors(std::istream& in, const ParamSet& layout) {
  ParamSet p = layout.zeros_like();
  for (auto& t : p.tensors) {
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    if (rows != t.rows() || cols != t.cols()) throw FormatError("checkpoint tensor shape does not match header");
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = get<float>(in);
  }
  return p;
}

void put_f32(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put<float>(out, static_cast<float>(v(i)));
}

Eigen::VectorXd get_f32(std::istream& in, Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = get<float>(in);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const DenoiserModel& model) {
  put_magic(out, "PPD1");
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.config.num_joints));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.config.hidden));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.config.steps));
  put<double>(out, model.config.offset);
  const std::string schedule_name = "cosine";
  put<std::uint32_t>(out, static_cast<std::uint32_t>(schedule_name.size()));
  out.write(schedule_name.data(), static_cast<std::streamsize>(schedule_name.size()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(model.adam_step));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.running_mean.size()));
  put_tensors(out, model.params);
  put_tensors(out, model.ema);
  put_tensors(out, model.adam_m);
  put_tensors(out, model.adam_v);
  for (std::size_t l = 0; l < model.running_mean.size(); ++l) {
    put_f32(out, model.running_mean[l]);
    put_f32(out, model.running_var[l]);
  }
  for (Eigen::Index i = 0; i < model.norm_mean.size(); ++i) put<double>(out, model.norm_mean(i));
  for (Eigen::Index i = 0; i < model.norm_std.size(); ++i) put<double>(out, model.norm_std(i));
  if (!out) throw FormatError("failed writing checkpoint");
}

DenoiserModel read_checkpoint(std::istream& in) {
  expect_magic(in, "PPD1");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  DenoiserConfig config;
  config.num_joints = static_cast<int>(get<std::uint32_t>(in));
  config.hidden = static_cast<int>(get<std::uint32_t>(in));
  config.steps = static_cast<int>(get<std::uint32_t>(in));
  config.offset = get<double>(in);
  const auto name_length = get<std::uint32_t>(in);
  if (name_length > 64) throw FormatError("checkpoint schedule name is implausibly long");
  std::string schedule_name(name_length, '\0');
  if (!in.read(schedule_name.data(), name_length)) throw FormatError("unexpected end of file");
  if (schedule_name != "cosine") throw FormatError("unknown schedule '" + schedule_name + "'");
  const auto adam_step = get<std::uint64_t>(in);
  const auto tensor_count = get<std::uint32_t>(in);
  const auto bn_layers = get<std::uint32_t>(in);
  if (tensor_count != param::kCount || bn_layers != param::kNumTrunkLayers) {
    throw FormatError("checkpoint tensor layout does not match this build");
  }
  if (config.num_joints < 1 || config.hidden < 2 || config.hidden > (1 << 16) || config.steps < 1 ||
      !(config.offset > 0.0 && config.offset < 1.0)) {
    throw FormatError("checkpoint header is invalid");
  }

  Rng layout_rng(0, 0);
  DenoiserModel model = DenoiserModel::initialize(config, layout_rng);
  model.adam_step = static_cast<long>(adam_step);
  model.params = get_tensors(in, model.params);
  model.ema = get_tensors(in, model.params);
  model.adam_m = get_tensors(in, model.params);
  model.adam_v = get_tensors(in, model.params);
  for (std::size_t l = 0; l < bn_layers; ++l) {
    model.running_mean[l] = get_f32(in, config.hidden);
    model.running_var[l] = get_f32(in, config.hidden);
  }
  const Eigen::Index dim = config.input_dim();
  for (Eigen::Index i = 0; i < dim; ++i) model.norm_mean(i) = get<double>(in);
  for (Eigen::Index i = 0; i < dim; ++i) model.norm_std(i) = get<double>(in);
  if (!(model.norm_std.array() > 0).all()) throw FormatError("checkpoint normalization std must be positive");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");
  return model;
}

void save_checkpoint(const DenoiserModel& model, const std::filesystem::path& path) {
  auto out = open_out(path, true);
  write_checkpoint(out, model);
}

DenoiserModel load_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  return read_checkpoint(in);
}

}  // namespace poseprior
