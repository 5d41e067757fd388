#include "poseprior/config.hpp"

#include <charconv>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

namespace poseprior {

namespace pt = boost::property_tree;

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

template <typename Range>
std::string join(const Range& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_convertible_v<decltype(v), std::string>) {
      out += v;
    } else if constexpr (std::is_integral_v<std::decay_t<decltype(v)>>) {
      out += std::to_string(v);
    } else {
      out += fmt(v);
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("config " + key + ": cannot parse '" + text + "'");
  return value;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split(text)) out.push_back(parse_number<T>(key, item));
  return out;
}

Eigen::Vector3d parse_vec3(const std::string& key, const std::string& text) {
  const auto v = parse_list<double>(key, text);
  if (v.size() != 3) throw ConfigError("config " + key + ": expected three values");
  return {v[0], v[1], v[2]};
}

std::string str(const ConfigTree& tree, const std::string& key) { return tree.get<std::string>(pt::path(key, '.')); }

}  // namespace

ConfigTree default_config_tree() {
  const AppConfig d{default_skeleton(), {}, {}, {}};
  const auto& s = d.skeleton;
  ConfigTree t;
  auto put = [&t](const std::string& key, const std::string& value) { t.put(pt::path(key, '.'), value); };

  put("camera.fx", fmt(s.camera.fx));
  put("camera.fy", fmt(s.camera.fy));
  put("camera.cx", fmt(s.camera.cx));
  put("camera.cy", fmt(s.camera.cy));

  put("skeleton.joint_names", join(s.joint_names));
  put("skeleton.parents", join(s.parents));
  const Eigen::VectorXd lengths = s.offsets.rowwise().norm();
  put("skeleton.bone_lengths", join(std::vector<double>(lengths.data(), lengths.data() + lengths.size())));
  put("skeleton.angle_scale", "1");
  put("skeleton.num_train", std::to_string(s.num_train));
  put("skeleton.num_test", std::to_string(s.num_test));
  put("skeleton.seed", std::to_string(s.seed));
  put("skeleton.keypoint_sigma", fmt(s.keypoint_sigma));
  put("skeleton.root_lo", join(std::vector<double>(s.root_lo.data(), s.root_lo.data() + 3)));
  put("skeleton.root_hi", join(std::vector<double>(s.root_hi.data(), s.root_hi.data() + 3)));
  put("skeleton.root_noise_std", join(std::vector<double>(s.root_noise_std.data(), s.root_noise_std.data() + 3)));

  put("train.steps", std::to_string(d.train.steps));
  put("train.batch", std::to_string(d.train.batch));
  put("train.lr", fmt(d.train.lr));
  put("train.ema", fmt(d.train.ema));
  put("train.hidden", std::to_string(d.train.hidden));
  put("train.T", std::to_string(d.train.T));
  put("train.offset", fmt(d.train.offset));
  put("train.seed", std::to_string(d.train.seed));

  put("sampler.gamma", fmt(d.sampler.gamma));
  put("sampler.cov_scale", fmt(d.sampler.cov_scale));
  put("sampler.cov_rotate", fmt(d.sampler.cov_rotate));
  put("sampler.M", std::to_string(d.sampler.M));
  put("sampler.renoise", d.sampler.renoise);
  put("sampler.seed", std::to_string(d.sampler.seed));
  put("sampler.threads", std::to_string(d.sampler.threads));

  put("paths.poses", "");
  put("paths.observations", "");
  put("paths.model", "");
  put("paths.output", "");
  return t;
}

void set_config_value(ConfigTree& tree, const std::string& dotted_key, const std::string& value) {
  const pt::path key(dotted_key, '.');
  if (!tree.get_child_optional(key)) throw ConfigError("unknown config key '" + dotted_key + "'");
  tree.put(key, value);
}

void merge_config_file(ConfigTree& tree, const std::filesystem::path& path) {
  ConfigTree file;
  try {
    pt::read_ini(path.string(), file);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  for (const auto& [section, keys] : file) {
    if (keys.empty()) throw ConfigError("config file: key '" + section + "' is outside any section");
    for (const auto& [key, value] : keys) set_config_value(tree, section + "." + key, value.data());
  }
}

void merge_environment(ConfigTree& tree, const std::function<const char*(const char*)>& getenv) {
  for (auto& [section, keys] : tree) {
    for (auto& [key, value] : keys) {
      std::string name = "POSEPRIOR_" + section + "_" + key;
      for (auto& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (const char* v = getenv(name.c_str())) value.data() = v;
    }
  }
}

AppConfig decode_config(const ConfigTree& tree) {
  auto get_d = [&](const std::string& k) { return parse_number<double>(k, str(tree, k)); };
  auto get_i = [&](const std::string& k) { return parse_number<int>(k, str(tree, k)); };
  auto get_u = [&](const std::string& k) { return parse_number<std::uint64_t>(k, str(tree, k)); };

  AppConfig cfg{default_skeleton(), {}, {}, {}};
  auto& s = cfg.skeleton;
  s.camera = {get_d("camera.fx"), get_d("camera.fy"), get_d("camera.cx"), get_d("camera.cy")};
  if (!(s.camera.fx > 0 && s.camera.fy > 0)) throw ConfigError("camera focal lengths must be positive");

  const auto names = split(str(tree, "skeleton.joint_names"));
  const auto parents = parse_list<int>("skeleton.parents", str(tree, "skeleton.parents"));
  const auto lengths = parse_list<double>("skeleton.bone_lengths", str(tree, "skeleton.bone_lengths"));
  const int n = s.num_joints();
  if (static_cast<int>(parents.size()) != n || static_cast<int>(lengths.size()) != n ||
      static_cast<int>(names.size()) != n) {
    throw ConfigError("skeleton lists must have " + std::to_string(n) + " entries");
  }
  s.joint_names = names;
  s.parents = parents;
  for (int j = 0; j < n; ++j) {
    const double rest = s.offsets.row(j).norm();
    if (rest > 0.0) {
      s.offsets.row(j) *= lengths[j] / rest;
    } else if (lengths[j] != 0.0) {
      throw ConfigError("skeleton root bone length must be 0");
    }
  }
  const double angle_scale = get_d("skeleton.angle_scale");
  if (!(angle_scale >= 0.0)) throw ConfigError("skeleton angle_scale must be non-negative");
  for (auto& l : s.limits) {
    l.lo *= angle_scale;
    l.hi *= angle_scale;
  }
  s.num_train = get_i("skeleton.num_train");
  s.num_test = get_i("skeleton.num_test");
  s.seed = get_u("skeleton.seed");
  s.keypoint_sigma = get_d("skeleton.keypoint_sigma");
  s.root_lo = parse_vec3("skeleton.root_lo", str(tree, "skeleton.root_lo"));
  s.root_hi = parse_vec3("skeleton.root_hi", str(tree, "skeleton.root_hi"));
  s.root_noise_std = parse_vec3("skeleton.root_noise_std", str(tree, "skeleton.root_noise_std"));
  s.check();

  cfg.train = {get_i("train.steps"), get_i("train.batch"),  get_d("train.lr"),     get_d("train.ema"),
               get_i("train.hidden"), get_i("train.T"),     get_d("train.offset"), get_u("train.seed")};
  cfg.sampler = {get_d("sampler.gamma"), get_d("sampler.cov_scale"), get_d("sampler.cov_rotate"),
                 get_i("sampler.M"),     str(tree, "sampler.renoise"), get_u("sampler.seed"),
                 get_i("sampler.threads")};
  if (cfg.sampler.renoise != "vp" && cfg.sampler.renoise != "linear") {
    throw ConfigError("sampler.renoise must be vp or linear");
  }
  if (cfg.sampler.threads < 1) throw ConfigError("sampler.threads must be >= 1");
  cfg.paths = {str(tree, "paths.poses"), str(tree, "paths.observations"), str(tree, "paths.model"),
               str(tree, "paths.output")};
  return cfg;
}

std::string describe_config(const ConfigTree& tree) {
  std::string out;
  for (const auto& [section, keys] : tree)
    for (const auto& [key, value] : keys) out += section + "." + key + " = " + value.data() + "\n";
  return out;
}

int capped_threads(int requested, const std::function<const char*(const char*)>& getenv) {
  int threads = std::max(requested, 1);
  if (const char* cap = getenv("POSEPRIOR_THREADS")) {
    const int limit = parse_number<int>("POSEPRIOR_THREADS", cap);
    if (limit < 1) throw ConfigError("POSEPRIOR_THREADS must be >= 1");
    threads = std::min(threads, limit);
  }
  return threads;
}

}  // namespace poseprior
