#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include <boost/property_tree/ptree.hpp>

#include "poseprior/synthetic.hpp"

namespace poseprior {

struct TrainSettings {
  int steps = 100000;
  int batch = 256;
  double lr = 1e-4;
  double ema = 0.995;
  int hidden = 1024;
  int T = 1000;
  double offset = 0.008;
  std::uint64_t seed = 0;
};

struct SamplerSettings {
  double gamma = 2e-4;
  double cov_scale = 1.0;
  double cov_rotate = 0.0;
  int M = 50;
  std::string renoise = "vp";
  std::uint64_t seed = 0;
  int threads = 1;
};

struct PathSettings {
  std::string poses;
  std::string observations;
  std::string model;
  std::string output;
};

struct AppConfig {
  SyntheticSkeletonConfig skeleton;  // skeleton.camera doubles as the [camera] section
  TrainSettings train;
  SamplerSettings sampler;
  PathSettings paths;
};

/// Flat section.key view of the configuration. Layers merge in the order
/// defaults, file, environment, command line; later layers win.
using ConfigTree = boost::property_tree::ptree;

ConfigTree default_config_tree();

/// Merges an INI file. Unknown sections or keys raise ConfigError.
void merge_config_file(ConfigTree& tree, const std::filesystem::path& path);

/// Merges POSEPRIOR_<SECTION>_<KEY> variables for every known key.
void merge_environment(ConfigTree& tree, const std::function<const char*(const char*)>& getenv);

/// Sets one known key; unknown keys raise ConfigError.
void set_config_value(ConfigTree& tree, const std::string& dotted_key, const std::string& value);

AppConfig decode_config(const ConfigTree& tree);

/// One "section.key = value" line per key, in a stable order.
std::string describe_config(const ConfigTree& tree);

/// Worker count after applying the POSEPRIOR_THREADS cap.
int capped_threads(int requested, const std::function<const char*(const char*)>& getenv);

}  // namespace poseprior
