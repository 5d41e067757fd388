#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "poseprior/config.hpp"

using namespace poseprior;

namespace {

struct FakeEnv {
  std::map<std::string, std::string> vars;
  const char* operator()(const char* name) const {
    const auto it = vars.find(name);
    return it == vars.end() ? nullptr : it->second.c_str();
  }
};

std::filesystem::path write_ini(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST(Config, DefaultValues) {
  const AppConfig cfg = decode_config(default_config_tree());
  EXPECT_EQ(cfg.train.lr, 1e-4);
  EXPECT_EQ(cfg.train.ema, 0.995);
  EXPECT_EQ(cfg.train.hidden, 1024);
  EXPECT_EQ(cfg.train.T, 1000);
  EXPECT_EQ(cfg.train.offset, 0.008);
  EXPECT_EQ(cfg.train.steps, 100000);
  EXPECT_EQ(cfg.sampler.gamma, 2e-4);
  EXPECT_EQ(cfg.sampler.M, 50);
  EXPECT_EQ(cfg.sampler.renoise, "vp");
  EXPECT_EQ(cfg.skeleton.num_joints(), 17);
  EXPECT_EQ(cfg.skeleton.keypoint_sigma, 2.0);
}

TEST(Config, DefaultSkeletonMatchesBuiltIn) {
  const AppConfig cfg = decode_config(default_config_tree());
  const SyntheticSkeletonConfig ref = default_skeleton();
  EXPECT_EQ(cfg.skeleton.parents, ref.parents);
  EXPECT_EQ(cfg.skeleton.joint_names, ref.joint_names);
  EXPECT_TRUE(cfg.skeleton.offsets.isApprox(ref.offsets));
}

TEST(Config, PrecedenceFlagsOverEnvironmentOverFileOverDefaults) {
  ConfigTree tree = default_config_tree();
  const auto path = write_ini("poseprior_test_precedence.ini", "[sampler]\ngamma=1e-3\nM=7\n[train]\nlr=5e-4\n");
  merge_config_file(tree, path);
  FakeEnv env{{{"POSEPRIOR_SAMPLER_M", "9"}, {"POSEPRIOR_TRAIN_HIDDEN", "32"}}};
  merge_environment(tree, env);
  set_config_value(tree, "sampler.M", "11");
  const AppConfig cfg = decode_config(tree);
  EXPECT_EQ(cfg.sampler.gamma, 1e-3);  // file
  EXPECT_EQ(cfg.train.lr, 5e-4);       // file
  EXPECT_EQ(cfg.train.hidden, 32);     // environment over default
  EXPECT_EQ(cfg.sampler.M, 11);        // flag over environment over file
  EXPECT_EQ(cfg.train.T, 1000);        // default
  std::filesystem::remove(path);
}

TEST(Config, ShippedFilesLoad) {
  for (const char* name : {"default.ini", "toy.ini"}) {
    ConfigTree tree = default_config_tree();
    merge_config_file(tree, std::filesystem::path(POSEPRIOR_SOURCE_DIR) / "configs" / name);
    EXPECT_NO_THROW(decode_config(tree)) << name;
  }
  ConfigTree tree = default_config_tree();
  merge_config_file(tree, std::filesystem::path(POSEPRIOR_SOURCE_DIR) / "configs" / "toy.ini");
  const AppConfig toy = decode_config(tree);
  EXPECT_EQ(toy.train.hidden, 64);
  EXPECT_EQ(toy.train.T, 100);
  EXPECT_EQ(toy.train.steps, 2000);
}

TEST(Config, UnknownKeysAndBadValues) {
  ConfigTree tree = default_config_tree();
  EXPECT_THROW(set_config_value(tree, "sampler.gama", "1"), ConfigError);
  EXPECT_THROW(set_config_value(tree, "nosuch.key", "1"), ConfigError);
  const auto path = write_ini("poseprior_test_unknown.ini", "[train]\nlearning_rate=1\n");
  EXPECT_THROW(merge_config_file(tree, path), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(merge_config_file(tree, "/nonexistent/poseprior.ini"), ConfigError);

  ConfigTree bad = default_config_tree();
  set_config_value(bad, "sampler.renoise", "ddim");
  EXPECT_THROW(decode_config(bad), ConfigError);
  ConfigTree nan = default_config_tree();
  set_config_value(nan, "train.lr", "fast");
  EXPECT_THROW(decode_config(nan), ConfigError);
  ConfigTree short_list = default_config_tree();
  set_config_value(short_list, "skeleton.parents", "-1,0");
  EXPECT_THROW(decode_config(short_list), ConfigError);
  ConfigTree camera = default_config_tree();
  set_config_value(camera, "camera.fx", "0");
  EXPECT_THROW(decode_config(camera), ConfigError);
}

TEST(Config, BoneLengthsAndAngleScale) {
  ConfigTree tree = default_config_tree();
  set_config_value(tree, "skeleton.bone_lengths", "0,100,400,400,100,400,400,200,200,100,100,150,250,250,150,250,250");
  set_config_value(tree, "skeleton.angle_scale", "0");
  const AppConfig cfg = decode_config(tree);
  EXPECT_NEAR(cfg.skeleton.offsets.row(2).norm(), 400.0, 1e-9);
  EXPECT_NEAR(cfg.skeleton.offsets.row(11).norm(), 150.0, 1e-9);
  for (const auto& l : cfg.skeleton.limits) EXPECT_EQ(l.hi, Eigen::Vector3d::Zero());
}

TEST(Config, DescribeListsEveryKey) {
  const std::string text = describe_config(default_config_tree());
  for (const char* key : {"camera.fx = 1000", "train.lr = 1e-04", "sampler.gamma = 2e-04", "paths.model = "}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
}

TEST(Config, ThreadCap) {
  EXPECT_EQ(capped_threads(8, FakeEnv{}), 8);
  EXPECT_EQ(capped_threads(8, FakeEnv{{{"POSEPRIOR_THREADS", "2"}}}), 2);
  EXPECT_EQ(capped_threads(1, FakeEnv{{{"POSEPRIOR_THREADS", "4"}}}), 1);
  EXPECT_EQ(capped_threads(0, FakeEnv{}), 1);
  EXPECT_THROW(capped_threads(4, FakeEnv{{{"POSEPRIOR_THREADS", "0"}}}), ConfigError);
}
