#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "poseprior/denoiser.hpp"
#include "poseprior/geometry.hpp"
#include "poseprior/observation.hpp"
#include "poseprior/sampler.hpp"

namespace poseprior {

inline constexpr int kPoseFormatVersion = 1;
inline constexpr int kObservationFormatVersion = 1;
inline constexpr int kHypothesisFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct PoseRecord {
  long id = 0;
  Eigen::VectorXd joints;  // 3J, root-relative mm
  std::optional<std::string> subject;
  std::optional<long> frame;

  bool operator==(const PoseRecord&) const = default;
};

struct PoseDataset {
  int num_joints = 0;
  std::vector<std::string> joint_names;
  int root_index = 0;
  std::vector<PoseRecord> records;

  /// N x 3J, one pose per row.
  Eigen::MatrixXd matrix() const;
  Pose pose(std::size_t i) const;
  bool operator==(const PoseDataset&) const = default;
};

/// Pose files are JSON lines: a header declaring version, J, joint names and
/// root index, then one record per pose with a flat 3J millimeter array.
void write_poses(std::ostream& out, const PoseDataset& dataset);
PoseDataset read_poses(std::istream& in);
void save_poses(const PoseDataset& dataset, const std::filesystem::path& path);
PoseDataset load_poses(const std::filesystem::path& path);

struct ObservationRecord {
  long frame_id = 0;
  Camerad camera;
  std::vector<KeypointObservation> sources;
  RootEstimate root;
  bool root_fallback = false;  // root variance filled from kDefaultRootVariance
  std::optional<JointMatrix> gt_absolute;

  bool operator==(const ObservationRecord&) const = default;
};

struct ObservationSet {
  int num_joints = 0;
  std::vector<std::string> joint_names;
  int root_index = 0;
  std::vector<ObservationRecord> records;

  bool operator==(const ObservationSet&) const = default;
};

void write_observations(std::ostream& out, const ObservationSet& set);
ObservationSet read_observations(std::istream& in);
void save_observations(const ObservationSet& set, const std::filesystem::path& path);
ObservationSet load_observations(const std::filesystem::path& path);

/// One JSON line {"frame_id", "keypoints"} in the observation record layout,
/// for assembling observation files from fitted heatmaps.
void write_keypoint_fragment(std::ostream& out, long frame_id, const KeypointObservation& obs);

/// Sampler settings recorded in hypothesis files.
struct SamplerMeta {
  std::string command;
  std::uint64_t seed = 0;
  double gamma = 0.0;
  double cov_scale = 1.0;
  double cov_rotate = 0.0;
  int num_hypotheses = 0;
  std::string renoise_variant = "vp";
  std::string guidance_space = "x0";
  std::vector<int> masked_joints;

  bool operator==(const SamplerMeta&) const = default;
};

struct HypothesisRecord {
  long frame_id = 0;
  int hypothesis = 0;
  std::uint64_t noise_stream = 0;
  std::uint64_t root_stream = 0;
  Eigen::Vector3d root = Eigen::Vector3d::Zero();
  Eigen::VectorXd joints;  // 3J, root-relative mm

  bool operator==(const HypothesisRecord&) const = default;
};

struct HypothesisFile {
  int num_joints = 0;
  std::vector<std::string> joint_names;
  int root_index = 0;
  SamplerMeta meta;
  std::vector<HypothesisRecord> records;

  bool operator==(const HypothesisFile&) const = default;
};

void append_hypotheses(HypothesisFile& file, long frame_id, const HypothesisSet& set);
void write_hypotheses(std::ostream& out, const HypothesisFile& file);
HypothesisFile read_hypotheses(std::istream& in);
void save_hypotheses(const HypothesisFile& file, const std::filesystem::path& path);
HypothesisFile load_hypotheses(const std::filesystem::path& path);

/// Heatmap binary: "HMP1", u16 width, u16 height, f32 origin_x, f32 origin_y,
/// f32 stride, then width*height f32 values row-major. All little-endian.
void write_heatmap(std::ostream& out, const Heatmap& hm);
Heatmap read_heatmap(std::istream& in);
void save_heatmap(const Heatmap& hm, const std::filesystem::path& path);
Heatmap load_heatmap(const std::filesystem::path& path);

/// Checkpoint binary: "PPD1", u32 version, header, then params, EMA params and
/// both Adam moments as f32 tensors in param:: order, batch-norm running
/// statistics as f32, normalization statistics as f64. All little-endian.
void write_checkpoint(std::ostream& out, const DenoiserModel& model);
DenoiserModel read_checkpoint(std::istream& in);
void save_checkpoint(const DenoiserModel& model, const std::filesystem::path& path);
DenoiserModel load_checkpoint(const std::filesystem::path& path);

}  // namespace poseprior
