#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "msta/numerics/tensor.h"

namespace msta {

struct VideoSample {
  std::uint64_t id = 0;
  std::int64_t label = 0;
  Tensor video;  // [T, H, W, 3], f32 values in [0, 1]
};

struct DatasetManifest {
  std::string name = "synthetic";
  std::uint64_t seed = 0;
  std::int64_t frames = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t per_class = 0;
  std::vector<std::string> classes;
  // (forward class, reversed class); the reversed class holds the
  // frame-reversed twin of every forward sample.
  std::vector<std::pair<std::int64_t, std::int64_t>> temporal_pairs;
  std::vector<std::int64_t> base_classes;
  std::vector<std::int64_t> novel_classes;
  std::vector<std::uint64_t> train_ids;
  std::vector<std::uint64_t> val_ids;
  std::vector<std::uint64_t> test_ids;
  double oracle_pair_accuracy = 0.0;
  std::string data_file = "data.mstd";

  std::int64_t class_count() const { return static_cast<std::int64_t>(classes.size()); }
  bool is_pair_class(std::int64_t c) const;
  std::int64_t class_index(const std::string& name) const;
};

struct DataGenConfig {
  std::string name = "synthetic";
  std::uint64_t seed = 0;
  std::int64_t classes = 8;
  std::int64_t per_class = 24;
  std::int64_t frames = 8;
  std::int64_t size = 16;
  double temporal_pair_fraction = 1.0;
  double noise = 0.03;
  double test_fraction = 0.25;
  double val_fraction = 0.0;
  double base_fraction = 0.5;
  // Added to class indices in names, so two datasets can have disjoint classes.
  std::int64_t class_offset = 0;
  void validate() const;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetManifest manifest, std::vector<VideoSample> samples);

  const DatasetManifest& manifest() const { return manifest_; }
  DatasetManifest& mutable_manifest() { return manifest_; }
  const std::vector<VideoSample>& samples() const { return samples_; }
  const VideoSample& sample(std::uint64_t id) const;
  std::vector<const VideoSample*> select(const std::vector<std::uint64_t>& ids) const;

 private:
  DatasetManifest manifest_;
  std::vector<VideoSample> samples_;
  std::vector<std::size_t> index_;  // id -> position
};

// Procedural classes: a textured blob on a tinted background following a
// class trajectory, plus per-sample jitter and additive noise. Temporal pairs
// share appearance and trajectory and differ only in frame order. Raises if
// the frame-averaged oracle can separate a pair.
Dataset generate_dataset(const DataGenConfig& config);

// Nearest-centroid accuracy on pair discrimination using frame-averaged pixels
// (train centroids, test queries, ties count half).
double frame_average_oracle(const Dataset& dataset);

// Binary sample file plus JSON manifest under `dir`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);
void write_samples(const std::filesystem::path& path, const std::vector<VideoSample>& samples,
                   std::int64_t class_count);
std::vector<VideoSample> read_samples(const std::filesystem::path& path);
std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

// K training ids per class, drawn without replacement.
std::vector<std::uint64_t> few_shot_subset(const DatasetManifest& manifest, std::int64_t k, std::uint64_t seed);

// Seeded disjoint partition; both classes of a temporal pair land on the same side.
std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> base_novel_split(const DatasetManifest& manifest,
                                                                                 double base_fraction,
                                                                                 std::uint64_t seed);

struct AugmentConfig {
  double jitter_p = 0.8;
  double grayscale_p = 0.2;
  double crop_p = 1.0;
  double flip_p = 0.5;
  double min_crop_scale = 0.7;
  double jitter_strength = 0.2;
};

// One seeded transform applied identically to every frame; output clamped to [0, 1].
Tensor augment(const Tensor& video, std::uint64_t seed, const AugmentConfig& config = {});

Tensor temporal_crop(const Tensor& video, std::int64_t start, std::int64_t frames);
// Evenly spaced crop starts, symmetric about the clip centre.
std::vector<std::int64_t> view_starts(std::int64_t total_frames, std::int64_t frames, std::int64_t views);

}  // namespace msta
