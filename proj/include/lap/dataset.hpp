#pragma once

// Synthetic keypoint data and augmentation.

#include "lap/config.hpp"
#include "lap/heatmap.hpp"
#include "lap/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace lap {

struct Sample {
  Tensord image;  // 1 x C x H x W in [0, 1]
  KeypointSet keypoints;
};

/// Bright Gaussian blobs on a noisy background, one per joint. Joint j is
/// drawn with its own peak intensity so joints can be told apart.
struct ToyDatasetSpec {
  std::int64_t num_samples = 512;
  std::int64_t image_size = 64;
  int num_keypoints = 4;
  double blob_radius_min = 2.0;  // Gaussian sigma of a blob, pixels
  double blob_radius_max = 3.0;
  double intensity_max = 1.0;  // joint 0
  double intensity_min = 0.4;  // last joint
  double intensity_jitter = 0.04;
  double noise = 0.05;
  double min_separation = 10.0;
  std::uint64_t seed = 7;

  void validate() const;
  double margin() const { return 3.0 * blob_radius_max; }
  std::string to_text() const;
  static ToyDatasetSpec from_key_values(const KeyValues& kv);
  static ToyDatasetSpec load(const std::string& path) { return from_key_values(KeyValues::load(path)); }
  friend bool operator==(const ToyDatasetSpec&, const ToyDatasetSpec&) = default;
};

/// Pure function of (spec, index).
Sample generate_toy_sample(const ToyDatasetSpec& spec, std::int64_t index);

struct SplitIndices {
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> validation;
};
SplitIndices split_dataset(std::int64_t num_samples);

/// Writes sample_<i>.pgm files plus keypoints.txt into `dir`.
void export_toy_dataset(const ToyDatasetSpec& spec, const std::string& dir);

//------------------------------------------------------------------------------

struct AugmentConfig {
  bool enabled = false;
  double scale_min = 0.75;
  double scale_max = 1.25;
  double rotation_deg = 30.0;  // uniform in [-r, r]
  double flip_probability = 0.5;
  double brightness = 0.2;  // factor uniform in [1 - b, 1 + b]
  double contrast = 0.2;

  void validate() const;
};

/// Concrete draw of the random augmentation parameters.
struct Transform {
  double scale = 1.0;
  double rotation_deg = 0.0;
  bool flip = false;
  double brightness = 1.0;
  double contrast = 1.0;
};

/// Maps an input coordinate through scale, rotation (both about the image
/// centre, y pointing down) and the optional horizontal flip.
void transform_point(const Transform& t, double width, double height, double& x, double& y);

/// Warps the image with bilinear sampling into a frame of the same size, maps
/// keypoints through the same transform (flip swaps left/right partners) and
/// marks joints that leave the frame invisible, then applies color jitter.
Sample apply_transform(const Sample& sample, const Transform& t, const KeypointSchema& schema);

Transform sample_transform(const AugmentConfig& config, std::mt19937_64& rng);

Sample augment(const Sample& sample, const AugmentConfig& config, const KeypointSchema& schema, std::mt19937_64& rng);

}  // namespace lap
