#pragma once

// Keypoint schemas, Gaussian target heatmaps, the heatmap MSE loss and
// argmax decoding.
//
// Coordinates: x is the column, y the row, both in pixels of the frame the
// keypoints live in; pixel (row r, col c) has its center at (x = c, y = r).

#include "lap/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace lap {

struct KeypointSchema {
  std::string name;
  std::vector<std::string> joints;
  std::vector<std::pair<int, int>> flip_pairs;  // left/right swaps
  std::vector<std::pair<int, int>> limbs;       // segments drawn by overlays
  std::vector<double> oks_k;                    // per-joint OKS falloff constant

  int size() const { return static_cast<int>(joints.size()); }
  int flip_partner(int joint) const;
  int index_of(const std::string& joint) const;  // -1 when absent
};

const KeypointSchema& coco17_schema();
const KeypointSchema& mpii16_schema();
/// `count` synthetic joints j0..j{count-1}, chained limbs, no flip pairs, k = 0.1.
KeypointSchema toy_schema(int count);
/// coco17 for 17 joints, mpii16 for 16, toy otherwise.
KeypointSchema schema_for(int num_keypoints);

struct Keypoint {
  double x = 0;
  double y = 0;
  bool visible = true;
  double confidence = 1;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct KeypointSet {
  std::string id;
  std::vector<Keypoint> joints;

  int size() const { return static_cast<int>(joints.size()); }
  int visible_count() const;
  double mean_confidence() const;
};

/// Ground-truth or predicted heatmaps: N x J x h x w plus the Gaussian width.
struct HeatmapStack {
  Tensord maps;
  double sigma = 2.0;
};

/// H_j(p) = exp(-|p - x_j|^2 / (2 sigma^2)) per pixel center, peak 1. Invisible
/// joints give all-zero maps; joints outside the frame leave only tails.
HeatmapStack encode(const KeypointSet& keypoints, std::int64_t h, std::int64_t w, double sigma = 2.0);
HeatmapStack encode(const std::vector<KeypointSet>& batch, std::int64_t h, std::int64_t w, double sigma = 2.0);

/// Row-major (sample, joint) visibility flags.
std::vector<std::uint8_t> visibility_mask(const std::vector<KeypointSet>& batch);

struct MseResult {
  double loss = 0;
  Tensord grad;           // d loss / d pred
  std::int64_t count = 0; // elements averaged over
};

/// Mean over (sample, visible joint, pixel) of (pred - gt)^2; masked joints are
/// excluded from the sum and the count. An empty mask means all visible.
MseResult mse_loss(const Tensord& pred, const Tensord& gt, const std::vector<std::uint8_t>& visible = {});

/// Argmax per map, moved a quarter pixel toward the larger neighbour on each
/// axis. Confidence is the peak value. Ties resolve to the lowest row-major index.
std::vector<KeypointSet> decode(const Tensord& maps);

/// Mirror about the vertical axis (x -> width - 1 - x) and swap left/right joints.
KeypointSet flip_keypoints(const KeypointSet& keypoints, const KeypointSchema& schema, double width);

/// Multiply coordinates by `factor` (e.g. 1/4 from image to heatmap frame).
KeypointSet scale_keypoints(const KeypointSet& keypoints, double factor);

/// Image pixel <-> heatmap cell for an output stride. Cell i covers image
/// pixels [s*i, s*i + s - 1], so its centre sits at s*i + (s - 1)/2.
KeypointSet image_to_heatmap(const KeypointSet& keypoints, int stride);
KeypointSet heatmap_to_image(const KeypointSet& keypoints, int stride);

/// Text records: `sample <id>` followed by one `<joint> <x> <y> <visible>` line
/// per joint, optionally with a trailing confidence column.
void write_keypoints(std::ostream& os, const KeypointSchema& schema, const std::vector<KeypointSet>& samples,
                     bool with_confidence = false);
std::vector<KeypointSet> read_keypoints(std::istream& is, const KeypointSchema& schema);

}  // namespace lap
