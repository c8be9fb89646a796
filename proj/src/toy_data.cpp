#include "lap/dataset.hpp"

#include "lap/image_io.hpp"
#include "lap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace lap {

void ToyDatasetSpec::validate() const {
  if (num_samples < 1) throw ConfigError("toy dataset: num_samples must be >= 1");
  if (num_keypoints < 1) throw ConfigError("toy dataset: num_keypoints must be >= 1");
  if (!(blob_radius_min > 0 && blob_radius_max >= blob_radius_min)) {
    throw ConfigError("toy dataset: need 0 < blob_radius_min <= blob_radius_max");
  }
  if (!(intensity_min > 0 && intensity_max >= intensity_min)) {
    throw ConfigError("toy dataset: need 0 < intensity_min <= intensity_max");
  }
  if (intensity_jitter < 0 || noise < 0 || min_separation < 0) {
    throw ConfigError("toy dataset: jitter, noise and separation must be non-negative");
  }
  if (static_cast<double>(image_size - 1) <= 2 * margin()) {
    throw ConfigError("toy dataset: image_size " + std::to_string(image_size) + " leaves no room inside the " +
                      "3 * blob_radius_max border margin");
  }
}

std::string ToyDatasetSpec::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "num_samples = " << num_samples << "\n"
     << "image_size = " << image_size << "\n"
     << "num_keypoints = " << num_keypoints << "\n"
     << "blob_radius_min = " << blob_radius_min << "\n"
     << "blob_radius_max = " << blob_radius_max << "\n"
     << "intensity_max = " << intensity_max << "\n"
     << "intensity_min = " << intensity_min << "\n"
     << "intensity_jitter = " << intensity_jitter << "\n"
     << "noise = " << noise << "\n"
     << "min_separation = " << min_separation << "\n"
     << "seed = " << seed << "\n";
  return os.str();
}

ToyDatasetSpec ToyDatasetSpec::from_key_values(const KeyValues& kv) {
  kv.require_known({"num_samples", "image_size", "num_keypoints", "blob_radius_min", "blob_radius_max", "intensity_max",
                    "intensity_min", "intensity_jitter", "noise", "min_separation", "seed"},
                   "toy dataset spec");
  ToyDatasetSpec s;
  s.num_samples = kv.get_int("num_samples", s.num_samples);
  s.image_size = kv.get_int("image_size", s.image_size);
  s.num_keypoints = static_cast<int>(kv.get_int("num_keypoints", s.num_keypoints));
  s.blob_radius_min = kv.get_double("blob_radius_min", s.blob_radius_min);
  s.blob_radius_max = kv.get_double("blob_radius_max", s.blob_radius_max);
  s.intensity_max = kv.get_double("intensity_max", s.intensity_max);
  s.intensity_min = kv.get_double("intensity_min", s.intensity_min);
  s.intensity_jitter = kv.get_double("intensity_jitter", s.intensity_jitter);
  s.noise = kv.get_double("noise", s.noise);
  s.min_separation = kv.get_double("min_separation", s.min_separation);
  s.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(s.seed)));
  s.validate();
  return s;
}

Sample generate_toy_sample(const ToyDatasetSpec& spec, std::int64_t index) {
  if (index < 0 || index >= spec.num_samples) {
    throw std::out_of_range("toy sample index " + std::to_string(index) + " outside [0, " +
                            std::to_string(spec.num_samples) + ")");
  }
  std::mt19937_64 rng = keyed_rng(spec.seed, Stream::ToySample, static_cast<std::uint64_t>(index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double lo = spec.margin();
  const double hi = static_cast<double>(spec.image_size - 1) - spec.margin();
  const int joints = spec.num_keypoints;

  Sample s{Tensord(Shape{1, 1, spec.image_size, spec.image_size}), {}};
  s.keypoints.id = std::to_string(index);
  std::vector<double> radius, peak;
  for (int j = 0; j < joints; ++j) {
    Keypoint k;
    // Rejection sampling for separation; after enough tries, keep the last draw.
    for (int attempt = 0; attempt < 200; ++attempt) {
      k.x = lo + (hi - lo) * unit(rng);
      k.y = lo + (hi - lo) * unit(rng);
      const bool clear = std::all_of(s.keypoints.joints.begin(), s.keypoints.joints.end(), [&](const Keypoint& o) {
        return std::hypot(o.x - k.x, o.y - k.y) >= spec.min_separation;
      });
      if (clear) break;
    }
    s.keypoints.joints.push_back(k);
    radius.push_back(spec.blob_radius_min + (spec.blob_radius_max - spec.blob_radius_min) * unit(rng));
    const double step = joints > 1 ? (spec.intensity_max - spec.intensity_min) / (joints - 1) : 0.0;
    peak.push_back(spec.intensity_max - j * step + spec.intensity_jitter * (2 * unit(rng) - 1));
  }

  for (std::int64_t y = 0; y < spec.image_size; ++y) {
    for (std::int64_t x = 0; x < spec.image_size; ++x) {
      double v = spec.noise * unit(rng);
      for (int j = 0; j < joints; ++j) {
        const Keypoint& k = s.keypoints.joints[static_cast<std::size_t>(j)];
        const double d2 = (x - k.x) * (x - k.x) + (y - k.y) * (y - k.y);
        const double r = radius[static_cast<std::size_t>(j)];
        v = std::max(v, peak[static_cast<std::size_t>(j)] * std::exp(-d2 / (2 * r * r)));
      }
      s.image(0, 0, y, x) = std::min(v, 1.0);
    }
  }
  return s;
}

SplitIndices split_dataset(std::int64_t num_samples) {
  SplitIndices out;
  for (std::int64_t i = 0; i < num_samples; ++i) {
    (is_validation_index(static_cast<std::uint64_t>(i)) ? out.validation : out.train).push_back(i);
  }
  return out;
}

void export_toy_dataset(const ToyDatasetSpec& spec, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const KeypointSchema schema = toy_schema(spec.num_keypoints);
  std::vector<KeypointSet> all;
  for (std::int64_t i = 0; i < spec.num_samples; ++i) {
    Sample s = generate_toy_sample(spec, i);
    write_bytes((fs::path(dir) / ("sample_" + std::to_string(i) + ".pgm")).string(), encode_pgm(s.image));
    all.push_back(std::move(s.keypoints));
  }
  std::ofstream out(fs::path(dir) / "keypoints.txt");
  write_keypoints(out, schema, all, false);
  if (!out) throw std::runtime_error("failed writing keypoints to " + dir);
}

}  // namespace lap
