#include "lap/heatmap.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace lap {

int KeypointSchema::flip_partner(int joint) const {
  for (const auto& [a, b] : flip_pairs) {
    if (a == joint) return b;
    if (b == joint) return a;
  }
  return joint;
}

int KeypointSchema::index_of(const std::string& joint) const {
  for (int i = 0; i < size(); ++i) {
    if (joints[static_cast<std::size_t>(i)] == joint) return i;
  }
  return -1;
}

const KeypointSchema& coco17_schema() {
  static const KeypointSchema schema = [] {
    KeypointSchema s;
    s.name = "coco17";
    s.joints = {"nose",       "left_eye",       "right_eye",   "left_ear",    "right_ear",  "left_shoulder",
                "right_shoulder", "left_elbow", "right_elbow", "left_wrist",  "right_wrist", "left_hip",
                "right_hip",  "left_knee",      "right_knee",  "left_ankle",  "right_ankle"};
    s.flip_pairs = {{1, 2}, {3, 4}, {5, 6}, {7, 8}, {9, 10}, {11, 12}, {13, 14}, {15, 16}};
    s.limbs = {{0, 1},  {0, 2},  {1, 3},   {2, 4},   {5, 6},   {5, 7},   {7, 9},   {6, 8},
               {8, 10}, {5, 11}, {6, 12}, {11, 12}, {11, 13}, {13, 15}, {12, 14}, {14, 16}};
    // COCO per-keypoint sigmas, doubled: OKS uses (2 sigma)^2.
    const double sigmas[] = {.026, .025, .025, .035, .035, .079, .079, .072, .072,
                             .062, .062, .107, .107, .087, .087, .089, .089};
    for (double v : sigmas) s.oks_k.push_back(2 * v);
    return s;
  }();
  return schema;
}

const KeypointSchema& mpii16_schema() {
  static const KeypointSchema schema = [] {
    KeypointSchema s;
    s.name = "mpii16";
    s.joints = {"head",        "neck",       "pelvis",      "thorax",     "left_shoulder", "right_shoulder",
                "left_elbow",  "right_elbow", "left_wrist", "right_wrist", "left_knee",    "right_knee",
                "left_ankle",  "right_ankle", "left_hip",   "right_hip"};
    s.flip_pairs = {{4, 5}, {6, 7}, {8, 9}, {10, 11}, {12, 13}, {14, 15}};
    s.limbs = {{0, 1},  {1, 3},  {3, 2},   {3, 4},   {3, 5},   {4, 6},  {6, 8},
               {5, 7},  {7, 9},  {2, 14},  {2, 15},  {14, 10}, {10, 12}, {15, 11}, {11, 13}};
    s.oks_k.assign(16, 0.1);
    return s;
  }();
  return schema;
}

KeypointSchema toy_schema(int count) {
  KeypointSchema s;
  s.name = "toy" + std::to_string(count);
  for (int i = 0; i < count; ++i) s.joints.push_back("j" + std::to_string(i));
  for (int i = 0; i + 1 < count; ++i) s.limbs.emplace_back(i, i + 1);
  s.oks_k.assign(static_cast<std::size_t>(count), 0.1);
  return s;
}

KeypointSchema schema_for(int num_keypoints) {
  if (num_keypoints == 17) return coco17_schema();
  if (num_keypoints == 16) return mpii16_schema();
  return toy_schema(num_keypoints);
}

int KeypointSet::visible_count() const {
  int n = 0;
  for (const auto& j : joints) n += j.visible ? 1 : 0;
  return n;
}

double KeypointSet::mean_confidence() const {
  if (joints.empty()) return 0;
  double s = 0;
  for (const auto& j : joints) s += j.confidence;
  return s / static_cast<double>(joints.size());
}

//------------------------------------------------------------------------------

HeatmapStack encode(const std::vector<KeypointSet>& batch, std::int64_t h, std::int64_t w, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("encode: sigma must be positive");
  const std::int64_t joints = batch.empty() ? 0 : batch.front().size();
  HeatmapStack out{Tensord(Shape{static_cast<std::int64_t>(batch.size()), joints, h, w}), sigma};
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (batch[n].size() != joints) throw ShapeError("encode: samples disagree on joint count");
    for (std::int64_t j = 0; j < joints; ++j) {
      const Keypoint& k = batch[n].joints[static_cast<std::size_t>(j)];
      if (!k.visible) continue;
      double* plane = out.maps.plane(static_cast<std::int64_t>(n), j);
      for (std::int64_t r = 0; r < h; ++r) {
        const double dy = static_cast<double>(r) - k.y;
        for (std::int64_t c = 0; c < w; ++c) {
          const double dx = static_cast<double>(c) - k.x;
          plane[r * w + c] = std::exp(-(dx * dx + dy * dy) * inv);
        }
      }
    }
  }
  return out;
}

HeatmapStack encode(const KeypointSet& keypoints, std::int64_t h, std::int64_t w, double sigma) {
  return encode(std::vector<KeypointSet>{keypoints}, h, w, sigma);
}

std::vector<std::uint8_t> visibility_mask(const std::vector<KeypointSet>& batch) {
  std::vector<std::uint8_t> mask;
  for (const auto& s : batch) {
    for (const auto& j : s.joints) mask.push_back(j.visible ? 1 : 0);
  }
  return mask;
}

MseResult mse_loss(const Tensord& pred, const Tensord& gt, const std::vector<std::uint8_t>& visible) {
  const Shape& s = pred.shape();
  if (s != gt.shape()) throw shape_mismatch("mse_loss", s, gt.shape());
  if (!visible.empty() && static_cast<std::int64_t>(visible.size()) != s.n * s.c) {
    throw ShapeError("mse_loss: visibility mask has " + std::to_string(visible.size()) + " entries for " + s.str());
  }
  MseResult r{0.0, Tensord(s), 0};
  const std::int64_t hw = s.plane();
  double sum = 0;
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t j = 0; j < s.c; ++j) {
      if (!visible.empty() && !visible[static_cast<std::size_t>(n * s.c + j)]) continue;
      Eigen::Map<const Eigen::ArrayXd> p(pred.plane(n, j), hw);
      Eigen::Map<const Eigen::ArrayXd> g(gt.plane(n, j), hw);
      sum += (p - g).square().sum();
      r.count += hw;
    }
  }
  if (r.count == 0) return r;
  r.loss = sum / static_cast<double>(r.count);
  const double k = 2.0 / static_cast<double>(r.count);
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t j = 0; j < s.c; ++j) {
      if (!visible.empty() && !visible[static_cast<std::size_t>(n * s.c + j)]) continue;
      Eigen::Map<Eigen::ArrayXd>(r.grad.plane(n, j), hw) =
          k * (Eigen::Map<const Eigen::ArrayXd>(pred.plane(n, j), hw) - Eigen::Map<const Eigen::ArrayXd>(gt.plane(n, j), hw));
    }
  }
  return r;
}

std::vector<KeypointSet> decode(const Tensord& maps) {
  const Shape& s = maps.shape();
  if (s.h < 3 || s.w < 3) throw ShapeError("decode: heatmaps must be at least 3x3, got " + s.str());
  std::vector<KeypointSet> out(static_cast<std::size_t>(s.n));
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t j = 0; j < s.c; ++j) {
      const double* p = maps.plane(n, j);
      std::int64_t best = 0;
      for (std::int64_t i = 1; i < s.plane(); ++i) {
        if (p[i] > p[best]) best = i;
      }
      const std::int64_t r = best / s.w;
      const std::int64_t c = best % s.w;
      Keypoint k{static_cast<double>(c), static_cast<double>(r), true, p[best]};
      if (c > 0 && c < s.w - 1) {
        const double d = p[best + 1] - p[best - 1];
        if (d > 0) k.x += 0.25;
        if (d < 0) k.x -= 0.25;
      }
      if (r > 0 && r < s.h - 1) {
        const double d = p[best + s.w] - p[best - s.w];
        if (d > 0) k.y += 0.25;
        if (d < 0) k.y -= 0.25;
      }
      out[static_cast<std::size_t>(n)].joints.push_back(k);
    }
  }
  return out;
}

KeypointSet flip_keypoints(const KeypointSet& keypoints, const KeypointSchema& schema, double width) {
  if (keypoints.size() != schema.size()) {
    throw ShapeError("flip_keypoints: " + std::to_string(keypoints.size()) + " joints for schema " + schema.name);
  }
  KeypointSet out = keypoints;
  for (int j = 0; j < keypoints.size(); ++j) {
    Keypoint k = keypoints.joints[static_cast<std::size_t>(j)];
    k.x = width - 1.0 - k.x;
    out.joints[static_cast<std::size_t>(schema.flip_partner(j))] = k;
  }
  return out;
}

KeypointSet scale_keypoints(const KeypointSet& keypoints, double factor) {
  KeypointSet out = keypoints;
  for (auto& j : out.joints) {
    j.x *= factor;
    j.y *= factor;
  }
  return out;
}

KeypointSet image_to_heatmap(const KeypointSet& keypoints, int stride) {
  KeypointSet out = keypoints;
  const double offset = (stride - 1) / 2.0;
  for (auto& j : out.joints) {
    j.x = (j.x - offset) / stride;
    j.y = (j.y - offset) / stride;
  }
  return out;
}

KeypointSet heatmap_to_image(const KeypointSet& keypoints, int stride) {
  KeypointSet out = keypoints;
  const double offset = (stride - 1) / 2.0;
  for (auto& j : out.joints) {
    j.x = j.x * stride + offset;
    j.y = j.y * stride + offset;
  }
  return out;
}

void write_keypoints(std::ostream& os, const KeypointSchema& schema, const std::vector<KeypointSet>& samples,
                     bool with_confidence) {
  os << std::setprecision(17);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const KeypointSet& s = samples[i];
    if (s.size() != schema.size()) throw ShapeError("write_keypoints: joint count does not match schema " + schema.name);
    os << "sample " << (s.id.empty() ? std::to_string(i) : s.id) << "\n";
    for (int j = 0; j < s.size(); ++j) {
      const Keypoint& k = s.joints[static_cast<std::size_t>(j)];
      os << schema.joints[static_cast<std::size_t>(j)] << " " << k.x << " " << k.y << " " << (k.visible ? 1 : 0);
      if (with_confidence) os << " " << k.confidence;
      os << "\n";
    }
  }
}

std::vector<KeypointSet> read_keypoints(std::istream& is, const KeypointSchema& schema) {
  std::vector<KeypointSet> out;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& m) {
    throw std::runtime_error("keypoint file line " + std::to_string(line_no) + ": " + m);
  };
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head) || head[0] == '#') continue;
    if (head == "sample") {
      KeypointSet s;
      ls >> s.id;
      s.joints.resize(static_cast<std::size_t>(schema.size()));
      out.push_back(std::move(s));
      continue;
    }
    if (out.empty()) fail("joint line before any sample record");
    const int j = schema.index_of(head);
    if (j < 0) fail("unknown joint '" + head + "' for schema " + schema.name);
    Keypoint k;
    int vis = 0;
    if (!(ls >> k.x >> k.y >> vis) || (vis != 0 && vis != 1)) fail("expected '<joint> <x> <y> <0|1>'");
    k.visible = vis == 1;
    if (!(ls >> k.confidence)) k.confidence = 1;
    out.back().joints[static_cast<std::size_t>(j)] = k;
  }
  return out;
}

}  // namespace lap
