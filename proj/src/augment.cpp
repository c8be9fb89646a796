#include "lap/dataset.hpp"

#include <cmath>
#include <numbers>

namespace lap {

void AugmentConfig::validate() const {
  if (!(scale_min > 0 && scale_max >= scale_min)) throw ConfigError("augment: need 0 < scale_min <= scale_max");
  if (rotation_deg < 0) throw ConfigError("augment: rotation_deg must be non-negative");
  if (!(flip_probability >= 0 && flip_probability <= 1)) throw ConfigError("augment: flip_probability must be in [0, 1]");
  if (!(brightness >= 0 && brightness < 1) || !(contrast >= 0 && contrast < 1)) {
    throw ConfigError("augment: brightness and contrast ranges must be in [0, 1)");
  }
}

void transform_point(const Transform& t, double width, double height, double& x, double& y) {
  const double cx = (width - 1) / 2, cy = (height - 1) / 2;
  const double th = t.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double dx = (x - cx) * t.scale, dy = (y - cy) * t.scale;
  x = cx + c * dx - s * dy;
  y = cy + s * dx + c * dy;
  if (t.flip) x = width - 1 - x;
}

namespace {

double bilinear(const double* plane, std::int64_t h, std::int64_t w, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy);
  const double ax = x - fx, ay = y - fy;
  auto at = [&](std::int64_t yy, std::int64_t xx) {
    return (xx < 0 || yy < 0 || xx >= w || yy >= h) ? 0.0 : plane[yy * w + xx];
  };
  return (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) + ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
}

}  // namespace

Sample apply_transform(const Sample& sample, const Transform& t, const KeypointSchema& schema) {
  const Shape& s = sample.image.shape();
  const double width = static_cast<double>(s.w), height = static_cast<double>(s.h);
  Sample out{Tensord(s), sample.keypoints};

  const bool geometric = t.scale != 1.0 || t.rotation_deg != 0.0 || t.flip;
  if (geometric) {
    // Inverse map each output pixel back into the source image.
    const double cx = (width - 1) / 2, cy = (height - 1) / 2;
    const double th = t.rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(th), sn = std::sin(th);
    for (std::int64_t n = 0; n < s.n; ++n) {
      for (std::int64_t ch = 0; ch < s.c; ++ch) {
        const double* src = sample.image.plane(n, ch);
        double* dst = out.image.plane(n, ch);
        for (std::int64_t y = 0; y < s.h; ++y) {
          for (std::int64_t x = 0; x < s.w; ++x) {
            const double qx = (t.flip ? width - 1 - x : static_cast<double>(x)) - cx;
            const double qy = static_cast<double>(y) - cy;
            const double px = cx + (c * qx + sn * qy) / t.scale;
            const double py = cy + (-sn * qx + c * qy) / t.scale;
            dst[y * s.w + x] = bilinear(src, s.h, s.w, px, py);
          }
        }
      }
    }
    KeypointSet moved = sample.keypoints;
    Transform no_flip = t;
    no_flip.flip = false;
    for (Keypoint& k : moved.joints) transform_point(no_flip, width, height, k.x, k.y);
    out.keypoints = t.flip ? flip_keypoints(moved, schema, width) : moved;
    for (Keypoint& k : out.keypoints.joints) {
      if (k.x < 0 || k.y < 0 || k.x > width - 1 || k.y > height - 1) k.visible = false;
    }
  } else {
    out.image = sample.image;
  }

  if (t.brightness != 1.0 || t.contrast != 1.0) {
    const double mean = out.image.array().mean();
    out.image.array() = (((out.image.array() - mean) * t.contrast + mean) * t.brightness).min(1.0).max(0.0);
  }
  return out;
}

Transform sample_transform(const AugmentConfig& config, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Transform t;
  if (!config.enabled) return t;
  // Draw every component unconditionally so the stream layout is fixed.
  const double u_scale = unit(rng), u_rot = unit(rng), u_flip = unit(rng), u_b = unit(rng), u_c = unit(rng);
  t.scale = config.scale_min + (config.scale_max - config.scale_min) * u_scale;
  t.rotation_deg = config.rotation_deg * (2 * u_rot - 1);
  t.flip = u_flip < config.flip_probability;
  t.brightness = 1 + config.brightness * (2 * u_b - 1);
  t.contrast = 1 + config.contrast * (2 * u_c - 1);
  return t;
}

Sample augment(const Sample& sample, const AugmentConfig& config, const KeypointSchema& schema, std::mt19937_64& rng) {
  return apply_transform(sample, sample_transform(config, rng), schema);
}

}  // namespace lap
