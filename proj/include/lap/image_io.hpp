#pragma once

// Netpbm images. Grayscale maps to a 1 x 1 x H x W tensor, color to
// 1 x 3 x H x W, values scaled to [0, 1].

#include "lap/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lap {

/// Reads P2, P3, P5 or P6.
Tensord read_pnm(const std::string& path);
Tensord parse_pnm(const std::vector<std::uint8_t>& bytes);

/// Binary P5 of channel `c` of sample 0; values are clamped to [0, 1].
std::vector<std::uint8_t> encode_pgm(const Tensord& image, std::int64_t channel = 0);
/// Binary P6 from a 1 x 3 x H x W tensor.
std::vector<std::uint8_t> encode_ppm(const Tensord& image);

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const std::string& path);

/// 8-bit RGB canvas for overlays.
class RgbCanvas {
 public:
  using Color = std::array<std::uint8_t, 3>;

  RgbCanvas(std::int64_t h, std::int64_t w);
  static RgbCanvas from_gray(const Tensord& image);

  void set(std::int64_t x, std::int64_t y, Color c);
  void line(double x0, double y0, double x1, double y1, Color c);
  void disc(double x, double y, double radius, Color c);
  std::vector<std::uint8_t> encode() const;

 private:
  std::int64_t h_;
  std::int64_t w_;
  std::vector<std::uint8_t> rgb_;
};

}  // namespace lap
