#include "lap/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace lap {
namespace {

class PnmReader {
 public:
  explicit PnmReader(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::int64_t number() {
    skip_space();
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) throw std::runtime_error("pnm: malformed header");
    std::int64_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) v = v * 10 + (b_[pos_++] - '0');
    return v;
  }
  std::uint8_t byte() {
    if (pos_ >= b_.size()) throw std::runtime_error("pnm: truncated pixel data");
    return b_[pos_++];
  }
  void skip_single_space() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw std::runtime_error("pnm: malformed header");
    ++pos_;
  }

 private:
  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 2;
};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::vector<std::uint8_t> header(const char* magic, std::int64_t w, std::int64_t h) {
  const std::string s = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return {s.begin(), s.end()};
}

}  // namespace

Tensord parse_pnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '3' && bytes[1] != '5' && bytes[1] != '6')) {
    throw std::runtime_error("pnm: unsupported or missing magic (expected P2/P3/P5/P6)");
  }
  const char kind = static_cast<char>(bytes[1]);
  const bool binary = kind == '5' || kind == '6';
  const std::int64_t channels = (kind == '3' || kind == '6') ? 3 : 1;
  PnmReader r(bytes);
  const std::int64_t w = r.number();
  const std::int64_t h = r.number();
  const std::int64_t maxval = r.number();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255) throw std::runtime_error("pnm: unsupported dimensions or maxval");
  if (binary) r.skip_single_space();
  Tensord img(Shape{1, channels, h, w});
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t c = 0; c < channels; ++c) {
        const std::int64_t v = binary ? r.byte() : r.number();
        if (v > maxval) throw std::runtime_error("pnm: sample exceeds maxval");
        img(0, c, y, x) = static_cast<double>(v) / static_cast<double>(maxval);
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

Tensord read_pnm(const std::string& path) { return parse_pnm(read_bytes(path)); }

std::vector<std::uint8_t> encode_pgm(const Tensord& image, std::int64_t channel) {
  const Shape& s = image.shape();
  std::vector<std::uint8_t> out = header("P5", s.w, s.h);
  for (std::int64_t y = 0; y < s.h; ++y)
    for (std::int64_t x = 0; x < s.w; ++x) out.push_back(to_byte(image(0, channel, y, x)));
  return out;
}

std::vector<std::uint8_t> encode_ppm(const Tensord& image) {
  const Shape& s = image.shape();
  if (s.c != 3) throw ShapeError("encode_ppm needs 3 channels, got " + s.str());
  std::vector<std::uint8_t> out = header("P6", s.w, s.h);
  for (std::int64_t y = 0; y < s.h; ++y)
    for (std::int64_t x = 0; x < s.w; ++x)
      for (std::int64_t c = 0; c < 3; ++c) out.push_back(to_byte(image(0, c, y, x)));
  return out;
}

RgbCanvas::RgbCanvas(std::int64_t h, std::int64_t w) : h_(h), w_(w), rgb_(static_cast<std::size_t>(3 * h * w), 0) {}

RgbCanvas RgbCanvas::from_gray(const Tensord& image) {
  const Shape& s = image.shape();
  RgbCanvas c(s.h, s.w);
  for (std::int64_t y = 0; y < s.h; ++y) {
    for (std::int64_t x = 0; x < s.w; ++x) {
      const std::uint8_t v = to_byte(image(0, 0, y, x));
      c.set(x, y, {v, v, v});
    }
  }
  return c;
}

void RgbCanvas::set(std::int64_t x, std::int64_t y, Color c) {
  if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
  std::copy(c.begin(), c.end(), rgb_.begin() + 3 * (y * w_ + x));
}

void RgbCanvas::line(double x0, double y0, double x1, double y1, Color c) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    set(std::lround(x0 + t * (x1 - x0)), std::lround(y0 + t * (y1 - y0)), c);
  }
}

void RgbCanvas::disc(double x, double y, double radius, Color c) {
  const auto r = static_cast<std::int64_t>(std::ceil(radius));
  const std::int64_t cx = std::lround(x), cy = std::lround(y);
  for (std::int64_t dy = -r; dy <= r; ++dy)
    for (std::int64_t dx = -r; dx <= r; ++dx)
      if (static_cast<double>(dx * dx + dy * dy) <= radius * radius) set(cx + dx, cy + dy, c);
}

std::vector<std::uint8_t> RgbCanvas::encode() const {
  std::vector<std::uint8_t> out = header("P6", w_, h_);
  out.insert(out.end(), rgb_.begin(), rgb_.end());
  return out;
}

}  // namespace lap
