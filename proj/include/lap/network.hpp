#pragma once

#include "lap/cbam.hpp"
#include "lap/config.hpp"
#include "lap/module.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace lap {

enum class BlockKind { Standard, Lightweight };

std::string_view to_string(BlockKind k);
std::string_view to_string(Activation a);
BlockKind parse_block_kind(std::string_view s);
Activation parse_activation(std::string_view s);

struct BottleneckSpec {
  BlockKind kind = BlockKind::Lightweight;
  std::int64_t in_channels = 0;
  std::int64_t mid_channels = 0;
  std::int64_t out_channels = 0;
  Activation activation = Activation::Elu;
  double elu_alpha = 1.0;

  /// mid = out / 2, the usual bottleneck width.
  static BottleneckSpec make(BlockKind kind, std::int64_t in, std::int64_t out, Activation act, double alpha = 1.0) {
    return {kind, in, out / 2, out, act, alpha};
  }
};

struct HourglassSpec {
  int depth = 4;
  std::int64_t channels = 256;
  int blocks_per_level = 1;
  bool attention_inside = true;
};

/// Stacked-hourglass network description. Serialized as `key = value` text.
struct NetworkConfig {
  int stacks = 2;
  int depth = 4;
  std::int64_t channels = 256;
  std::int64_t stem_channels = 64;  // stem conv width; the stem block pair runs at channels / 2
  std::int64_t input_channels = 3;
  int blocks_per_level = 1;
  BlockKind block_kind = BlockKind::Lightweight;
  Activation activation = Activation::Elu;
  double elu_alpha = 1.0;
  bool cbam_between_stacks = true;
  bool cbam_inside = true;
  std::int64_t reduction_ratio = 16;
  Activation cbam_mlp_activation = Activation::Relu;
  int num_keypoints = 17;
  std::int64_t input_h = 256;
  std::int64_t input_w = 192;

  std::int64_t heatmap_h() const { return input_h / 4; }
  std::int64_t heatmap_w() const { return input_w / 4; }
  std::int64_t stem_mid_channels() const { return channels / 2; }
  HourglassSpec hourglass() const { return {depth, channels, blocks_per_level, cbam_inside}; }

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;
  void validate_input(const Shape& s) const;

  std::string to_text() const;
  static NetworkConfig from_key_values(const KeyValues& kv);
  static NetworkConfig parse(std::string_view text) { return from_key_values(KeyValues::parse(text)); }
  static NetworkConfig load(const std::string& path) { return from_key_values(KeyValues::load(path)); }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Named presets: "lap2", "hourglass2-standard", "toy".
NetworkConfig build_lap_config(std::string_view preset);

/// Loads a config file, or a preset when `spec` is `preset:<name>` or a bare preset name.
NetworkConfig resolve_network_config(const std::string& spec);

//------------------------------------------------------------------------------

/// Residual bottleneck: 1x1 reduce -> 3x3 (standard) or depthwise 3x3 + pointwise
/// (lightweight) -> 1x1 expand, summed with an identity or 1x1-projected skip.
/// Every conv is followed by batch norm; all but the expand conv by the activation,
/// which is applied again after the sum.
class Bottleneck : public Module {
 public:
  explicit Bottleneck(const BottleneckSpec& spec);

  Tensord forward(const Tensord& x, Mode mode) override;
  Tensord backward(const Tensord& dy) override;
  void collect(const std::string& prefix, ParamList& out) override;

  void init(std::mt19937_64& rng);
  const BottleneckSpec& spec() const { return spec_; }
  std::vector<std::unique_ptr<ConvBnAct>>& main_path() { return main_; }
  ConvBnAct* projection() { return projection_.get(); }

 private:
  BottleneckSpec spec_;
  std::vector<std::unique_ptr<ConvBnAct>> main_;
  std::unique_ptr<ConvBnAct> projection_;
  Tensord sum_;
};

/// A run of same-width bottlenecks.
class BlockChain : public Module {
 public:
  BlockChain(int count, const BottleneckSpec& first, const BottleneckSpec& rest);

  Tensord forward(const Tensord& x, Mode mode) override;
  Tensord backward(const Tensord& dy) override;
  void collect(const std::string& prefix, ParamList& out) override;

  void init(std::mt19937_64& rng);
  std::vector<std::unique_ptr<Bottleneck>>& blocks() { return blocks_; }

 private:
  std::vector<std::unique_ptr<Bottleneck>> blocks_;
};

/// Recursive hourglass. At each level:
///   out = skip(x) + upsample(after(inner(before(pool(x)))))
/// where inner is the next level, or a bottom block chain at the last level.
/// With attention inside, CBAM is applied to the merged output of every level.
class Hourglass : public Module {
 public:
  Hourglass(const HourglassSpec& spec, BlockKind kind, Activation act, std::int64_t reduction,
            Activation cbam_hidden, double elu_alpha = 1.0);

  Tensord forward(const Tensord& x, Mode mode) override;
  Tensord backward(const Tensord& dy) override;
  void collect(const std::string& prefix, ParamList& out) override;

  void init(std::mt19937_64& rng);
  int depth() const { return depth_; }

 private:
  int depth_;
  std::unique_ptr<BlockChain> skip_;
  std::unique_ptr<BlockChain> before_;
  std::unique_ptr<Hourglass> inner_;
  std::unique_ptr<BlockChain> bottom_;
  std::unique_ptr<BlockChain> after_;
  std::unique_ptr<Cbam> attention_;
  std::vector<std::int64_t> pool_argmax_;
  Shape input_shape_{};
};

/// Full multi-stack network with one heatmap head per stack.
class LapNet {
 public:
  explicit LapNet(const NetworkConfig& config, std::uint64_t seed = 0);
  LapNet(const LapNet&) = delete;
  LapNet& operator=(const LapNet&) = delete;

  /// One N x J x H/4 x W/4 heatmap tensor per stack.
  std::vector<Tensord> forward(const Tensord& image, Mode mode);
  /// Takes one gradient per stack output, returns the image gradient.
  Tensord backward(const std::vector<Tensord>& heatmap_grads);

  ParamList parameters();
  std::int64_t num_trainable();
  const NetworkConfig& config() const { return config_; }

  void zero_heads();

 private:
  struct Stack {
    std::unique_ptr<Hourglass> hourglass;
    std::unique_ptr<BlockChain> post;
    std::unique_ptr<Cbam> attention;
    std::unique_ptr<ConvBnAct> features;
    std::unique_ptr<Conv2d> score;
    std::unique_ptr<Conv2d> remap_features;
    std::unique_ptr<Conv2d> remap_heatmaps;
  };

  NetworkConfig config_;
  std::unique_ptr<ConvBnAct> stem_conv_;
  std::unique_ptr<Bottleneck> stem_block1_;
  std::unique_ptr<Bottleneck> stem_block2_;
  std::unique_ptr<Bottleneck> stem_block3_;
  std::vector<Stack> stacks_;
  std::vector<std::int64_t> stem_pool_argmax_;
  Shape stem_pool_input_{};
  Shape stack_input_{};
};

}  // namespace lap
