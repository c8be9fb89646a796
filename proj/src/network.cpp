#include "lap/network.hpp"

#include <iomanip>
#include <sstream>

namespace lap {
namespace {

std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace

std::string_view to_string(BlockKind k) { return k == BlockKind::Standard ? "standard" : "lightweight"; }

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Elu: return "elu";
    case Activation::Identity: break;
  }
  return "identity";
}

BlockKind parse_block_kind(std::string_view s) {
  if (s == "standard") return BlockKind::Standard;
  if (s == "lightweight") return BlockKind::Lightweight;
  throw ConfigError("block_kind must be standard|lightweight, got '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "elu") return Activation::Elu;
  if (s == "identity") return Activation::Identity;
  throw ConfigError("activation must be relu|elu, got '" + std::string(s) + "'");
}

//------------------------------------------------------------------------------
// NetworkConfig
//------------------------------------------------------------------------------

void NetworkConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("network config: " + m); };
  if (stacks < 1) fail("stacks must be >= 1");
  if (depth < 1) fail("depth must be >= 1");
  if (channels < 2 || channels % 2 != 0) fail("channels must be even and >= 2");
  if (stem_channels < 1) fail("stem_channels must be >= 1");
  if (input_channels < 1) fail("input_channels must be >= 1");
  if (blocks_per_level < 1) fail("blocks_per_level must be >= 1");
  if (num_keypoints < 1) fail("num_keypoints must be >= 1");
  if (elu_alpha <= 0) fail("elu_alpha must be > 0");
  if ((cbam_inside || cbam_between_stacks) && (reduction_ratio < 1 || channels % reduction_ratio != 0)) {
    fail("reduction_ratio " + std::to_string(reduction_ratio) + " must divide channels " + std::to_string(channels));
  }
  const std::int64_t unit = std::int64_t{4} << depth;
  if (input_h < 1 || input_w < 1 || input_h % unit != 0 || input_w % unit != 0) {
    fail("input " + std::to_string(input_h) + "x" + std::to_string(input_w) + " must be divisible by 4*2^depth = " +
         std::to_string(unit));
  }
}

void NetworkConfig::validate_input(const Shape& s) const {
  if (s.c != input_channels || s.h != input_h || s.w != input_w) {
    throw ShapeError("network input " + s.str() + " does not match config (N x " + std::to_string(input_channels) +
                     " x " + std::to_string(input_h) + " x " + std::to_string(input_w) + ")");
  }
}

std::string NetworkConfig::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "stacks = " << stacks << "\n"
     << "depth = " << depth << "\n"
     << "channels = " << channels << "\n"
     << "stem_channels = " << stem_channels << "\n"
     << "input_channels = " << input_channels << "\n"
     << "blocks_per_level = " << blocks_per_level << "\n"
     << "block_kind = " << to_string(block_kind) << "\n"
     << "activation = " << to_string(activation) << "\n"
     << "elu_alpha = " << elu_alpha << "\n"
     << "cbam_between_stacks = " << (cbam_between_stacks ? "true" : "false") << "\n"
     << "cbam_inside = " << (cbam_inside ? "true" : "false") << "\n"
     << "reduction_ratio = " << reduction_ratio << "\n"
     << "cbam_mlp_activation = " << to_string(cbam_mlp_activation) << "\n"
     << "num_keypoints = " << num_keypoints << "\n"
     << "input_h = " << input_h << "\n"
     << "input_w = " << input_w << "\n";
  return os.str();
}

NetworkConfig NetworkConfig::from_key_values(const KeyValues& kv) {
  kv.require_known({"preset", "stacks", "depth", "channels", "stem_channels", "input_channels", "blocks_per_level",
                    "block_kind", "activation", "elu_alpha", "cbam_between_stacks", "cbam_inside", "reduction_ratio",
                    "cbam_mlp_activation", "num_keypoints", "input_h", "input_w"},
                   "network config");
  NetworkConfig c = kv.has("preset") ? build_lap_config(kv.get("preset", "")) : NetworkConfig{};
  c.stacks = static_cast<int>(kv.get_int("stacks", c.stacks));
  c.depth = static_cast<int>(kv.get_int("depth", c.depth));
  c.channels = kv.get_int("channels", c.channels);
  c.stem_channels = kv.get_int("stem_channels", c.stem_channels);
  c.input_channels = kv.get_int("input_channels", c.input_channels);
  c.blocks_per_level = static_cast<int>(kv.get_int("blocks_per_level", c.blocks_per_level));
  if (kv.has("block_kind")) c.block_kind = parse_block_kind(kv.get("block_kind", ""));
  if (kv.has("activation")) c.activation = parse_activation(kv.get("activation", ""));
  c.elu_alpha = kv.get_double("elu_alpha", c.elu_alpha);
  c.cbam_between_stacks = kv.get_bool("cbam_between_stacks", c.cbam_between_stacks);
  c.cbam_inside = kv.get_bool("cbam_inside", c.cbam_inside);
  c.reduction_ratio = kv.get_int("reduction_ratio", c.reduction_ratio);
  if (kv.has("cbam_mlp_activation")) c.cbam_mlp_activation = parse_activation(kv.get("cbam_mlp_activation", ""));
  c.num_keypoints = static_cast<int>(kv.get_int("num_keypoints", c.num_keypoints));
  c.input_h = kv.get_int("input_h", c.input_h);
  c.input_w = kv.get_int("input_w", c.input_w);
  c.validate();
  return c;
}

NetworkConfig build_lap_config(std::string_view preset) {
  NetworkConfig c;
  if (preset == "lap2") {
    // Widths chosen so the counted parameters land near 2.30M; see docs/presets.md.
    c.stacks = 2;
    c.depth = 4;
    c.channels = 224;
    c.stem_channels = 64;
    c.block_kind = BlockKind::Lightweight;
    c.activation = Activation::Elu;
    c.cbam_between_stacks = true;
    c.cbam_inside = true;
    c.reduction_ratio = 16;
    return c;
  }
  if (preset == "hourglass2-standard") {
    c.stacks = 2;
    c.depth = 4;
    c.channels = 256;
    c.stem_channels = 64;
    c.block_kind = BlockKind::Standard;
    c.activation = Activation::Relu;
    c.cbam_between_stacks = false;
    c.cbam_inside = false;
    return c;
  }
  if (preset == "toy") {
    c.stacks = 1;
    c.depth = 2;
    c.channels = 32;
    c.stem_channels = 16;
    c.input_channels = 1;
    c.block_kind = BlockKind::Lightweight;
    c.activation = Activation::Elu;
    c.reduction_ratio = 8;
    c.num_keypoints = 4;
    c.input_h = 64;
    c.input_w = 64;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(preset) + "' (expected lap2|hourglass2-standard|toy)");
}

NetworkConfig resolve_network_config(const std::string& spec) {
  constexpr std::string_view tag = "preset:";
  if (spec.rfind(tag, 0) == 0) return build_lap_config(spec.substr(tag.size()));
  if (spec == "lap2" || spec == "hourglass2-standard" || spec == "toy") return build_lap_config(spec);
  return NetworkConfig::load(spec);
}

//------------------------------------------------------------------------------
// Bottleneck
//------------------------------------------------------------------------------

Bottleneck::Bottleneck(const BottleneckSpec& spec) : spec_(spec) {
  const auto in = spec.in_channels, mid = spec.mid_channels, out = spec.out_channels;
  if (in < 1 || mid < 1 || out < 1) throw ConfigError("bottleneck channels must be positive");
  const Activation act = spec.activation;
  main_.push_back(std::make_unique<ConvBnAct>(in, mid, 1, 1, 1, true, act));
  if (spec.kind == BlockKind::Standard) {
    main_.push_back(std::make_unique<ConvBnAct>(mid, mid, 3, 1, 1, true, act));
  } else {
    main_.push_back(std::make_unique<ConvBnAct>(mid, mid, 3, 1, static_cast<int>(mid), true, act));
    main_.push_back(std::make_unique<ConvBnAct>(mid, mid, 1, 1, 1, true, act));
  }
  main_.push_back(std::make_unique<ConvBnAct>(mid, out, 1, 1, 1, true, Activation::Identity));
  if (in != out) projection_ = std::make_unique<ConvBnAct>(in, out, 1, 1, 1, true, Activation::Identity);
  for (auto& m : main_) m->set_elu_alpha(spec.elu_alpha);
}

void Bottleneck::init(std::mt19937_64& rng) {
  for (auto& m : main_) m->init(rng);
  if (projection_) projection_->init(rng);
}

Tensord Bottleneck::forward(const Tensord& x, Mode mode) {
  if (x.shape().c != spec_.in_channels) {
    throw ShapeError("bottleneck expects " + std::to_string(spec_.in_channels) + " channels, got " + x.shape().str());
  }
  Tensord t = x;
  for (auto& m : main_) t = m->forward(t, mode);
  t.array() += projection_ ? projection_->forward(x, mode).array() : x.array();
  Tensord y = activate(t, spec_.activation, spec_.elu_alpha);
  sum_ = std::move(t);
  return y;
}

Tensord Bottleneck::backward(const Tensord& dy) {
  const Tensord dsum = activate_backward(dy, sum_, spec_.activation, spec_.elu_alpha);
  Tensord d = dsum;
  for (auto it = main_.rbegin(); it != main_.rend(); ++it) d = (*it)->backward(d);
  d.array() += projection_ ? projection_->backward(dsum).array() : dsum.array();
  return d;
}

void Bottleneck::collect(const std::string& prefix, ParamList& out) {
  static const char* const standard_names[] = {"reduce", "spatial", "expand"};
  static const char* const light_names[] = {"reduce", "depthwise", "pointwise", "expand"};
  for (std::size_t i = 0; i < main_.size(); ++i) {
    const char* name = spec_.kind == BlockKind::Standard ? standard_names[i] : light_names[i];
    main_[i]->collect(join(prefix, name), out);
  }
  if (projection_) projection_->collect(join(prefix, "skip"), out);
}

//------------------------------------------------------------------------------
// BlockChain
//------------------------------------------------------------------------------

BlockChain::BlockChain(int count, const BottleneckSpec& first, const BottleneckSpec& rest) {
  for (int i = 0; i < count; ++i) blocks_.push_back(std::make_unique<Bottleneck>(i == 0 ? first : rest));
}

void BlockChain::init(std::mt19937_64& rng) {
  for (auto& b : blocks_) b->init(rng);
}

Tensord BlockChain::forward(const Tensord& x, Mode mode) {
  Tensord t = x;
  for (auto& b : blocks_) t = b->forward(t, mode);
  return t;
}

Tensord BlockChain::backward(const Tensord& dy) {
  Tensord d = dy;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = (*it)->backward(d);
  return d;
}

void BlockChain::collect(const std::string& prefix, ParamList& out) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i]->collect(join(prefix, std::to_string(i)), out);
}

//------------------------------------------------------------------------------
// Hourglass
//------------------------------------------------------------------------------

Hourglass::Hourglass(const HourglassSpec& spec, BlockKind kind, Activation act, std::int64_t reduction,
                     Activation cbam_hidden, double elu_alpha)
    : depth_(spec.depth) {
  if (spec.depth < 1) throw ConfigError("hourglass depth must be >= 1");
  const BottleneckSpec block = BottleneckSpec::make(kind, spec.channels, spec.channels, act, elu_alpha);
  const int n = spec.blocks_per_level;
  skip_ = std::make_unique<BlockChain>(n, block, block);
  before_ = std::make_unique<BlockChain>(n, block, block);
  if (spec.depth > 1) {
    HourglassSpec next = spec;
    next.depth -= 1;
    inner_ = std::make_unique<Hourglass>(next, kind, act, reduction, cbam_hidden, elu_alpha);
  } else {
    bottom_ = std::make_unique<BlockChain>(n, block, block);
  }
  after_ = std::make_unique<BlockChain>(n, block, block);
  if (spec.attention_inside) attention_ = std::make_unique<Cbam>(spec.channels, reduction, cbam_hidden);
}

void Hourglass::init(std::mt19937_64& rng) {
  skip_->init(rng);
  before_->init(rng);
  if (inner_) inner_->init(rng);
  if (bottom_) bottom_->init(rng);
  after_->init(rng);
  if (attention_) attention_->init(rng);
}

Tensord Hourglass::forward(const Tensord& x, Mode mode) {
  const Shape& s = x.shape();
  const std::int64_t unit = std::int64_t{1} << depth_;
  if (s.h % unit != 0 || s.w % unit != 0) {
    throw ShapeError("hourglass of depth " + std::to_string(depth_) + " needs spatial dims divisible by " +
                     std::to_string(unit) + ", got " + s.str());
  }
  input_shape_ = s;
  Tensord up = skip_->forward(x, mode);
  PoolResult<double> pooled = maxpool2d(x);
  pool_argmax_ = std::move(pooled.argmax);
  Tensord low = before_->forward(pooled.output, mode);
  low = inner_ ? inner_->forward(low, mode) : bottom_->forward(low, mode);
  low = after_->forward(low, mode);
  up.array() += upsample_nearest(low).array();
  return attention_ ? attention_->forward(up, mode) : up;
}

Tensord Hourglass::backward(const Tensord& dy) {
  const Tensord dmerged = attention_ ? attention_->backward(dy) : dy;
  Tensord dlow = after_->backward(upsample_nearest_backward(dmerged));
  dlow = inner_ ? inner_->backward(dlow) : bottom_->backward(dlow);
  dlow = before_->backward(dlow);
  Tensord dx = maxpool2d_backward(dlow, pool_argmax_, input_shape_);
  dx.array() += skip_->backward(dmerged).array();
  return dx;
}

void Hourglass::collect(const std::string& prefix, ParamList& out) {
  skip_->collect(join(prefix, "skip"), out);
  before_->collect(join(prefix, "before"), out);
  if (inner_) inner_->collect(join(prefix, "inner"), out);
  if (bottom_) bottom_->collect(join(prefix, "bottom"), out);
  after_->collect(join(prefix, "after"), out);
  if (attention_) attention_->collect(join(prefix, "cbam"), out);
}

//------------------------------------------------------------------------------
// LapNet
//------------------------------------------------------------------------------

LapNet::LapNet(const NetworkConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const NetworkConfig& c = config_;
  const auto kind = c.block_kind;
  const auto act = c.activation;
  const auto mid = c.stem_mid_channels();
  stem_conv_ = std::make_unique<ConvBnAct>(c.input_channels, c.stem_channels, 7, 2, 1, true, act);
  stem_conv_->set_elu_alpha(c.elu_alpha);
  stem_block1_ = std::make_unique<Bottleneck>(BottleneckSpec::make(kind, c.stem_channels, mid, act, c.elu_alpha));
  stem_block2_ = std::make_unique<Bottleneck>(BottleneckSpec::make(kind, mid, mid, act, c.elu_alpha));
  stem_block3_ = std::make_unique<Bottleneck>(BottleneckSpec::make(kind, mid, c.channels, act, c.elu_alpha));

  const BottleneckSpec block = BottleneckSpec::make(kind, c.channels, c.channels, act, c.elu_alpha);
  for (int i = 0; i < c.stacks; ++i) {
    Stack s;
    s.hourglass =
        std::make_unique<Hourglass>(c.hourglass(), kind, act, c.reduction_ratio, c.cbam_mlp_activation, c.elu_alpha);
    s.post = std::make_unique<BlockChain>(c.blocks_per_level, block, block);
    if (c.cbam_between_stacks) s.attention = std::make_unique<Cbam>(c.channels, c.reduction_ratio, c.cbam_mlp_activation);
    s.features = std::make_unique<ConvBnAct>(c.channels, c.channels, 1, 1, 1, true, act);
    s.features->set_elu_alpha(c.elu_alpha);
    s.score = std::make_unique<Conv2d>(c.channels, c.num_keypoints, 1, 1, 0, 1, true);
    if (i + 1 < c.stacks) {
      s.remap_features = std::make_unique<Conv2d>(c.channels, c.channels, 1, 1, 0, 1, true);
      s.remap_heatmaps = std::make_unique<Conv2d>(c.num_keypoints, c.channels, 1, 1, 0, 1, true);
    }
    stacks_.push_back(std::move(s));
  }

  // Initialization order is fixed so a seed fully determines the weights.
  std::mt19937_64 rng(seed);
  stem_conv_->init(rng);
  stem_block1_->init(rng);
  stem_block2_->init(rng);
  stem_block3_->init(rng);
  for (auto& s : stacks_) {
    s.hourglass->init(rng);
    s.post->init(rng);
    if (s.attention) s.attention->init(rng);
    s.features->init(rng);
    s.score->init(rng);
    if (s.remap_features) s.remap_features->init(rng);
    if (s.remap_heatmaps) s.remap_heatmaps->init(rng);
  }
}

void LapNet::zero_heads() {
  for (auto& s : stacks_) {
    s.score->params().kernel.array().setZero();
    s.score->params().bias.array().setZero();
  }
}

std::vector<Tensord> LapNet::forward(const Tensord& image, Mode mode) {
  config_.validate_input(image.shape());
  Tensord x = stem_conv_->forward(image, mode);
  x = stem_block1_->forward(x, mode);
  stem_pool_input_ = x.shape();
  PoolResult<double> pooled = maxpool2d(x);
  stem_pool_argmax_ = std::move(pooled.argmax);
  x = stem_block2_->forward(pooled.output, mode);
  x = stem_block3_->forward(x, mode);
  stack_input_ = x.shape();

  std::vector<Tensord> heatmaps;
  for (std::size_t i = 0; i < stacks_.size(); ++i) {
    Stack& s = stacks_[i];
    Tensord f = s.post->forward(s.hourglass->forward(x, mode), mode);
    if (s.attention) f = s.attention->forward(f, mode);
    const Tensord y = s.features->forward(f, mode);
    Tensord hm = s.score->forward(y, mode);
    if (s.remap_features) {
      x.array() += s.remap_features->forward(y, mode).array() + s.remap_heatmaps->forward(hm, mode).array();
    }
    heatmaps.push_back(std::move(hm));
  }
  return heatmaps;
}

Tensord LapNet::backward(const std::vector<Tensord>& heatmap_grads) {
  if (heatmap_grads.size() != stacks_.size()) {
    throw ShapeError("LapNet::backward expects " + std::to_string(stacks_.size()) + " heatmap gradients, got " +
                     std::to_string(heatmap_grads.size()));
  }
  Tensord dx(stack_input_);  // gradient w.r.t. the input of the stack after the current one
  for (std::size_t k = stacks_.size(); k-- > 0;) {
    Stack& s = stacks_[k];
    Tensord dhm = heatmap_grads[k];
    Tensord dy(stack_input_);
    if (s.remap_features) {
      dy.array() += s.remap_features->backward(dx).array();
      dhm.array() += s.remap_heatmaps->backward(dx).array();
    } else {
      dx.array().setZero();
    }
    dy.array() += s.score->backward(dhm).array();
    Tensord df = s.features->backward(dy);
    if (s.attention) df = s.attention->backward(df);
    const Tensord dh = s.hourglass->backward(s.post->backward(df));
    dx.array() += dh.array();
  }
  Tensord d = stem_block2_->backward(stem_block3_->backward(dx));
  d = stem_block1_->backward(maxpool2d_backward(d, stem_pool_argmax_, stem_pool_input_));
  return stem_conv_->backward(d);
}

ParamList LapNet::parameters() {
  ParamList out;
  stem_conv_->collect("stem.conv", out);
  stem_block1_->collect("stem.block1", out);
  stem_block2_->collect("stem.block2", out);
  stem_block3_->collect("stem.block3", out);
  for (std::size_t i = 0; i < stacks_.size(); ++i) {
    Stack& s = stacks_[i];
    const std::string p = "stack" + std::to_string(i);
    s.hourglass->collect(p + ".hg", out);
    s.post->collect(p + ".post", out);
    if (s.attention) s.attention->collect(p + ".cbam", out);
    s.features->collect(p + ".features", out);
    s.score->collect(p + ".score", out);
    if (s.remap_features) s.remap_features->collect(p + ".remap_features", out);
    if (s.remap_heatmaps) s.remap_heatmaps->collect(p + ".remap_heatmaps", out);
  }
  return out;
}

std::int64_t LapNet::num_trainable() { return count_trainable(parameters()); }

}  // namespace lap
