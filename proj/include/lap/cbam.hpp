#pragma once

// Convolutional block attention: a channel gate from a shared MLP over the
// spatially avg- and max-pooled descriptors, then a spatial gate from a 7x7
// convolution over the channel-pooled avg/max maps. Applied strictly in that
// order: F' = Mc(F) * F, F'' = Ms(F') * F'.

#include "lap/layers.hpp"
#include "lap/module.hpp"
#include "lap/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace lap {

template <typename Scalar>
struct ChannelAttentionParams {
  LinearParams<Scalar> fc1;  // C -> C / r
  LinearParams<Scalar> fc2;  // C / r -> C
  Activation hidden = Activation::Relu;

  std::int64_t channels() const { return fc1.in_features(); }

  static ChannelAttentionParams zeros(std::int64_t channels, std::int64_t reduction) {
    if (reduction < 1 || channels % reduction != 0) {
      throw ShapeError("channel attention: reduction ratio " + std::to_string(reduction) + " must divide " +
                       std::to_string(channels));
    }
    const std::int64_t hidden = channels / reduction;
    ChannelAttentionParams p;
    p.fc1 = {Tensor<Scalar>(Shape{hidden, channels, 1, 1}), Tensor<Scalar>(Shape{1, hidden, 1, 1})};
    p.fc2 = {Tensor<Scalar>(Shape{channels, hidden, 1, 1}), Tensor<Scalar>(Shape{1, channels, 1, 1})};
    return p;
  }
};

template <typename Scalar>
struct SpatialAttentionParams {
  ConvParams<Scalar> conv;  // 1 x 2 x 7 x 7, padding 3

  static SpatialAttentionParams zeros(bool bias = true) {
    SpatialAttentionParams p;
    p.conv.kernel = Tensor<Scalar>(Shape{1, 2, 7, 7});
    if (bias) p.conv.bias = Tensor<Scalar>(Shape{1, 1, 1, 1});
    p.conv.padding = 3;
    return p;
  }
};

template <typename Scalar>
struct CbamCache {
  Tensor<Scalar> input;
  Tensor<Scalar> avg, max;                // N x C x 1 x 1
  Tensor<Scalar> hidden_avg, hidden_max;  // pre-activation of the MLP hidden layer
  Tensor<Scalar> channel_gate;            // N x C x 1 x 1
  Tensor<Scalar> refined;                 // F'
  Tensor<Scalar> pooled;                  // N x 2 x H x W, [avg; max] over channels of F'
  Tensor<Scalar> spatial_gate;            // N x 1 x H x W
};

template <typename Scalar>
struct CbamGrads {
  Tensor<Scalar> input;
  LinearGrads<Scalar> fc1, fc2;
  ConvGrads<Scalar> conv;
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> shared_mlp(const Tensor<Scalar>& v, const ChannelAttentionParams<Scalar>& p, std::type_identity_t<Tensor<Scalar>>* hidden) {
  Tensor<Scalar> h = linear_forward(v, p.fc1);
  Tensor<Scalar> out = linear_forward(activate(h, p.hidden), p.fc2);
  if (hidden) *hidden = std::move(h);
  return out;
}

}  // namespace detail

/// Mc(F) = sigmoid(MLP(AvgPool(F)) + MLP(MaxPool(F))), shape N x C x 1 x 1.
template <typename Scalar>
Tensor<Scalar> channel_attention(const Tensor<Scalar>& f, const ChannelAttentionParams<Scalar>& p) {
  if (f.shape().c != p.channels()) throw shape_mismatch("channel_attention", f.shape(), p.fc1.weight.shape());
  const Tensor<Scalar> a = detail::shared_mlp(reduce(f, ReduceAxes::Spatial, ReduceMode::Mean), p, nullptr);
  const Tensor<Scalar> m = detail::shared_mlp(reduce(f, ReduceAxes::Spatial, ReduceMode::Max), p, nullptr);
  return sigmoid(add(a, m));
}

template <typename Scalar>
Tensor<Scalar> apply_channel_attention(const Tensor<Scalar>& f, const Tensor<Scalar>& gate) {
  const Shape& s = f.shape();
  if (gate.shape() != Shape{s.n, s.c, 1, 1}) throw shape_mismatch("apply_channel_attention", s, gate.shape());
  return elementwise_mul(f, gate);
}

/// Ms(F) = sigmoid(conv7x7([AvgPool_c(F); MaxPool_c(F)])), shape N x 1 x H x W.
template <typename Scalar>
Tensor<Scalar> spatial_attention(const Tensor<Scalar>& f, const SpatialAttentionParams<Scalar>& p) {
  const Tensor<Scalar> pooled =
      concat_channels(reduce(f, ReduceAxes::Channel, ReduceMode::Mean), reduce(f, ReduceAxes::Channel, ReduceMode::Max));
  return sigmoid(conv2d_forward(pooled, p.conv));
}

template <typename Scalar>
Tensor<Scalar> cbam_forward(const Tensor<Scalar>& f, const ChannelAttentionParams<Scalar>& cp,
                            const SpatialAttentionParams<Scalar>& sp, CbamCache<Scalar>* cache = nullptr) {
  if (f.shape().c != cp.channels()) throw shape_mismatch("cbam_forward", f.shape(), cp.fc1.weight.shape());
  CbamCache<Scalar> c;
  c.input = f;
  c.avg = reduce(f, ReduceAxes::Spatial, ReduceMode::Mean);
  c.max = reduce(f, ReduceAxes::Spatial, ReduceMode::Max);
  const Tensor<Scalar> logits =
      add(detail::shared_mlp(c.avg, cp, &c.hidden_avg), detail::shared_mlp(c.max, cp, &c.hidden_max));
  c.channel_gate = sigmoid(logits);
  c.refined = apply_channel_attention(f, c.channel_gate);
  c.pooled = concat_channels(reduce(c.refined, ReduceAxes::Channel, ReduceMode::Mean),
                             reduce(c.refined, ReduceAxes::Channel, ReduceMode::Max));
  c.spatial_gate = sigmoid(conv2d_forward(c.pooled, sp.conv));
  Tensor<Scalar> out = elementwise_mul(c.refined, c.spatial_gate);
  if (cache) *cache = std::move(c);
  return out;
}

template <typename Scalar>
CbamGrads<Scalar> cbam_backward(const Tensor<Scalar>& dy, const ChannelAttentionParams<Scalar>& cp,
                                const SpatialAttentionParams<Scalar>& sp, const CbamCache<Scalar>& c) {
  const Shape& s = c.input.shape();
  if (dy.shape() != s) throw shape_mismatch("cbam_backward upstream", dy.shape(), s);
  const std::int64_t hw = s.plane();

  // Spatial gate.
  Tensor<Scalar> d_refined = elementwise_mul(dy, c.spatial_gate);
  Tensor<Scalar> d_sgate(c.spatial_gate.shape());
  for (std::int64_t n = 0; n < s.n; ++n) {
    Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> dst(d_sgate.plane(n, 0), hw);
    for (std::int64_t ch = 0; ch < s.c; ++ch) {
      dst += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(dy.plane(n, ch), hw) *
             Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(c.refined.plane(n, ch), hw);
    }
  }
  CbamGrads<Scalar> g;
  g.conv = conv2d_backward(sigmoid_backward(d_sgate, c.spatial_gate), c.pooled, sp.conv);
  const Tensor<Scalar>& d_pooled = g.conv.input;
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t i = 0; i < hw; ++i) {
      const Scalar d_avg = d_pooled.plane(n, 0)[i] / Scalar(s.c);
      std::int64_t arg = 0;
      for (std::int64_t ch = 0; ch < s.c; ++ch) {
        d_refined.plane(n, ch)[i] += d_avg;
        if (c.refined.plane(n, ch)[i] > c.refined.plane(n, arg)[i]) arg = ch;
      }
      d_refined.plane(n, arg)[i] += d_pooled.plane(n, 1)[i];
    }
  }

  // Channel gate.
  g.input = elementwise_mul(d_refined, c.channel_gate);
  Tensor<Scalar> d_cgate(c.channel_gate.shape());
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t ch = 0; ch < s.c; ++ch) {
      d_cgate(n, ch, 0, 0) = (Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(d_refined.plane(n, ch), hw) *
                              Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(c.input.plane(n, ch), hw))
                                 .sum();
    }
  }
  const Tensor<Scalar> d_logits = sigmoid_backward(d_cgate, c.channel_gate);

  auto mlp_backward = [&](const Tensor<Scalar>& pooled, const Tensor<Scalar>& hidden) {
    const Tensor<Scalar> act = activate(hidden, cp.hidden);
    LinearGrads<Scalar> g2 = linear_backward(d_logits, act, cp.fc2);
    LinearGrads<Scalar> g1 = linear_backward(activate_backward(g2.input, hidden, cp.hidden), pooled, cp.fc1);
    return std::pair{std::move(g1), std::move(g2)};
  };
  auto [a1, a2] = mlp_backward(c.avg, c.hidden_avg);
  auto [m1, m2] = mlp_backward(c.max, c.hidden_max);
  g.fc1 = {Tensor<Scalar>(), add(a1.weight, m1.weight), add(a1.bias, m1.bias)};
  g.fc2 = {Tensor<Scalar>(), add(a2.weight, m2.weight), add(a2.bias, m2.bias)};

  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t ch = 0; ch < s.c; ++ch) {
      const Scalar* src = c.input.plane(n, ch);
      Scalar* dst = g.input.plane(n, ch);
      const Scalar d_avg = a1.input(n, ch, 0, 0) / Scalar(hw);
      std::int64_t arg = 0;
      for (std::int64_t i = 0; i < hw; ++i) {
        dst[i] += d_avg;
        if (src[i] > src[arg]) arg = i;
      }
      dst[arg] += m1.input(n, ch, 0, 0);
    }
  }
  return g;
}

/// CBAM as a trainable module. Parameters: mlp.fc1/fc2 weight+bias, spatial.weight/bias.
class Cbam : public Module {
 public:
  Cbam(std::int64_t channels, std::int64_t reduction, Activation hidden = Activation::Relu, bool spatial_bias = true);

  Tensord forward(const Tensord& x, Mode mode) override;
  Tensord backward(const Tensord& dy) override;
  void collect(const std::string& prefix, ParamList& out) override;

  void init(std::mt19937_64& rng);
  ChannelAttentionParams<double>& channel() { return channel_; }
  SpatialAttentionParams<double>& spatial() { return spatial_; }
  const CbamCache<double>& cache() const { return cache_; }

 private:
  ChannelAttentionParams<double> channel_;
  SpatialAttentionParams<double> spatial_;
  ChannelAttentionParams<double> channel_grad_;
  SpatialAttentionParams<double> spatial_grad_;
  CbamCache<double> cache_;
};

}  // namespace lap
