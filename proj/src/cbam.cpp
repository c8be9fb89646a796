#include "lap/cbam.hpp"

namespace lap {

Cbam::Cbam(std::int64_t channels, std::int64_t reduction, Activation hidden, bool spatial_bias)
    : channel_(ChannelAttentionParams<double>::zeros(channels, reduction)),
      spatial_(SpatialAttentionParams<double>::zeros(spatial_bias)),
      channel_grad_(ChannelAttentionParams<double>::zeros(channels, reduction)),
      spatial_grad_(SpatialAttentionParams<double>::zeros(spatial_bias)) {
  channel_.hidden = hidden;
}

void Cbam::init(std::mt19937_64& rng) {
  he_normal(channel_.fc1.weight, channel_.fc1.in_features(), rng);
  he_normal(channel_.fc2.weight, channel_.fc2.in_features(), rng);
  channel_.fc1.bias.array().setZero();
  channel_.fc2.bias.array().setZero();
  he_normal(spatial_.conv.kernel, 2 * 7 * 7, rng);
  if (spatial_.conv.has_bias()) spatial_.conv.bias.array().setZero();
}

Tensord Cbam::forward(const Tensord& x, Mode) { return cbam_forward(x, channel_, spatial_, &cache_); }

Tensord Cbam::backward(const Tensord& dy) {
  if (cache_.input.empty()) throw std::logic_error("Cbam::backward without a cached forward");
  CbamGrads<double> g = cbam_backward(dy, channel_, spatial_, cache_);
  channel_grad_.fc1.weight.array() += g.fc1.weight.array();
  channel_grad_.fc1.bias.array() += g.fc1.bias.array();
  channel_grad_.fc2.weight.array() += g.fc2.weight.array();
  channel_grad_.fc2.bias.array() += g.fc2.bias.array();
  spatial_grad_.conv.kernel.array() += g.conv.kernel.array();
  if (spatial_.conv.has_bias()) spatial_grad_.conv.bias.array() += g.conv.bias.array();
  return std::move(g.input);
}

void Cbam::collect(const std::string& prefix, ParamList& out) {
  const std::string p = prefix.empty() ? "" : prefix + ".";
  out.push_back({p + "mlp.fc1.weight", &channel_.fc1.weight, &channel_grad_.fc1.weight});
  out.push_back({p + "mlp.fc1.bias", &channel_.fc1.bias, &channel_grad_.fc1.bias});
  out.push_back({p + "mlp.fc2.weight", &channel_.fc2.weight, &channel_grad_.fc2.weight});
  out.push_back({p + "mlp.fc2.bias", &channel_.fc2.bias, &channel_grad_.fc2.bias});
  out.push_back({p + "spatial.weight", &spatial_.conv.kernel, &spatial_grad_.conv.kernel});
  if (spatial_.conv.has_bias()) out.push_back({p + "spatial.bias", &spatial_.conv.bias, &spatial_grad_.conv.bias});
}

}  // namespace lap
