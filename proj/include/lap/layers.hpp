#pragma once

// Forward and backward passes of the primitive layers, as free functions over
// Tensor<Scalar>. Backward functions take the upstream gradient plus whatever
// forward state they need and return gradients by value; nothing is cached
// behind the caller's back.

#include "lap/tensor.hpp"

#include <type_traits>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lap {

enum class Mode { Train, Eval };
enum class Activation { Identity, Relu, Elu };

//------------------------------------------------------------------------------
// Convolution
//------------------------------------------------------------------------------

template <typename Scalar>
struct ConvParams {
  Tensor<Scalar> kernel;  // (C_out, C_in / groups, D_k, D_k)
  Tensor<Scalar> bias;    // empty, or 1 x C_out x 1 x 1
  int stride = 1;
  int padding = 0;
  int groups = 1;

  std::int64_t out_channels() const { return kernel.shape().n; }
  std::int64_t in_channels() const { return kernel.shape().c * groups; }
  std::int64_t kernel_size() const { return kernel.shape().h; }
  bool has_bias() const { return !bias.empty(); }
};

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> kernel;
  Tensor<Scalar> bias;  // empty when the layer has no bias
};

/// Output side for one spatial axis; zero or negative means the kernel does not fit.
inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, int stride, int padding) {
  const std::int64_t span = in + 2 * padding - k;
  return span < 0 ? 0 : span / stride + 1;
}

namespace detail {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
void check_conv(const Shape& x, const ConvParams<Scalar>& p) {
  const Shape& k = p.kernel.shape();
  if (p.groups < 1 || p.stride < 1 || p.padding < 0) throw ShapeError("conv2d: invalid stride/padding/groups");
  if (k.h != k.w) throw ShapeError("conv2d: kernel must be square, got " + k.str());
  if (k.n % p.groups != 0) throw ShapeError("conv2d: C_out not divisible by groups for kernel " + k.str());
  if (x.c != k.c * p.groups) throw shape_mismatch("conv2d input channels vs kernel", x, k);
  if (p.has_bias() && p.bias.shape() != Shape{1, k.n, 1, 1}) {
    throw shape_mismatch("conv2d bias", p.bias.shape(), Shape{1, k.n, 1, 1});
  }
  if (conv_out_extent(x.h, k.h, p.stride, p.padding) <= 0 || conv_out_extent(x.w, k.w, p.stride, p.padding) <= 0) {
    throw ShapeError("conv2d: input " + x.str() + " too small for kernel " + k.str());
  }
}

template <typename Scalar>
bool is_plain_pointwise(const ConvParams<Scalar>& p) {
  return p.kernel_size() == 1 && p.stride == 1 && p.padding == 0;
}

// Rows are (c, ky, kx) in kernel order, columns are output pixels row-major.
template <typename Scalar>
void im2col(const Tensor<Scalar>& x, std::int64_t n, std::int64_t c0, std::int64_t cin, std::int64_t k, int stride,
            int pad, std::int64_t ho, std::int64_t wo, RowMatrix<Scalar>& col) {
  const Shape& s = x.shape();
  col.resize(cin * k * k, ho * wo);
  for (std::int64_t c = 0; c < cin; ++c) {
    const Scalar* src = x.plane(n, c0 + c);
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        Scalar* row = col.data() + ((c * k + ky) * k + kx) * ho * wo;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky;
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx;
            row[oy * wo + ox] = (iy >= 0 && iy < s.h && ix >= 0 && ix < s.w) ? src[iy * s.w + ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& col, std::int64_t n, std::int64_t c0, std::int64_t cin, std::int64_t k,
                int stride, int pad, std::int64_t ho, std::int64_t wo, Tensor<Scalar>& dx) {
  const Shape& s = dx.shape();
  for (std::int64_t c = 0; c < cin; ++c) {
    Scalar* dst = dx.plane(n, c0 + c);
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        const Scalar* row = col.data() + ((c * k + ky) * k + kx) * ho * wo;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= s.h) continue;
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < s.w) dst[iy * s.w + ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Grouped 2-D cross-correlation (no kernel flip). groups == 1 is a standard
/// convolution, groups == C_in with C_out == C_in is depthwise.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& x, const ConvParams<Scalar>& p) {
  detail::check_conv(x.shape(), p);
  const Shape& s = x.shape();
  const std::int64_t k = p.kernel_size();
  const std::int64_t cout = p.out_channels();
  const std::int64_t cin_g = p.kernel.shape().c;
  const std::int64_t cout_g = cout / p.groups;
  const std::int64_t ho = conv_out_extent(s.h, k, p.stride, p.padding);
  const std::int64_t wo = conv_out_extent(s.w, k, p.stride, p.padding);
  const std::int64_t kcols = cin_g * k * k;

  Tensor<Scalar> y(Shape{s.n, cout, ho, wo});
  detail::RowMatrix<Scalar> col;
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (int g = 0; g < p.groups; ++g) {
      ConstMatrixMap<Scalar> w(p.kernel.data() + g * cout_g * kcols, cout_g, kcols);
      MatrixMap<Scalar> out(y.plane(n, g * cout_g), cout_g, ho * wo);
      if (detail::is_plain_pointwise(p)) {
        out.noalias() = w * ConstMatrixMap<Scalar>(x.plane(n, g * cin_g), cin_g, ho * wo);
      } else {
        detail::im2col(x, n, g * cin_g, cin_g, k, p.stride, p.padding, ho, wo, col);
        out.noalias() = w * col;
      }
    }
    if (p.has_bias()) {
      for (std::int64_t c = 0; c < cout; ++c) {
        Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(y.plane(n, c), ho * wo) += p.bias[c];
      }
    }
  }
  return y;
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& dy, const Tensor<Scalar>& x, const ConvParams<Scalar>& p) {
  detail::check_conv(x.shape(), p);
  const Shape& s = x.shape();
  const std::int64_t k = p.kernel_size();
  const std::int64_t cout = p.out_channels();
  const std::int64_t cin_g = p.kernel.shape().c;
  const std::int64_t cout_g = cout / p.groups;
  const std::int64_t ho = conv_out_extent(s.h, k, p.stride, p.padding);
  const std::int64_t wo = conv_out_extent(s.w, k, p.stride, p.padding);
  const std::int64_t kcols = cin_g * k * k;
  if (dy.shape() != Shape{s.n, cout, ho, wo}) throw shape_mismatch("conv2d_backward upstream", dy.shape(), Shape{s.n, cout, ho, wo});

  ConvGrads<Scalar> g{Tensor<Scalar>(s), Tensor<Scalar>(p.kernel.shape()),
                      p.has_bias() ? Tensor<Scalar>(p.bias.shape()) : Tensor<Scalar>()};
  detail::RowMatrix<Scalar> col;
  detail::RowMatrix<Scalar> dcol;
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (int grp = 0; grp < p.groups; ++grp) {
      ConstMatrixMap<Scalar> w(p.kernel.data() + grp * cout_g * kcols, cout_g, kcols);
      MatrixMap<Scalar> dw(g.kernel.data() + grp * cout_g * kcols, cout_g, kcols);
      ConstMatrixMap<Scalar> dout(dy.plane(n, grp * cout_g), cout_g, ho * wo);
      if (detail::is_plain_pointwise(p)) {
        ConstMatrixMap<Scalar> xin(x.plane(n, grp * cin_g), cin_g, ho * wo);
        dw.noalias() += dout * xin.transpose();
        MatrixMap<Scalar>(g.input.plane(n, grp * cin_g), cin_g, ho * wo).noalias() += w.transpose() * dout;
      } else {
        detail::im2col(x, n, grp * cin_g, cin_g, k, p.stride, p.padding, ho, wo, col);
        dw.noalias() += dout * col.transpose();
        dcol.noalias() = w.transpose() * dout;
        detail::col2im_add(dcol, n, grp * cin_g, cin_g, k, p.stride, p.padding, ho, wo, g.input);
      }
    }
    if (p.has_bias()) {
      for (std::int64_t c = 0; c < cout; ++c) {
        g.bias[c] += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(dy.plane(n, c), ho * wo).sum();
      }
    }
  }
  return g;
}

//------------------------------------------------------------------------------
// Batch normalization
//------------------------------------------------------------------------------

template <typename Scalar>
struct BatchNormParams {
  Tensor<Scalar> gamma;  // 1 x C x 1 x 1
  Tensor<Scalar> beta;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar epsilon = Scalar(1e-5);
  Scalar momentum = Scalar(0.1);

  static BatchNormParams identity(std::int64_t channels) {
    const Shape s{1, channels, 1, 1};
    return {Tensor<Scalar>::ones(s), Tensor<Scalar>::zeros(s), Tensor<Scalar>::zeros(s), Tensor<Scalar>::ones(s)};
  }
  std::int64_t channels() const { return gamma.shape().c; }
};

template <typename Scalar>
struct BatchNormCache {
  Tensor<Scalar> normalized;  // x_hat
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std;
  Mode mode = Mode::Eval;
};

template <typename Scalar>
struct BatchNormGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
};

/// y = gamma * (x - mu) / sqrt(var + eps) + beta. Train mode normalizes with the
/// biased batch variance over (N, H, W) and folds the unbiased variance into the
/// running estimate.
template <typename Scalar>
Tensor<Scalar> batchnorm_forward(const Tensor<Scalar>& x, BatchNormParams<Scalar>& p, Mode mode,
                                 BatchNormCache<Scalar>* cache = nullptr) {
  const Shape& s = x.shape();
  if (s.c != p.channels()) throw shape_mismatch("batchnorm channels", s, p.gamma.shape());
  const std::int64_t hw = s.plane();
  const std::int64_t count = s.n * hw;
  if (mode == Mode::Train && count == 0) throw ShapeError("batchnorm: empty batch in train mode");

  Eigen::Array<Scalar, Eigen::Dynamic, 1> mean(s.c);
  Eigen::Array<Scalar, Eigen::Dynamic, 1> var(s.c);
  for (std::int64_t c = 0; c < s.c; ++c) {
    if (mode == Mode::Eval) {
      mean[c] = p.running_mean[c];
      var[c] = p.running_var[c];
      continue;
    }
    Scalar sum = 0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      sum += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(x.plane(n, c), hw).sum();
    }
    const Scalar mu = sum / Scalar(count);
    Scalar sq = 0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      sq += (Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(x.plane(n, c), hw) - mu).square().sum();
    }
    mean[c] = mu;
    var[c] = sq / Scalar(count);
    const Scalar unbiased = count > 1 ? sq / Scalar(count - 1) : var[c];
    p.running_mean[c] = (Scalar(1) - p.momentum) * p.running_mean[c] + p.momentum * mu;
    p.running_var[c] = (Scalar(1) - p.momentum) * p.running_var[c] + p.momentum * unbiased;
  }
  const Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std = (var + p.epsilon).rsqrt();

  Tensor<Scalar> xhat(s);
  Tensor<Scalar> y(s);
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> src(x.plane(n, c), hw);
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> xh(xhat.plane(n, c), hw);
      xh = (src - mean[c]) * inv_std[c];
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(y.plane(n, c), hw) = xh * p.gamma[c] + p.beta[c];
    }
  }
  if (cache) *cache = {std::move(xhat), inv_std, mode};
  return y;
}

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const Tensor<Scalar>& dy, const BatchNormParams<Scalar>& p,
                                          const BatchNormCache<Scalar>& cache) {
  const Shape& s = dy.shape();
  if (cache.normalized.shape() != s) throw shape_mismatch("batchnorm_backward cached state", cache.normalized.shape(), s);
  const std::int64_t hw = s.plane();
  const Scalar count = Scalar(s.n * hw);
  BatchNormGrads<Scalar> g{Tensor<Scalar>(s), Tensor<Scalar>(p.gamma.shape()), Tensor<Scalar>(p.beta.shape())};
  for (std::int64_t c = 0; c < s.c; ++c) {
    Scalar sum_dy = 0;
    Scalar sum_dy_xhat = 0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> d(dy.plane(n, c), hw);
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> xh(cache.normalized.plane(n, c), hw);
      sum_dy += d.sum();
      sum_dy_xhat += (d * xh).sum();
    }
    g.gamma[c] = sum_dy_xhat;
    g.beta[c] = sum_dy;
    const Scalar k = p.gamma[c] * cache.inv_std[c];
    for (std::int64_t n = 0; n < s.n; ++n) {
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> d(dy.plane(n, c), hw);
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> xh(cache.normalized.plane(n, c), hw);
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> dx(g.input.plane(n, c), hw);
      if (cache.mode == Mode::Eval) {
        dx = d * k;
      } else {
        dx = (k / count) * (count * d - sum_dy - xh * sum_dy_xhat);
      }
    }
  }
  return g;
}

//------------------------------------------------------------------------------
// Activations
//------------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), x.array().max(Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& dy, const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), (x.array() > Scalar(0)).select(dy.array(), Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> elu(const Tensor<Scalar>& x, Scalar alpha = Scalar(1)) {
  return Tensor<Scalar>(x.shape(), (x.array() > Scalar(0)).select(x.array(), alpha * x.array().expm1()));
}

template <typename Scalar>
Tensor<Scalar> elu_backward(const Tensor<Scalar>& dy, const Tensor<Scalar>& x, Scalar alpha = Scalar(1)) {
  return Tensor<Scalar>(x.shape(),
                        (x.array() > Scalar(0)).select(dy.array(), dy.array() * alpha * x.array().exp()));
}

template <typename Scalar>
Scalar sigmoid(Scalar v) {
  if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
  const Scalar e = std::exp(v);
  return e / (Scalar(1) + e);
}

/// Saturates to exactly 0 or 1 once |x| exceeds the scalar's precision.
template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), x.array().unaryExpr([](Scalar v) { return sigmoid(v); }));
}

/// Takes the sigmoid output, not its input.
template <typename Scalar>
Tensor<Scalar> sigmoid_backward(const Tensor<Scalar>& dy, const Tensor<Scalar>& y) {
  return Tensor<Scalar>(y.shape(), dy.array() * y.array() * (Scalar(1) - y.array()));
}

template <typename Scalar>
Tensor<Scalar> activate(const Tensor<Scalar>& x, Activation a, Scalar elu_alpha = Scalar(1)) {
  switch (a) {
    case Activation::Relu: return relu(x);
    case Activation::Elu: return elu(x, elu_alpha);
    case Activation::Identity: break;
  }
  return x;
}

template <typename Scalar>
Tensor<Scalar> activate_backward(const Tensor<Scalar>& dy, const Tensor<Scalar>& x, Activation a,
                                 Scalar elu_alpha = Scalar(1)) {
  switch (a) {
    case Activation::Relu: return relu_backward(dy, x);
    case Activation::Elu: return elu_backward(dy, x, elu_alpha);
    case Activation::Identity: break;
  }
  return dy;
}

//------------------------------------------------------------------------------
// Pooling and upsampling
//------------------------------------------------------------------------------

template <typename Scalar>
struct PoolResult {
  Tensor<Scalar> output;
  std::vector<std::int64_t> argmax;  // flat input index per output element
};

/// 2x2 window, stride 2. Ties keep the first position in row-major window order.
template <typename Scalar>
PoolResult<Scalar> maxpool2d(const Tensor<Scalar>& x) {
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("maxpool2d: spatial dims not divisible by 2 in " + s.str());
  PoolResult<Scalar> r{Tensor<Scalar>(Shape{s.n, s.c, s.h / 2, s.w / 2}), {}};
  r.argmax.resize(static_cast<std::size_t>(r.output.size()));
  std::int64_t o = 0;
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      for (std::int64_t y = 0; y < s.h / 2; ++y) {
        for (std::int64_t xo = 0; xo < s.w / 2; ++xo, ++o) {
          std::int64_t best = x.index(n, c, 2 * y, 2 * xo);
          for (std::int64_t dy = 0; dy < 2; ++dy) {
            for (std::int64_t dx = 0; dx < 2; ++dx) {
              const std::int64_t i = x.index(n, c, 2 * y + dy, 2 * xo + dx);
              if (x[i] > x[best]) best = i;
            }
          }
          r.output[o] = x[best];
          r.argmax[static_cast<std::size_t>(o)] = best;
        }
      }
    }
  }
  return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool2d_backward(const Tensor<Scalar>& dy, const std::vector<std::int64_t>& argmax,
                                  const Shape& input_shape) {
  if (static_cast<std::int64_t>(argmax.size()) != dy.size()) {
    throw ShapeError("maxpool2d_backward: missing or stale argmax state");
  }
  Tensor<Scalar> dx(input_shape);
  for (std::int64_t o = 0; o < dy.size(); ++o) dx[argmax[static_cast<std::size_t>(o)]] += dy[o];
  return dx;
}

template <typename Scalar>
Tensor<Scalar> upsample_nearest(const Tensor<Scalar>& x) {
  const Shape& s = x.shape();
  Tensor<Scalar> y(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t h = 0; h < 2 * s.h; ++h)
        for (std::int64_t w = 0; w < 2 * s.w; ++w) y(n, c, h, w) = x(n, c, h / 2, w / 2);
  return y;
}

template <typename Scalar>
Tensor<Scalar> upsample_nearest_backward(const Tensor<Scalar>& dy) {
  const Shape& s = dy.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("upsample_nearest_backward: odd extent in " + s.str());
  Tensor<Scalar> dx(Shape{s.n, s.c, s.h / 2, s.w / 2});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t h = 0; h < s.h; ++h)
        for (std::int64_t w = 0; w < s.w; ++w) dx(n, c, h / 2, w / 2) += dy(n, c, h, w);
  return dx;
}

//------------------------------------------------------------------------------
// Fully connected
//------------------------------------------------------------------------------

template <typename Scalar>
struct LinearParams {
  Tensor<Scalar> weight;  // (out, in, 1, 1), read as an out x in matrix
  Tensor<Scalar> bias;    // empty, or 1 x out x 1 x 1

  std::int64_t out_features() const { return weight.shape().n; }
  std::int64_t in_features() const { return weight.shape().c; }
};

template <typename Scalar>
struct LinearGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;
};

/// x is a batch of vectors, N x in x 1 x 1.
template <typename Scalar>
Tensor<Scalar> linear_forward(const Tensor<Scalar>& x, const LinearParams<Scalar>& p) {
  const Shape& s = x.shape();
  if (s.h != 1 || s.w != 1 || s.c != p.in_features()) throw shape_mismatch("linear_forward", s, p.weight.shape());
  Tensor<Scalar> y(Shape{s.n, p.out_features(), 1, 1});
  ConstMatrixMap<Scalar> w(p.weight.data(), p.out_features(), p.in_features());
  MatrixMap<Scalar> out(y.data(), s.n, p.out_features());
  out.noalias() = ConstMatrixMap<Scalar>(x.data(), s.n, s.c) * w.transpose();
  if (!p.bias.empty()) {
    out.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(p.bias.data(), p.out_features());
  }
  return y;
}

template <typename Scalar>
LinearGrads<Scalar> linear_backward(const Tensor<Scalar>& dy, const Tensor<Scalar>& x, const LinearParams<Scalar>& p) {
  const Shape expected{x.shape().n, p.out_features(), 1, 1};
  if (dy.shape() != expected) throw shape_mismatch("linear_backward upstream", dy.shape(), expected);
  LinearGrads<Scalar> g{Tensor<Scalar>(x.shape()), Tensor<Scalar>(p.weight.shape()),
                        p.bias.empty() ? Tensor<Scalar>() : Tensor<Scalar>(p.bias.shape())};
  ConstMatrixMap<Scalar> w(p.weight.data(), p.out_features(), p.in_features());
  ConstMatrixMap<Scalar> d(dy.data(), x.shape().n, p.out_features());
  MatrixMap<Scalar>(g.input.data(), x.shape().n, p.in_features()).noalias() = d * w;
  MatrixMap<Scalar>(g.weight.data(), p.out_features(), p.in_features()).noalias() =
      d.transpose() * ConstMatrixMap<Scalar>(x.data(), x.shape().n, p.in_features());
  if (!p.bias.empty()) MatrixMap<Scalar>(g.bias.data(), 1, p.out_features()) = d.colwise().sum();
  return g;
}

//------------------------------------------------------------------------------
// Depthwise-separable convolution
//------------------------------------------------------------------------------

/// Depthwise conv, then optional batch norm and activation, then 1x1 pointwise conv.
/// `norm` may be null, in which case only `between` is applied.
template <typename Scalar>
Tensor<Scalar> depthwise_separable_forward(const Tensor<Scalar>& x, const ConvParams<Scalar>& depthwise,
                                           const ConvParams<Scalar>& pointwise, std::type_identity_t<BatchNormParams<Scalar>>* norm,
                                           Activation between, Mode mode = Mode::Eval) {
  const std::int64_t cin = x.shape().c;
  if (depthwise.groups != cin || depthwise.out_channels() != cin || depthwise.kernel.shape().c != 1) {
    throw ShapeError("depthwise stage must have groups == C_in == C_out, kernel " + depthwise.kernel.shape().str());
  }
  if (pointwise.kernel_size() != 1 || pointwise.groups != 1) {
    throw ShapeError("pointwise stage must be 1x1 with groups 1, kernel " + pointwise.kernel.shape().str());
  }
  Tensor<Scalar> t = conv2d_forward(x, depthwise);
  if (norm) t = batchnorm_forward(t, *norm, mode);
  return conv2d_forward(activate(t, between), pointwise);
}

//------------------------------------------------------------------------------
// Initialization
//------------------------------------------------------------------------------

/// Gaussian with std sqrt(2 / fan_in).
template <typename Scalar, typename Rng>
void he_normal(Tensor<Scalar>& t, std::int64_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
}

}  // namespace lap
