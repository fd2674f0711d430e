#pragma once

// Minimal dense-prediction building blocks with explicit backward passes.
// Convolutions lower to one GEMM per call through im2col.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <new>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gazehta/core.hpp"
#include "gazehta/rng.hpp"

namespace gazehta::nn {

/// Storage mapped by Eigen is 64-byte aligned: vectorized reductions split
/// their loops at aligned addresses, and results must not depend on where
/// the heap placed a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

/// Channel-major (c, y, x) feature map.
template <class T>
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  Buffer<T> v;

  Tensor() = default;
  Tensor(int channels, int height, int width, T fill = T(0))
      : c(channels), h(height), w(width), v(static_cast<std::size_t>(channels) * height * width, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t size() const { return v.size(); }
  T* channel(int k) { return v.data() + k * plane(); }
  const T* channel(int k) const { return v.data() + k * plane(); }
  void zero() { std::fill(v.begin(), v.end(), T(0)); }
  void resize(int channels, int height, int width) {
    c = channels;
    h = height;
    w = width;
    v.assign(static_cast<std::size_t>(channels) * height * width, T(0));
  }
};

enum class ParamInit { fan_in_normal, zeros, ones };

struct ParamInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  int fan_in = 0;
  ParamInit init = ParamInit::fan_in_normal;
};

/// All learnable parameters in one flat buffer; gradients and optimizer
/// state use the same layout.
template <class T>
struct ParamSet {
  std::vector<ParamInfo> infos;
  Buffer<T> values;

  int add(std::string name, std::vector<int> shape, int fan_in, ParamInit init) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    infos.push_back({std::move(name), std::move(shape), values.size(), n, fan_in, init});
    values.resize(values.size() + n, T(0));
    return static_cast<int>(infos.size()) - 1;
  }

  T* data(int idx) { return values.data() + infos[idx].offset; }
  const T* data(int idx) const { return values.data() + infos[idx].offset; }
  std::size_t count() const { return values.size(); }
};

struct ConvLayer {
  int cin = 0;
  int cout = 0;
  int k = 3;
  int stride = 1;
  int pad = 1;
  int weight = -1;
  int bias = -1;

  int out_size(int in) const { return (in + 2 * pad - k) / stride + 1; }
  int fan_in() const { return cin * k * k; }
};

template <class T>
ConvLayer make_conv(ParamSet<T>& ps, const std::string& name, int cin, int cout, int k, int stride) {
  ConvLayer L;
  L.cin = cin;
  L.cout = cout;
  L.k = k;
  L.stride = stride;
  L.pad = k / 2;
  L.weight = ps.add(name + ".weight", {cout, cin, k, k}, cin * k * k, ParamInit::fan_in_normal);
  L.bias = ps.add(name + ".bias", {cout}, cin * k * k, ParamInit::zeros);
  return L;
}

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

namespace detail {

template <class T>
void im2col(const Tensor<T>& in, const ConvLayer& L, int ho, int wo, Buffer<T>& cols) {
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  cols.assign(static_cast<std::size_t>(L.cin) * L.k * L.k * hw, T(0));
  for (int c = 0; c < L.cin; ++c) {
    const T* src = in.channel(c);
    for (int ky = 0; ky < L.k; ++ky)
      for (int kx = 0; kx < L.k; ++kx) {
        T* dst = cols.data() + ((static_cast<std::size_t>(c) * L.k + ky) * L.k + kx) * hw;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * L.stride - L.pad + ky;
          if (iy < 0 || iy >= in.h) continue;
          const T* srow = src + static_cast<std::size_t>(iy) * in.w;
          T* drow = dst + static_cast<std::size_t>(oy) * wo;
          if (L.stride == 1) {
            const int lo = std::max(0, L.pad - kx);
            const int hi = std::min(wo, in.w + L.pad - kx);
            for (int ox = lo; ox < hi; ++ox) drow[ox] = srow[ox - L.pad + kx];
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * L.stride - L.pad + kx;
              if (ix >= 0 && ix < in.w) drow[ox] = srow[ix];
            }
          }
        }
      }
  }
}

template <class T>
void col2im_add(const Buffer<T>& cols, const ConvLayer& L, int ho, int wo, Tensor<T>& din) {
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < L.cin; ++c) {
    T* dst = din.channel(c);
    for (int ky = 0; ky < L.k; ++ky)
      for (int kx = 0; kx < L.k; ++kx) {
        const T* src = cols.data() + ((static_cast<std::size_t>(c) * L.k + ky) * L.k + kx) * hw;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * L.stride - L.pad + ky;
          if (iy < 0 || iy >= din.h) continue;
          T* drow = dst + static_cast<std::size_t>(iy) * din.w;
          const T* srow = src + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * L.stride - L.pad + kx;
            if (ix >= 0 && ix < din.w) drow[ix] += srow[ox];
          }
        }
      }
  }
}

}  // namespace detail

/// Reusable im2col buffers.
template <class T>
struct Scratch {
  Buffer<T> cols;
  Buffer<T> dcols;
};

template <class T>
void conv_forward(const Tensor<T>& in, const ConvLayer& L, const ParamSet<T>& ps, Tensor<T>& out,
                  Scratch<T>& scratch) {
  if (in.c != L.cin) throw InvalidArgument("conv input channel mismatch");
  const int ho = L.out_size(in.h), wo = L.out_size(in.w);
  out.resize(L.cout, ho, wo);
  const Eigen::Index hw = static_cast<Eigen::Index>(ho) * wo;
  const Eigen::Index K = L.fan_in();
  Eigen::Map<const MatR<T>> W(ps.data(L.weight), L.cout, K);
  Eigen::Map<const VecX<T>> b(ps.data(L.bias), L.cout);
  Eigen::Map<MatR<T>> O(out.v.data(), L.cout, hw);
  if (L.k == 1 && L.stride == 1) {
    Eigen::Map<const MatR<T>> X(in.v.data(), L.cin, hw);
    O.noalias() = W * X;
  } else {
    detail::im2col(in, L, ho, wo, scratch.cols);
    Eigen::Map<const MatR<T>> C(scratch.cols.data(), K, hw);
    O.noalias() = W * C;
  }
  O.colwise() += b;
}

/// Accumulates weight/bias gradients into `grads` (same layout as the
/// parameter buffer) and, when `din` is non-null, the input gradient into
/// *din (which must already be sized like `in`).
template <class T>
void conv_backward(const Tensor<T>& in, const Tensor<T>& dout, const ConvLayer& L, const ParamSet<T>& ps,
                   Buffer<T>& grads, Tensor<T>* din, Scratch<T>& scratch) {
  const int ho = dout.h, wo = dout.w;
  const Eigen::Index hw = static_cast<Eigen::Index>(ho) * wo;
  const Eigen::Index K = L.fan_in();
  Eigen::Map<const MatR<T>> W(ps.data(L.weight), L.cout, K);
  Eigen::Map<MatR<T>> dW(grads.data() + ps.infos[L.weight].offset, L.cout, K);
  Eigen::Map<VecX<T>> db(grads.data() + ps.infos[L.bias].offset, L.cout);
  Eigen::Map<const MatR<T>> dO(dout.v.data(), L.cout, hw);
  db += dO.rowwise().sum();
  if (L.k == 1 && L.stride == 1) {
    Eigen::Map<const MatR<T>> X(in.v.data(), L.cin, hw);
    dW.noalias() += dO * X.transpose();
    if (din) {
      Eigen::Map<MatR<T>> dX(din->v.data(), L.cin, hw);
      dX.noalias() += W.transpose() * dO;
    }
    return;
  }
  detail::im2col(in, L, ho, wo, scratch.cols);
  Eigen::Map<const MatR<T>> C(scratch.cols.data(), K, hw);
  dW.noalias() += dO * C.transpose();
  if (din) {
    scratch.dcols.resize(static_cast<std::size_t>(K * hw));
    Eigen::Map<MatR<T>> dC(scratch.dcols.data(), K, hw);
    dC.noalias() = W.transpose() * dO;
    detail::col2im_add(scratch.dcols, L, ho, wo, *din);
  }
}

/// Group normalization with a per-channel affine transform. The group
/// count is gcd(channels, max_groups).
struct NormLayer {
  int channels = 0;
  int groups = 1;
  int gamma = -1;
  int beta = -1;
};

template <class T>
NormLayer make_norm(ParamSet<T>& ps, const std::string& name, int channels, int max_groups) {
  NormLayer L;
  L.channels = channels;
  L.groups = std::gcd(channels, std::max(1, max_groups));
  L.gamma = ps.add(name + ".gamma", {channels}, 1, ParamInit::ones);
  L.beta = ps.add(name + ".beta", {channels}, 1, ParamInit::zeros);
  return L;
}

inline constexpr double kNormEps = 1e-5;

template <class T>
struct NormStats {
  std::vector<T> mean;
  std::vector<T> inv_std;
};

template <class T>
void group_norm_forward(const Tensor<T>& z, const NormLayer& L, const ParamSet<T>& ps, Tensor<T>& out,
                        NormStats<T>& stats) {
  if (z.c != L.channels) throw InvalidArgument("norm channel mismatch");
  out.resize(z.c, z.h, z.w);
  const int cg = L.channels / L.groups;
  const std::size_t hw = z.plane(), count = hw * cg;
  stats.mean.assign(L.groups, T(0));
  stats.inv_std.assign(L.groups, T(0));
  const T* gamma = ps.data(L.gamma);
  const T* beta = ps.data(L.beta);
  for (int g = 0; g < L.groups; ++g) {
    const T* src = z.channel(g * cg);
    double sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) sum += static_cast<double>(src[i]);
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double d = static_cast<double>(src[i]) - mean;
      sq += d * d;
    }
    const double inv = 1.0 / std::sqrt(sq / static_cast<double>(count) + kNormEps);
    stats.mean[g] = static_cast<T>(mean);
    stats.inv_std[g] = static_cast<T>(inv);
    for (int c = g * cg; c < (g + 1) * cg; ++c) {
      const T* zc = z.channel(c);
      T* oc = out.channel(c);
      const T scale = gamma[c] * static_cast<T>(inv);
      const T shift = beta[c] - static_cast<T>(mean) * scale;
      for (std::size_t p = 0; p < hw; ++p) oc[p] = zc[p] * scale + shift;
    }
  }
}

/// Writes the input gradient into *dz (resized) and accumulates gamma/beta
/// gradients into `grads`.
template <class T>
void group_norm_backward(const Tensor<T>& z, const Tensor<T>& dout, const NormLayer& L, const ParamSet<T>& ps,
                         const NormStats<T>& stats, Buffer<T>& grads, Tensor<T>& dz) {
  dz.resize(z.c, z.h, z.w);
  const int cg = L.channels / L.groups;
  const std::size_t hw = z.plane();
  const double count = static_cast<double>(hw * cg);
  const T* gamma = ps.data(L.gamma);
  T* dgamma = grads.data() + ps.infos[L.gamma].offset;
  T* dbeta = grads.data() + ps.infos[L.beta].offset;
  for (int g = 0; g < L.groups; ++g) {
    const double mean = static_cast<double>(stats.mean[g]);
    const double inv = static_cast<double>(stats.inv_std[g]);
    double sum_dx = 0.0, sum_dx_xhat = 0.0;
    for (int c = g * cg; c < (g + 1) * cg; ++c) {
      const T* zc = z.channel(c);
      const T* dc = dout.channel(c);
      double dg = 0.0, db = 0.0;
      for (std::size_t p = 0; p < hw; ++p) {
        const double xhat = (static_cast<double>(zc[p]) - mean) * inv;
        const double d = static_cast<double>(dc[p]);
        dg += d * xhat;
        db += d;
      }
      dgamma[c] += static_cast<T>(dg);
      dbeta[c] += static_cast<T>(db);
      sum_dx += db * static_cast<double>(gamma[c]);
      sum_dx_xhat += dg * static_cast<double>(gamma[c]);
    }
    for (int c = g * cg; c < (g + 1) * cg; ++c) {
      const T* zc = z.channel(c);
      const T* dc = dout.channel(c);
      T* out = dz.channel(c);
      const double gc = static_cast<double>(gamma[c]);
      for (std::size_t p = 0; p < hw; ++p) {
        const double xhat = (static_cast<double>(zc[p]) - mean) * inv;
        out[p] = static_cast<T>(inv / count *
                                (count * static_cast<double>(dc[p]) * gc - sum_dx - xhat * sum_dx_xhat));
      }
    }
  }
}

template <class T>
T sigmoid_t(T z);

/// x * sigmoid(x).
template <class T>
void silu(const Tensor<T>& in, Tensor<T>& out) {
  out.resize(in.c, in.h, in.w);
  for (std::size_t i = 0; i < in.v.size(); ++i) out.v[i] = in.v[i] * sigmoid_t(in.v[i]);
}

/// grad *= silu'(pre), for the pre-activation `pre`.
template <class T>
void silu_backward(const Tensor<T>& pre, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.v.size(); ++i) {
    const T x = pre.v[i];
    const T s = sigmoid_t(x);
    grad.v[i] *= s * (T(1) + x * (T(1) - s));
  }
}

template <class T>
T sigmoid_t(T z) {
  return z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
}

template <class T>
void upsample2x(const Tensor<T>& in, Tensor<T>& out) {
  out.resize(in.c, in.h * 2, in.w * 2);
  for (int c = 0; c < in.c; ++c) {
    const T* s = in.channel(c);
    T* d = out.channel(c);
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) d[static_cast<std::size_t>(y) * out.w + x] = s[(y / 2) * in.w + x / 2];
  }
}

template <class T>
void upsample2x_backward(const Tensor<T>& dout, Tensor<T>& din) {
  din.resize(dout.c, dout.h / 2, dout.w / 2);
  for (int c = 0; c < dout.c; ++c) {
    const T* s = dout.channel(c);
    T* d = din.channel(c);
    for (int y = 0; y < dout.h; ++y)
      for (int x = 0; x < dout.w; ++x) d[(y / 2) * din.w + x / 2] += s[static_cast<std::size_t>(y) * dout.w + x];
  }
}

template <class T>
void avgpool(const Tensor<T>& in, int f, Tensor<T>& out) {
  out.resize(in.c, in.h / f, in.w / f);
  const T scale = T(1) / static_cast<T>(f * f);
  for (int c = 0; c < in.c; ++c)
    for (int y = 0; y < in.h; ++y)
      for (int x = 0; x < in.w; ++x)
        out.channel(c)[(y / f) * out.w + x / f] += in.channel(c)[static_cast<std::size_t>(y) * in.w + x] * scale;
}

template <class T>
void avgpool_backward(const Tensor<T>& dout, int f, Tensor<T>& din) {
  const T scale = T(1) / static_cast<T>(f * f);
  for (int c = 0; c < din.c; ++c)
    for (int y = 0; y < din.h; ++y)
      for (int x = 0; x < din.w; ++x)
        din.channel(c)[static_cast<std::size_t>(y) * din.w + x] = dout.channel(c)[(y / f) * dout.w + x / f] * scale;
}

/// He-normal weights (std = sqrt(2 / fan_in)) for convolutions, LeCun-normal
/// for fully connected layers, zero biases and shifts, unit norm scales.
template <class T>
void init_params(ParamSet<T>& ps, Rng& rng, const std::vector<bool>& is_linear) {
  for (std::size_t p = 0; p < ps.infos.size(); ++p) {
    const ParamInfo& info = ps.infos[p];
    T* d = ps.values.data() + info.offset;
    if (info.init != ParamInit::fan_in_normal) {
      std::fill(d, d + info.size, info.init == ParamInit::ones ? T(1) : T(0));
      continue;
    }
    const double gain = is_linear[p] ? 1.0 : 2.0;
    const double std = std::sqrt(gain / info.fan_in);
    for (std::size_t i = 0; i < info.size; ++i) d[i] = static_cast<T>(rng.normal() * std);
  }
}

}  // namespace gazehta::nn
