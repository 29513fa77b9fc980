// Copyright (c) the evtpr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Forward-only building blocks of the windowed-attention feature extractors.
// Everything is templated on the scalar type; the pipeline runs in float and
// the tests re-run the same kernels in double where useful.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "evtpr/errors.hpp"
#include "evtpr/tensor.hpp"

namespace evtpr {

enum class Activation { kNone, kRelu, kGelu };

template <typename Scalar>
void apply_activation(Eigen::Ref<RowMatrix<Scalar>> x, Activation act) {
  switch (act) {
    case Activation::kNone:
      break;
    case Activation::kRelu:
      x = x.cwiseMax(Scalar(0));
      break;
    case Activation::kGelu:
      x = x.unaryExpr([](Scalar v) {
        return Scalar(0.5) * v * (Scalar(1) + std::erf(v / std::sqrt(Scalar(2))));
      });
      break;
  }
}

/// y = x W^T + b with W stored out x in.
template <typename Scalar>
struct Linear {
  RowMatrix<Scalar> weight;
  Vector<Scalar> bias;

  Index in_features() const { return weight.cols(); }
  Index out_features() const { return weight.rows(); }

  RowMatrix<Scalar> operator()(const Eigen::Ref<const RowMatrix<Scalar>>& x) const {
    detail::require(x.cols() == weight.cols(), "linear layer input width mismatch");
    RowMatrix<Scalar> y = x * weight.transpose();
    y.rowwise() += bias.transpose();
    return y;
  }
};

/// Chain of linear layers, each followed by its own activation.
template <typename Scalar>
struct Mlp {
  std::vector<Linear<Scalar>> layers;
  std::vector<Activation> activations;

  RowMatrix<Scalar> operator()(const Eigen::Ref<const RowMatrix<Scalar>>& x) const {
    detail::require(layers.size() == activations.size(), "one activation per MLP layer");
    RowMatrix<Scalar> h = x;
    for (size_t i = 0; i < layers.size(); ++i) {
      h = layers[i](h);
      apply_activation<Scalar>(h, activations[i]);
    }
    return h;
  }
};

// ---------------------------------------------------------------------------
// Window geometry

/// L x C x H x W  ->  (L * H/M * W/M) x (M * M) x C.
///
/// Windows are ordered (level, window row, window column); tokens inside a
/// window are in raster order.
template <typename Scalar>
BasicTensor<Scalar> window_partition(const BasicTensor<Scalar>& x, Index m) {
  detail::require(x.ndim() == 4, "window_partition expects L x C x H x W");
  const Index levels = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  detail::require(m > 0 && height % m == 0 && width % m == 0,
                  "window size must divide height and width");
  const Index nh = height / m, nw = width / m;
  BasicTensor<Scalar> out({levels * nh * nw, m * m, channels});
  Scalar* dst = out.data();
  for (Index l = 0; l < levels; ++l)
    for (Index wy = 0; wy < nh; ++wy)
      for (Index wx = 0; wx < nw; ++wx)
        for (Index iy = 0; iy < m; ++iy)
          for (Index ix = 0; ix < m; ++ix)
            for (Index c = 0; c < channels; ++c) *dst++ = x(l, c, wy * m + iy, wx * m + ix);
  return out;
}

/// Inverse of window_partition.
template <typename Scalar>
BasicTensor<Scalar> window_unpartition(const BasicTensor<Scalar>& windows, Index levels,
                                       Index height, Index width, Index m) {
  detail::require(windows.ndim() == 3 && windows.dim(1) == m * m,
                  "window_unpartition expects windows x (M*M) x C");
  detail::require(m > 0 && height % m == 0 && width % m == 0,
                  "window size must divide height and width");
  const Index channels = windows.dim(2);
  const Index nh = height / m, nw = width / m;
  detail::require(windows.dim(0) == levels * nh * nw, "window count does not match geometry");
  BasicTensor<Scalar> out({levels, channels, height, width});
  const Scalar* src = windows.data();
  for (Index l = 0; l < levels; ++l)
    for (Index wy = 0; wy < nh; ++wy)
      for (Index wx = 0; wx < nw; ++wx)
        for (Index iy = 0; iy < m; ++iy)
          for (Index ix = 0; ix < m; ++ix)
            for (Index c = 0; c < channels; ++c) out(l, c, wy * m + iy, wx * m + ix) = *src++;
  return out;
}

/// Circular roll of the two trailing axes: out(i, j) = x((i + offset) mod H,
/// (j + offset) mod W). cyclic_shift(cyclic_shift(x, k), -k) == x.
template <typename Scalar>
BasicTensor<Scalar> cyclic_shift(const BasicTensor<Scalar>& x, Index offset) {
  detail::require(x.ndim() >= 2, "cyclic_shift needs spatial axes");
  const Index height = x.dim(x.ndim() - 2), width = x.dim(x.ndim() - 1);
  const Index planes = x.size() / (height * width);
  BasicTensor<Scalar> out(x.shape());
  const Index oy = ((offset % height) + height) % height;
  const Index ox = ((offset % width) + width) % width;
  for (Index p = 0; p < planes; ++p) {
    auto src = x.slice(p, height, width);
    auto dst = out.slice(p, height, width);
    for (Index i = 0; i < height; ++i)
      for (Index j = 0; j < width; ++j) dst(i, j) = src((i + oy) % height, (j + ox) % width);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization and attention

/// Per-row normalization (x - mean) / sqrt(var + eps), then gamma * . + beta.
/// Rows with zero variance normalize to 0.
template <typename Scalar>
RowMatrix<Scalar> layer_norm(const Eigen::Ref<const RowMatrix<Scalar>>& x,
                             const Vector<Scalar>& gamma, const Vector<Scalar>& beta,
                             Scalar eps) {
  detail::require(eps > 0, "layer_norm eps must be positive");
  detail::require(gamma.size() == x.cols() && beta.size() == x.cols(),
                  "layer_norm affine parameters do not match the channel count");
  RowMatrix<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).mean();
    const Scalar var = (x.row(r).array() - mean).square().mean();
    if (var == Scalar(0)) {
      out.row(r).setZero();
    } else {
      out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + eps);
    }
  }
  out.array().rowwise() *= gamma.transpose().array();
  out.rowwise() += beta.transpose();
  return out;
}

template <typename Scalar>
struct AttentionParams {
  Index heads = 1;
  Linear<Scalar> query, key, value, output;

  Index channels() const { return query.in_features(); }
  Index head_dim() const { return channels() / heads; }
};

/// Running check of attention row normalization.
struct AttentionStats {
  double max_row_error = 0.0;  ///< max |sum(softmax row) - 1|
  Index rows_checked = 0;

  void merge(const AttentionStats& other) {
    max_row_error = std::max(max_row_error, other.max_row_error);
    rows_checked += other.rows_checked;
  }
};

/// Row-wise softmax with max subtraction.
template <typename Scalar>
void softmax_rows(Eigen::Ref<RowMatrix<Scalar>> scores) {
  for (Index r = 0; r < scores.rows(); ++r) {
    const Scalar peak = scores.row(r).maxCoeff();
    scores.row(r) = (scores.row(r).array() - peak).exp();
    scores.row(r) /= scores.row(r).sum();
  }
}

/// softmax(Q K^T / sqrt(d)) V per head, heads concatenated, then the output
/// projection. x is tokens x channels.
template <typename Scalar>
RowMatrix<Scalar> multi_head_self_attention(const Eigen::Ref<const RowMatrix<Scalar>>& x,
                                            const AttentionParams<Scalar>& params,
                                            AttentionStats* stats = nullptr) {
  const Index channels = params.channels();
  detail::require(x.rows() >= 1, "attention needs at least one token");
  detail::require(x.cols() == channels, "attention input width mismatch");
  detail::require(params.heads >= 1 && channels % params.heads == 0,
                  "heads must divide the channel count");
  const Index d = params.head_dim();
  const RowMatrix<Scalar> q = params.query(x);
  const RowMatrix<Scalar> k = params.key(x);
  const RowMatrix<Scalar> v = params.value(x);
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(d));

  RowMatrix<Scalar> heads_out(x.rows(), channels);
  for (Index h = 0; h < params.heads; ++h) {
    RowMatrix<Scalar> scores = q.middleCols(h * d, d) * k.middleCols(h * d, d).transpose() * scale;
    softmax_rows<Scalar>(scores);
    if (stats) {
      for (Index r = 0; r < scores.rows(); ++r) {
        const double err = std::abs(static_cast<double>(scores.row(r).sum()) - 1.0);
        stats->max_row_error = std::max(stats->max_row_error, err);
      }
      stats->rows_checked += scores.rows();
    }
    heads_out.middleCols(h * d, d) = scores * v.middleCols(h * d, d);
  }
  RowMatrix<Scalar> out = params.output(heads_out);
  if (!out.allFinite()) throw NumericError("non-finite value in self-attention");
  return out;
}

// ---------------------------------------------------------------------------
// Swin transformer encoder block

template <typename Scalar>
struct StebParams {
  Vector<Scalar> norm1_gamma, norm1_beta;
  AttentionParams<Scalar> attention;
  Vector<Scalar> norm2_gamma, norm2_beta;
  Linear<Scalar> fc1, fc2;  ///< GELU between
  Scalar eps = Scalar(1e-5);
};

/// Pre-norm transformer block on one window: x + MHSA(LN(x)), then
/// y + MLP(LN(y)).
template <typename Scalar>
RowMatrix<Scalar> steb_window(const Eigen::Ref<const RowMatrix<Scalar>>& tokens,
                              const StebParams<Scalar>& p, AttentionStats* stats = nullptr) {
  RowMatrix<Scalar> y =
      tokens + multi_head_self_attention<Scalar>(
                   layer_norm<Scalar>(tokens, p.norm1_gamma, p.norm1_beta, p.eps), p.attention, stats);
  RowMatrix<Scalar> hidden = p.fc1(layer_norm<Scalar>(y, p.norm2_gamma, p.norm2_beta, p.eps));
  apply_activation<Scalar>(hidden, Activation::kGelu);
  return y + p.fc2(hidden);
}

/// (shift) -> partition -> per-window block -> unpartition -> (unshift).
/// Shape in == shape out == L x C x H x W. Shifted windows use a plain cyclic
/// roll by M/2 without an attention mask.
template <typename Scalar>
BasicTensor<Scalar> steb_forward(const BasicTensor<Scalar>& x, const StebParams<Scalar>& p,
                                 Index m, bool shifted, AttentionStats* stats = nullptr) {
  detail::require(x.ndim() == 4, "steb_forward expects L x C x H x W");
  const Index levels = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  detail::require(m > 0 && height % m == 0 && width % m == 0,
                  "window size must divide height and width");
  const Index offset = shifted ? m / 2 : 0;
  BasicTensor<Scalar> windows = window_partition(offset ? cyclic_shift(x, offset) : x, m);
  const Index tokens = m * m;
  for (Index w = 0; w < windows.dim(0); ++w) {
    auto view = windows.slice(w, tokens, channels);
    view = steb_window<Scalar>(view, p, stats);
  }
  BasicTensor<Scalar> out = window_unpartition(windows, levels, height, width, m);
  return offset ? cyclic_shift(out, -offset) : out;
}

// ---------------------------------------------------------------------------
// Convolutions

/// 2-D convolution with weight stored out x (in * k * k) in (c, ky, kx)
/// order; zero padding.
template <typename Scalar>
struct Conv2d {
  Linear<Scalar> kernel;
  Index size = 1;
  Index stride = 1;
  Index padding = 0;

  Index in_channels() const { return kernel.in_features() / (size * size); }
  Index out_channels() const { return kernel.out_features(); }
};

/// Column matrix of k x k patches: (C * k * k) x (Ho * Wo).
template <typename Scalar>
RowMatrix<Scalar> im2col(const Eigen::Ref<const RowMatrix<Scalar>>& planes, Index channels,
                         Index height, Index width, Index k, Index stride, Index pad,
                         Index out_h, Index out_w) {
  RowMatrix<Scalar> cols = RowMatrix<Scalar>::Zero(channels * k * k, out_h * out_w);
  for (Index c = 0; c < channels; ++c)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (c * k + ky) * k + kx;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= height) continue;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= width) continue;
            cols(row, oy * out_w + ox) = planes(c, iy * width + ix);
          }
        }
      }
  return cols;
}

/// Applies conv to C x H x W, or to every item of B x C x H x W.
template <typename Scalar>
BasicTensor<Scalar> conv2d(const BasicTensor<Scalar>& x, const Conv2d<Scalar>& conv) {
  detail::require(x.ndim() == 3 || x.ndim() == 4, "conv2d expects C x H x W or B x C x H x W");
  const bool batched = x.ndim() == 4;
  const Index batch = batched ? x.dim(0) : 1;
  const Index channels = x.dim(x.ndim() - 3), height = x.dim(x.ndim() - 2),
              width = x.dim(x.ndim() - 1);
  detail::require(channels == conv.in_channels(), "conv2d input channel mismatch");
  const Index k = conv.size;
  const Index out_h = (height + 2 * conv.padding - k) / conv.stride + 1;
  const Index out_w = (width + 2 * conv.padding - k) / conv.stride + 1;
  detail::require(out_h >= 1 && out_w >= 1, "conv2d output would be empty");
  const Index out_c = conv.out_channels();
  Shape shape = batched ? Shape{batch, out_c, out_h, out_w} : Shape{out_c, out_h, out_w};
  BasicTensor<Scalar> out(shape);
  for (Index b = 0; b < batch; ++b) {
    auto planes = x.slice(b, channels, height * width);
    auto dst = out.slice(b, out_c, out_h * out_w);
    if (k == 1 && conv.stride == 1 && conv.padding == 0) {
      dst = conv.kernel.weight * planes;
    } else {
      dst = conv.kernel.weight *
            im2col<Scalar>(planes, channels, height, width, k, conv.stride, conv.padding, out_h,
                           out_w);
    }
    dst.colwise() += conv.kernel.bias;
  }
  return out;
}

/// Strided 2x2 convolution (stride 2): halves H and W, keeps channels.
template <typename Scalar>
BasicTensor<Scalar> downsample_half(const BasicTensor<Scalar>& x, const Conv2d<Scalar>& conv) {
  detail::require(x.ndim() >= 3, "downsample_half expects spatial input");
  detail::require(x.dim(x.ndim() - 2) % 2 == 0 && x.dim(x.ndim() - 1) % 2 == 0,
                  "downsample_half needs even height and width");
  detail::require(conv.size == 2 && conv.stride == 2 && conv.padding == 0,
                  "downsample_half uses a 2x2 stride-2 convolution");
  detail::require(conv.in_channels() == conv.out_channels(), "downsampling keeps channels");
  return conv2d(x, conv);
}

/// Nearest-neighbor x2 followed by a 3x3 convolution (padding 1).
template <typename Scalar>
BasicTensor<Scalar> upsample_double(const BasicTensor<Scalar>& x, const Conv2d<Scalar>& conv) {
  detail::require(x.ndim() >= 3, "upsample_double expects spatial input");
  detail::require(conv.size == 3 && conv.stride == 1 && conv.padding == 1,
                  "upsample_double uses a 3x3 convolution with padding 1");
  detail::require(conv.in_channels() == conv.out_channels(), "upsampling keeps channels");
  const Index height = x.dim(x.ndim() - 2), width = x.dim(x.ndim() - 1);
  Shape shape = x.shape();
  shape[shape.size() - 2] = 2 * height;
  shape[shape.size() - 1] = 2 * width;
  BasicTensor<Scalar> up(shape);
  const Index planes = x.size() / (height * width);
  for (Index p = 0; p < planes; ++p) {
    auto src = x.slice(p, height, width);
    auto dst = up.slice(p, 2 * height, 2 * width);
    for (Index i = 0; i < 2 * height; ++i)
      for (Index j = 0; j < 2 * width; ++j) dst(i, j) = src(i / 2, j / 2);
  }
  return conv2d(up, conv);
}

}  // namespace evtpr
