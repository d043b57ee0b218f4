#pragma once

#include <vector>

#include "aaunet/tensor.hpp"

namespace aaunet::ops {

/// Fingerprint of the piecewise-linear branches taken (ReLU signs, max-pool
/// winners) by ops run on this thread while a trace is open. grad_check uses
/// it to recognise finite differences that straddle a kink.
class BranchTrace {
 public:
  static void begin();
  static uint64_t end();
  static bool active();
  static void mix(uint64_t v);
};

/// 2-D cross-correlation over an N x C x H x W map.
///
/// `w` is [Cout, Cin/groups, kh, kw]; `b` is [Cout] or undefined. Output size per
/// spatial axis is floor((H + 2*padding - kh) / stride) + 1. Throws
/// DimensionError naming the offending axis on mismatch.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride = 1,
                 int padding = 0, int groups = 1);

/// Group normalization with per-channel affine. C must be divisible by `groups`.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps = 1e-5);

/// group_norm with one group per channel.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                        double eps = 1e-5);

/// Largest divisor of `channels` not exceeding `preferred` (8 by default).
int default_norm_groups(int64_t channels, int preferred = 8);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

/// N x C x H x W -> N x C x 1 x 1 spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Bilinear resampling with half-pixel centers (align_corners = false).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int64_t out_h, int64_t out_w);

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int factor);

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int padding);

/// x: [N, Cin], w: [Cout, Cin], b: [Cout] (may be undefined).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// x: N x C x H x W scaled per (n, c) by s: N x C x 1 x 1.
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& s);

/// x: N x C x H x W scaled per (n, h, w) by a: N x 1 x H x W.
template <typename T>
Tensor<T> scale_spatial(const Tensor<T>& x, const Tensor<T>& a);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

template <typename T>
Tensor<T> narrow_channels(const Tensor<T>& x, int64_t start, int64_t length);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Scalar sum_i x_i * weights_i. Used to project outputs to a scalar objective.
template <typename T>
Tensor<T> dot_constant(const Tensor<T>& x, const std::vector<T>& weights);

/// Split-attention normalization.
///
/// `logits` is N x (C*radix) x 1 x 1 laid out as [cardinal k][radix r][j]
/// with j < C/cardinality. Returns N x (radix*C) x 1 x 1 attention weights in
/// branch layout [r][k][j] (branch r, channel k*C/K + j). Softmax across radix
/// per (k, j); sigmoid when radix == 1.
template <typename T>
Tensor<T> radix_softmax(const Tensor<T>& logits, int cardinality, int radix);

}  // namespace aaunet::ops
