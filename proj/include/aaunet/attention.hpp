#pragma once

#include <string>

#include "aaunet/params.hpp"
#include "aaunet/tensor.hpp"

namespace aaunet {

/// Squeeze-and-excitation gate: s = sigmoid(W2 relu(W1 GAP(x) + b1) + b2).
template <typename T>
struct ChannelAttentionParams {
  Tensor<T> w1, b1;  // [C/r, C], [C/r]
  Tensor<T> w2, b2;  // [C, C/r], [C]
  int64_t channels = 0;
  int reduction = 4;

  /// Throws ConfigError unless reduction >= 1 and channels / reduction >= 4.
  static ChannelAttentionParams create(ParamStore<T>& store, const std::string& prefix,
                                       int64_t channels, int reduction);
};

/// Additive attention gate over a skip connection.
///
/// alpha = sigmoid(psi(relu(GN(wg * up(g)) + IN(wx * x)))); gated = alpha * x.
template <typename T>
struct SpatialGateParams {
  Tensor<T> wg_w, wg_b;    // [Fint, Cg, 1, 1]
  Tensor<T> wx_w, wx_b;    // [Fint, Cx, 1, 1]
  Tensor<T> psi_w, psi_b;  // [1, Fint, 1, 1]
  Tensor<T> gn_gamma, gn_beta, in_gamma, in_beta;
  int64_t skip_channels = 0, gating_channels = 0, inter_channels = 0;
  int gn_groups = 1;

  /// inter_channels <= 0 selects max(4, skip_channels / 2).
  static SpatialGateParams create(ParamStore<T>& store, const std::string& prefix,
                                  int64_t skip_channels, int64_t gating_channels,
                                  int64_t inter_channels = 0);
};

/// Split-attention residual unit (cardinality K, radix R).
template <typename T>
struct SplitAttentionParams {
  Tensor<T> conv_w;               // [C*R, Cin/(K*R), 3, 3], no bias
  Tensor<T> gn_gamma, gn_beta;    // [C*R]
  Tensor<T> fc1_w, fc1_b;         // [inter, C/K, 1, 1], grouped by K
  Tensor<T> fc2_w, fc2_b;         // [C*R, inter/K, 1, 1], grouped by K
  Tensor<T> shortcut_w, shortcut_b;  // [C, Cin, 1, 1]; undefined for identity shortcut
  int64_t in_channels = 0, channels = 0, inter_channels = 0;
  int cardinality = 1, radix = 2, stride = 1, gn_groups = 1;

  static SplitAttentionParams create(ParamStore<T>& store, const std::string& prefix,
                                     int64_t in_channels, int64_t channels, int cardinality,
                                     int radix, int stride);
};

template <typename T>
struct GateOutput {
  Tensor<T> gated;
  Tensor<T> alpha;  // N x 1 x Hx x Wx
};

/// Per-channel sigmoid weights s, N x C x 1 x 1.
template <typename T>
Tensor<T> channel_attention_weights(const Tensor<T>& x, const ChannelAttentionParams<T>& p);

template <typename T>
Tensor<T> channel_attention(const Tensor<T>& x, const ChannelAttentionParams<T>& p);

/// g must be no finer than x and share its batch size.
template <typename T>
GateOutput<T> spatial_attention_gate(const Tensor<T>& x, const Tensor<T>& g,
                                     const SpatialGateParams<T>& p);

template <typename T>
Tensor<T> split_attention_block(const Tensor<T>& x, const SplitAttentionParams<T>& p);

}  // namespace aaunet
