#include "aaunet/attention.hpp"

#include "aaunet/errors.hpp"
#include "aaunet/ops.hpp"

namespace aaunet {

template <typename T>
ChannelAttentionParams<T> ChannelAttentionParams<T>::create(ParamStore<T>& store,
                                                            const std::string& prefix,
                                                            int64_t channels, int reduction) {
  if (reduction < 1) throw ConfigError(prefix + ": channel attention reduction must be >= 1");
  if (channels / reduction < 4) {
    throw ConfigError(prefix + ": channel attention needs C/r >= 4, got C=" +
                      std::to_string(channels) + " r=" + std::to_string(reduction));
  }
  const int64_t hidden = channels / reduction;
  ChannelAttentionParams p;
  p.channels = channels;
  p.reduction = reduction;
  p.w1 = store.create(prefix + ".fc1.weight", {hidden, channels}, Init::KaimingNormal, channels);
  p.b1 = store.create(prefix + ".fc1.bias", {hidden}, Init::Zeros);
  p.w2 = store.create(prefix + ".fc2.weight", {channels, hidden}, Init::KaimingNormal, hidden);
  p.b2 = store.create(prefix + ".fc2.bias", {channels}, Init::Zeros);
  return p;
}

template <typename T>
SpatialGateParams<T> SpatialGateParams<T>::create(ParamStore<T>& store,
                                                  const std::string& prefix,
                                                  int64_t skip_channels,
                                                  int64_t gating_channels,
                                                  int64_t inter_channels) {
  if (inter_channels <= 0) inter_channels = std::max<int64_t>(4, skip_channels / 2);
  SpatialGateParams p;
  p.skip_channels = skip_channels;
  p.gating_channels = gating_channels;
  p.inter_channels = inter_channels;
  p.gn_groups = ops::default_norm_groups(inter_channels);
  p.wg_w = store.create(prefix + ".wg.weight", {inter_channels, gating_channels, 1, 1},
                        Init::KaimingNormal, gating_channels);
  p.wg_b = store.create(prefix + ".wg.bias", {inter_channels}, Init::Zeros);
  p.wx_w = store.create(prefix + ".wx.weight", {inter_channels, skip_channels, 1, 1},
                        Init::KaimingNormal, skip_channels);
  p.wx_b = store.create(prefix + ".wx.bias", {inter_channels}, Init::Zeros);
  p.gn_gamma = store.create(prefix + ".gn.gamma", {inter_channels}, Init::Ones);
  p.gn_beta = store.create(prefix + ".gn.beta", {inter_channels}, Init::Zeros);
  p.in_gamma = store.create(prefix + ".in.gamma", {inter_channels}, Init::Ones);
  p.in_beta = store.create(prefix + ".in.beta", {inter_channels}, Init::Zeros);
  p.psi_w = store.create(prefix + ".psi.weight", {1, inter_channels, 1, 1}, Init::KaimingNormal,
                         inter_channels);
  p.psi_b = store.create(prefix + ".psi.bias", {1}, Init::Zeros);
  return p;
}

template <typename T>
SplitAttentionParams<T> SplitAttentionParams<T>::create(ParamStore<T>& store,
                                                        const std::string& prefix,
                                                        int64_t in_channels, int64_t channels,
                                                        int cardinality, int radix,
                                                        int stride) {
  if (cardinality < 1 || radix < 1) {
    throw ConfigError(prefix + ": cardinality and radix must be >= 1");
  }
  const int64_t kr = int64_t(cardinality) * radix;
  if (channels % kr != 0 || in_channels % kr != 0) {
    throw ConfigError(prefix + ": channels (in " + std::to_string(in_channels) + ", out " +
                      std::to_string(channels) + ") must be divisible by K*R=" +
                      std::to_string(kr));
  }
  if (stride < 1) throw ConfigError(prefix + ": stride must be >= 1");
  SplitAttentionParams p;
  p.in_channels = in_channels;
  p.channels = channels;
  p.cardinality = cardinality;
  p.radix = radix;
  p.stride = stride;
  int64_t inter = std::max<int64_t>(channels * radix / 4, 8);
  inter = (inter + cardinality - 1) / cardinality * cardinality;
  p.inter_channels = inter;
  p.gn_groups = ops::default_norm_groups(channels * radix);
  const int64_t cin_g = in_channels / kr;
  p.conv_w = store.create(prefix + ".conv.weight", {channels * radix, cin_g, 3, 3},
                          Init::KaimingNormal, cin_g * 9);
  p.gn_gamma = store.create(prefix + ".gn.gamma", {channels * radix}, Init::Ones);
  p.gn_beta = store.create(prefix + ".gn.beta", {channels * radix}, Init::Zeros);
  const int64_t fc1_in = channels / cardinality;
  p.fc1_w = store.create(prefix + ".fc1.weight", {inter, fc1_in, 1, 1}, Init::KaimingNormal,
                         fc1_in);
  p.fc1_b = store.create(prefix + ".fc1.bias", {inter}, Init::Zeros);
  const int64_t fc2_in = inter / cardinality;
  p.fc2_w = store.create(prefix + ".fc2.weight", {channels * radix, fc2_in, 1, 1},
                         Init::KaimingNormal, fc2_in);
  p.fc2_b = store.create(prefix + ".fc2.bias", {channels * radix}, Init::Zeros);
  if (stride > 1 || in_channels != channels) {
    p.shortcut_w = store.create(prefix + ".shortcut.weight", {channels, in_channels, 1, 1},
                                Init::KaimingNormal, in_channels);
    p.shortcut_b = store.create(prefix + ".shortcut.bias", {channels}, Init::Zeros);
  }
  return p;
}

template <typename T>
Tensor<T> channel_attention_weights(const Tensor<T>& x, const ChannelAttentionParams<T>& p) {
  if (x.rank() != 4 || x.dim(1) != p.channels) {
    throw DimensionError("channel_attention: channel axis of " + shape_str(x.shape()) +
                         " does not match " + std::to_string(p.channels));
  }
  const int64_t N = x.dim(0);
  auto pooled = ops::reshape(ops::global_avg_pool(x), {N, p.channels});
  auto hidden = ops::relu(ops::fully_connected(pooled, p.w1, p.b1));
  auto s = ops::sigmoid(ops::fully_connected(hidden, p.w2, p.b2));
  return ops::reshape(s, {N, p.channels, 1, 1});
}

template <typename T>
Tensor<T> channel_attention(const Tensor<T>& x, const ChannelAttentionParams<T>& p) {
  return ops::scale_channels(x, channel_attention_weights(x, p));
}

template <typename T>
GateOutput<T> spatial_attention_gate(const Tensor<T>& x, const Tensor<T>& g,
                                     const SpatialGateParams<T>& p) {
  if (x.rank() != 4 || g.rank() != 4) {
    throw DimensionError("spatial_attention_gate: inputs must be rank 4");
  }
  if (x.dim(0) != g.dim(0)) {
    throw DimensionError("spatial_attention_gate: batch axis mismatch, skip " +
                         std::to_string(x.dim(0)) + " vs gating " + std::to_string(g.dim(0)));
  }
  if (x.dim(1) != p.skip_channels || g.dim(1) != p.gating_channels) {
    throw DimensionError("spatial_attention_gate: channel axis mismatch, skip " +
                         shape_str(x.shape()) + ", gating " + shape_str(g.shape()));
  }
  if (g.dim(2) > x.dim(2) || g.dim(3) > x.dim(3)) {
    throw DimensionError("spatial_attention_gate: gating signal " + shape_str(g.shape()) +
                         " is finer than skip " + shape_str(x.shape()));
  }
  // 1x1 conv commutes with bilinear resampling, so project before upsampling.
  auto gp = ops::conv2d(g, p.wg_w, p.wg_b);
  if (gp.dim(2) != x.dim(2) || gp.dim(3) != x.dim(3)) {
    gp = ops::resize_bilinear(gp, x.dim(2), x.dim(3));
  }
  auto gn = ops::group_norm(gp, p.gn_groups, p.gn_gamma, p.gn_beta);
  auto xn = ops::instance_norm(ops::conv2d(x, p.wx_w, p.wx_b), p.in_gamma, p.in_beta);
  auto q = ops::conv2d(ops::relu(ops::add(gn, xn)), p.psi_w, p.psi_b);
  auto alpha = ops::sigmoid(q);
  return {ops::scale_spatial(x, alpha), alpha};
}

template <typename T>
Tensor<T> split_attention_block(const Tensor<T>& x, const SplitAttentionParams<T>& p) {
  if (x.rank() != 4 || x.dim(1) != p.in_channels) {
    throw DimensionError("split_attention_block: channel axis of " + shape_str(x.shape()) +
                         " does not match " + std::to_string(p.in_channels));
  }
  const int K = p.cardinality, R = p.radix;
  const int64_t C = p.channels;
  auto y = ops::conv2d(x, p.conv_w, Tensor<T>(), p.stride, 1, K * R);
  y = ops::relu(ops::group_norm(y, p.gn_groups, p.gn_gamma, p.gn_beta));

  std::vector<Tensor<T>> branches;
  branches.reserve(R);
  for (int r = 0; r < R; ++r) branches.push_back(ops::narrow_channels(y, r * C, C));
  Tensor<T> summed = branches[0];
  for (int r = 1; r < R; ++r) summed = ops::add(summed, branches[r]);

  auto gap = ops::global_avg_pool(summed);
  auto hidden = ops::relu(ops::conv2d(gap, p.fc1_w, p.fc1_b, 1, 0, K));
  auto logits = ops::conv2d(hidden, p.fc2_w, p.fc2_b, 1, 0, K);
  auto att = ops::radix_softmax(logits, K, R);

  Tensor<T> out;
  for (int r = 0; r < R; ++r) {
    auto weighted = ops::scale_channels(branches[r], ops::narrow_channels(att, r * C, C));
    out = r == 0 ? weighted : ops::add(out, weighted);
  }
  Tensor<T> shortcut = p.shortcut_w.defined()
                           ? ops::conv2d(x, p.shortcut_w, p.shortcut_b, p.stride, 0)
                           : x;
  return ops::add(out, shortcut);
}

#define AAUNET_INSTANTIATE_ATTENTION(T)                                                      \
  template struct ChannelAttentionParams<T>;                                                 \
  template struct SpatialGateParams<T>;                                                      \
  template struct SplitAttentionParams<T>;                                                   \
  template Tensor<T> channel_attention_weights(const Tensor<T>&,                             \
                                               const ChannelAttentionParams<T>&);            \
  template Tensor<T> channel_attention(const Tensor<T>&, const ChannelAttentionParams<T>&);  \
  template GateOutput<T> spatial_attention_gate(const Tensor<T>&, const Tensor<T>&,          \
                                                const SpatialGateParams<T>&);                \
  template Tensor<T> split_attention_block(const Tensor<T>&, const SplitAttentionParams<T>&);

AAUNET_INSTANTIATE_ATTENTION(float)
AAUNET_INSTANTIATE_ATTENTION(double)

}  // namespace aaunet
