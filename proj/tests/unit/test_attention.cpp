#include <gtest/gtest.h>

#include <cmath>

#include "aaunet/attention.hpp"
#include "aaunet/errors.hpp"
#include "aaunet/grad_check.hpp"
#include "aaunet/ops.hpp"
#include "oracles.hpp"

using namespace aaunet;
namespace o = oracle;

namespace {

void fill(TensorD t, double v) {
  for (double& x : t.data()) x = v;
}

void randomize(ParamStore<double>& store, uint64_t seed) {
  Rng rng(seed);
  for (const auto& entry : store.entries()) {
    TensorD t = entry.second;
    for (double& v : t.data()) v = rng.uniform(-0.5, 0.5);
  }
}

TensorD project(const TensorD& y) {
  Rng rng(77);
  std::vector<double> w(static_cast<size_t>(y.numel()));
  for (auto& v : w) v = rng.uniform(-1, 1);
  return ops::dot_constant(y, w);
}

}  // namespace

TEST(ChannelAttention, ZeroWeightsHalveInput) {
  ParamStore<double> store(1);
  auto p = ChannelAttentionParams<double>::create(store, "ca", 16, 4);
  fill(p.w1, 0);
  fill(p.w2, 0);
  Rng rng(2);
  auto x = o::random_tensor(rng, {2, 16, 3, 3});
  auto y = channel_attention(x, p);
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], 0.5 * x.data()[i]);
}

TEST(ChannelAttention, ZeroInputZeroOutput) {
  ParamStore<double> store(3);
  auto p = ChannelAttentionParams<double>::create(store, "ca", 16, 4);
  auto y = channel_attention(TensorD::full({1, 16, 4, 4}, 0.0), p);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(ChannelAttention, MatchesOracle) {
  ParamStore<double> store(4);
  auto p = ChannelAttentionParams<double>::create(store, "ca", 16, 4);
  randomize(store, 5);
  Rng rng(6);
  auto x = o::random_tensor(rng, {1, 16, 4, 4});
  EXPECT_LT(o::max_abs_diff(o::vals(channel_attention(x, p)), o::channel_attention(o::vals(x), x.shape(), p)), 1e-6);
}

TEST(ChannelAttention, ErrorsAndGradCheck) {
  ParamStore<double> store(7);
  EXPECT_THROW(ChannelAttentionParams<double>::create(store, "bad", 8, 4), ConfigError);
  auto p = ChannelAttentionParams<double>::create(store, "ca", 8, 2);
  randomize(store, 8);
  EXPECT_THROW(channel_attention(TensorD::full({1, 6, 2, 2}, 1.0), p), DimensionError);
  Rng rng(9);
  auto x = o::random_tensor(rng, {1, 8, 3, 3});
  auto r = grad_check([&](const std::vector<TensorD>& in) {
    ChannelAttentionParams<double> q = p;
    q.w1 = in[1];
    q.w2 = in[2];
    return project(channel_attention(in[0], q));
  }, {x, p.w1, p.w2}, 1e-4);
  EXPECT_TRUE(r.passed) << r.worst;
}

TEST(SpatialGate, ZeroPsiGivesHalf) {
  ParamStore<double> store(10);
  auto p = SpatialGateParams<double>::create(store, "g", 4, 8);
  randomize(store, 11);
  fill(p.psi_w, 0);
  fill(p.psi_b, 0);
  Rng rng(12);
  auto x = o::random_tensor(rng, {1, 4, 8, 8});
  auto out = spatial_attention_gate(x, o::random_tensor(rng, {1, 8, 4, 4}), p);
  for (double a : out.alpha.data()) EXPECT_EQ(a, 0.5);
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(out.gated.data()[i], 0.5 * x.data()[i]);
}

TEST(SpatialGate, ZeroSkipGivesZero) {
  ParamStore<double> store(13);
  auto p = SpatialGateParams<double>::create(store, "g", 4, 8);
  randomize(store, 14);
  Rng rng(15);
  auto out = spatial_attention_gate(TensorD::full({1, 4, 8, 8}, 0.0), o::random_tensor(rng, {1, 8, 4, 4}), p);
  for (double v : out.gated.data()) EXPECT_EQ(v, 0.0);
}

TEST(SpatialGate, MatchesOracle) {
  ParamStore<double> store(16);
  auto p = SpatialGateParams<double>::create(store, "g", 4, 8);
  randomize(store, 17);
  Rng rng(18);
  auto x = o::random_tensor(rng, {1, 4, 8, 8});
  auto g = o::random_tensor(rng, {1, 8, 4, 4});
  auto out = spatial_attention_gate(x, g, p);
  auto ref = o::spatial_gate(o::vals(x), x.shape(), o::vals(g), g.shape(), p);
  EXPECT_LT(o::max_abs_diff(o::vals(out.gated), ref.gated), 1e-5);
  EXPECT_LT(o::max_abs_diff(o::vals(out.alpha), ref.alpha), 1e-5);
  // Same-resolution gating is also accepted.
  auto g2 = o::random_tensor(rng, {1, 8, 8, 8});
  auto ref2 = o::spatial_gate(o::vals(x), x.shape(), o::vals(g2), g2.shape(), p);
  EXPECT_LT(o::max_abs_diff(o::vals(spatial_attention_gate(x, g2, p).gated), ref2.gated), 1e-5);
}

TEST(SpatialGate, MonotoneLimits) {
  ParamStore<double> store(19);
  auto p = SpatialGateParams<double>::create(store, "g", 4, 8);
  randomize(store, 20);
  fill(p.psi_w, 0);
  Rng rng(21);
  auto x = o::random_tensor(rng, {1, 4, 8, 8});
  auto g = o::random_tensor(rng, {1, 8, 4, 4});
  fill(p.psi_b, 20);
  auto hi = spatial_attention_gate(x, g, p);
  fill(p.psi_b, -20);
  auto lo = spatial_attention_gate(x, g, p);
  for (int64_t i = 0; i < x.numel(); ++i) {
    EXPECT_NEAR(hi.gated.data()[i], x.data()[i], 1e-6);
    EXPECT_NEAR(lo.gated.data()[i], 0.0, 1e-6);
  }
}

TEST(SpatialGate, ErrorsAndGradCheck) {
  ParamStore<double> store(22);
  auto p = SpatialGateParams<double>::create(store, "g", 4, 8);
  randomize(store, 23);
  Rng rng(24);
  EXPECT_THROW(spatial_attention_gate(o::random_tensor(rng, {2, 4, 8, 8}), o::random_tensor(rng, {1, 8, 4, 4}), p),
               DimensionError);
  auto x = o::random_tensor(rng, {1, 4, 4, 4});
  auto g = o::random_tensor(rng, {1, 8, 2, 2});
  auto r = grad_check([&](const std::vector<TensorD>& in) {
    SpatialGateParams<double> q = p;
    q.wg_w = in[2];
    q.psi_w = in[3];
    return project(spatial_attention_gate(in[0], in[1], q).gated);
  }, {x, g, p.wg_w, p.psi_w}, 1e-4);
  EXPECT_TRUE(r.passed) << r.worst;
}

TEST(SplitAttention, MatchesOracleRadix2) {
  ParamStore<double> store(25);
  auto p = SplitAttentionParams<double>::create(store, "sa", 8, 8, 1, 2, 1);
  randomize(store, 26);
  Rng rng(27);
  auto x = o::random_tensor(rng, {1, 8, 8, 8});
  EXPECT_LT(o::max_abs_diff(o::vals(split_attention_block(x, p)), o::split_attention(o::vals(x), x.shape(), p)), 1e-5);
}

TEST(SplitAttention, Radix1IsSigmoidGate) {
  ParamStore<double> store(28);
  auto p = SplitAttentionParams<double>::create(store, "sa", 8, 16, 2, 1, 2);
  randomize(store, 29);
  Rng rng(30);
  auto x = o::random_tensor(rng, {2, 8, 8, 8});
  auto y = split_attention_block(x, p);
  EXPECT_EQ(y.shape(), (Shape{2, 16, 4, 4}));
  EXPECT_LT(o::max_abs_diff(o::vals(y), o::split_attention(o::vals(x), x.shape(), p)), 1e-5);
}

TEST(SplitAttention, ZeroLogitsAverageBranches) {
  ParamStore<double> store(31);
  auto p = SplitAttentionParams<double>::create(store, "sa", 8, 8, 1, 2, 1);
  randomize(store, 32);
  fill(p.fc2_w, 0);
  fill(p.fc2_b, 0);
  Rng rng(33);
  auto x = o::random_tensor(rng, {1, 8, 6, 6});
  auto branches = ops::relu(ops::group_norm(ops::conv2d(x, p.conv_w, TensorD(), 1, 1, 2), p.gn_groups,
                                            p.gn_gamma, p.gn_beta));
  auto mean = ops::scale(ops::add(ops::narrow_channels(branches, 0, 8), ops::narrow_channels(branches, 8, 8)), 0.5);
  auto shortcut = p.shortcut_w.defined() ? ops::conv2d(x, p.shortcut_w, p.shortcut_b) : x;
  auto expect = ops::add(mean, shortcut);
  EXPECT_LT(o::max_abs_diff(o::vals(split_attention_block(x, p)), o::vals(expect)), 1e-12);
}

TEST(SplitAttention, DivisibilityAndGradCheck) {
  ParamStore<double> store(34);
  EXPECT_THROW(SplitAttentionParams<double>::create(store, "bad", 8, 9, 1, 2, 1), ConfigError);
  auto p = SplitAttentionParams<double>::create(store, "sa", 4, 8, 1, 2, 2);
  randomize(store, 35);
  Rng rng(36);
  auto x = o::random_tensor(rng, {1, 4, 6, 6});
  auto r = grad_check([&](const std::vector<TensorD>& in) {
    SplitAttentionParams<double> q = p;
    q.conv_w = in[1];
    q.fc1_w = in[2];
    q.fc2_w = in[3];
    return project(split_attention_block(in[0], q));
  }, {x, p.conv_w, p.fc1_w, p.fc2_w}, 1e-4);
  EXPECT_TRUE(r.passed) << r.worst;
}
