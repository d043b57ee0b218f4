#include <gtest/gtest.h>

#include <cmath>

#include "aaunet/errors.hpp"
#include "aaunet/grad_check.hpp"
#include "aaunet/metrics.hpp"
#include "oracles.hpp"

using namespace aaunet;
namespace o = oracle;

namespace {

std::vector<SegMask> random_masks(Rng& rng, int n, int h, int w, int k) {
  std::vector<SegMask> m;
  for (int i = 0; i < n; ++i) {
    SegMask s(h, w);
    for (auto& l : s.labels) l = static_cast<uint8_t>(rng.uniform_int(0, k - 1));
    m.push_back(s);
  }
  return m;
}

double cross_entropy(const std::vector<double>& lg, const Shape& s, const std::vector<SegMask>& t) {
  const int64_t N = s[0], K = s[1], HW = s[2] * s[3];
  double total = 0;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t i = 0; i < HW; ++i) {
      double mx = -INFINITY;
      for (int64_t k = 0; k < K; ++k) mx = std::max(mx, lg[(n * K + k) * HW + i]);
      double z = 0;
      for (int64_t k = 0; k < K; ++k) z += std::exp(lg[(n * K + k) * HW + i] - mx);
      total += -(lg[(n * K + t[n].labels[i]) * HW + i] - mx - std::log(z));
    }
  return total / double(N * HW);
}

SegMask mask_from(std::initializer_list<int> v, int h, int w) {
  SegMask m(h, w);
  size_t i = 0;
  for (int x : v) m.labels[i++] = static_cast<uint8_t>(x);
  return m;
}

PhantomCase toy_case(std::vector<SegMask> masks) {
  PhantomCase c;
  c.patient_id = "T";
  for (auto& m : masks) {
    c.images.emplace_back(m.height, m.width);
    c.masks.push_back(m);
  }
  return c;
}

}  // namespace

TEST(FocalLoss, GammaZeroIsCrossEntropy) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int K = static_cast<int>(rng.uniform_int(2, 8));
    const Shape s{rng.uniform_int(1, 2), K, rng.uniform_int(1, 4), rng.uniform_int(1, 4)};
    auto lg = o::random_tensor(rng, s, -5, 5);
    auto t = random_masks(rng, static_cast<int>(s[0]), static_cast<int>(s[2]), static_cast<int>(s[3]), K);
    const double f = focal_loss(lg, std::span<const SegMask>(t), ClassWeights(K, 1.0), 0.0).item();
    EXPECT_NEAR(f, cross_entropy(o::vals(lg), s, t), 1e-6);
  }
}

TEST(FocalLoss, HalfProbabilityGammaTwo) {
  TensorD lg({1, 2, 1, 1}, std::vector<double>{0.3, 0.3});
  std::vector<SegMask> t{SegMask(1, 1, 1)};
  EXPECT_NEAR(focal_loss(lg, std::span<const SegMask>(t), ClassWeights{1, 1}, 2.0).item(), 0.25 * std::log(2.0),
              1e-12);
  EXPECT_NEAR(0.25 * std::log(2.0), 0.173286, 1e-6);
}

TEST(FocalLoss, MatchesOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = trial == 0 ? 2 : static_cast<int>(rng.uniform_int(2, 8));
    const Shape s{1, K, 2, 2};
    auto lg = o::random_tensor(rng, s, -3, 3);
    auto t = random_masks(rng, 1, 2, 2, K);
    std::vector<double> w(K);
    for (auto& v : w) v = rng.uniform(0.1, 10);
    const double g = rng.uniform(0, 3);
    EXPECT_NEAR(focal_loss(lg, std::span<const SegMask>(t), w, g).item(), o::focal_loss(o::vals(lg), s, t, w, g), 1e-6);
  }
}

TEST(FocalLoss, NonNegativeZeroAtCertaintyAndMonotone) {
  Rng rng(3);
  auto lg = o::random_tensor(rng, {2, 4, 3, 3}, -4, 4);
  auto t = random_masks(rng, 2, 3, 3, 4);
  EXPECT_GE(focal_loss(lg, std::span<const SegMask>(t), ClassWeights(4, 1.0), 2.0).item(), 0.0);
  TensorD sure({1, 3, 1, 1}, std::vector<double>{40, 0, 0});
  std::vector<SegMask> bg{SegMask(1, 1, 0)};
  EXPECT_NEAR(focal_loss(sure, std::span<const SegMask>(bg), ClassWeights(3, 1.0), 2.0).item(), 0.0, 1e-6);
  // Raising the true-class logit raises p_y with other probabilities' ratios fixed.
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v = o::random_vec(rng, 3, -2, 2);
    TensorD a({1, 3, 1, 1}, v);
    v[1] += rng.uniform(0.01, 1.0);
    TensorD b({1, 3, 1, 1}, v);
    std::vector<SegMask> y{SegMask(1, 1, 1)};
    EXPECT_LT(focal_loss(b, std::span<const SegMask>(y), ClassWeights(3, 1.0), 2.0).item(),
              focal_loss(a, std::span<const SegMask>(y), ClassWeights(3, 1.0), 2.0).item());
  }
}

TEST(FocalLoss, ErrorsAndGradCheck) {
  Rng rng(4);
  auto lg = o::random_tensor(rng, {1, 3, 2, 2});
  std::vector<SegMask> bad{mask_from({0, 1, 5, 2}, 2, 2)};
  try {
    focal_loss(lg, std::span<const SegMask>(bad), ClassWeights(3, 1.0), 2.0);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos) << e.what();
  }
  auto t = random_masks(rng, 1, 2, 2, 3);
  EXPECT_THROW(focal_loss(lg, std::span<const SegMask>(t), ClassWeights(3, 1.0), -1.0), ConfigError);
  EXPECT_THROW(focal_loss(lg, std::span<const SegMask>(t), ClassWeights(2, 1.0), 2.0), ConfigError);
  for (double g : {0.0, 0.5, 2.0}) {
    auto r = grad_check([&](const std::vector<TensorD>& in) {
      return focal_loss(in[0], std::span<const SegMask>(t), ClassWeights{0.5, 2.0, 9.0}, g);
    }, {o::random_tensor(rng, {1, 3, 2, 2}, -3, 3)}, 1e-4);
    EXPECT_TRUE(r.passed) << "gamma " << g << ": " << r.worst;
  }
}

TEST(Dice, Identities) {
  auto g = mask_from({1, 1, 1, 1, 1, 1, 0, 0, 0, 0}, 2, 5);
  EXPECT_EQ(*dice_score(g, g, 1), 1.0);
  auto disjoint = mask_from({0, 0, 0, 0, 0, 0, 1, 1, 1, 1}, 2, 5);
  EXPECT_EQ(*dice_score(disjoint, g, 1), 0.0);
  auto p = mask_from({1, 1, 1, 0, 0, 0, 1, 0, 0, 0}, 2, 5);  // |P| = 4, |P n G| = 3, |G| = 6
  EXPECT_EQ(*dice_score(p, g, 1), 0.6);
  EXPECT_FALSE(dice_score(g, g, 3).has_value());
  EXPECT_THROW(dice_score(g, SegMask(5, 2), 1), DimensionError);
}

TEST(Dice, SymmetricRelabelInvariantAndOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = random_masks(rng, 2, 6, 5, 8);
    for (int c = 1; c < 8; ++c) {
      auto a = dice_score(m[0], m[1], c), b = dice_score(m[1], m[0], c);
      ASSERT_EQ(a.has_value(), b.has_value());
      if (!a) continue;
      EXPECT_EQ(*a, *b);
      EXPECT_EQ(*a, o::dice_counts(m[0], m[1], c));
      auto r = m[0];
      for (auto& l : r.labels)
        if (l != c) l = static_cast<uint8_t>((l + 3) % 8 == c ? 0 : (l + 3) % 8);
      EXPECT_EQ(*dice_score(r, m[1], c), *a);
    }
  }
}

TEST(Dice, CountsMergeIsAssociative) {
  Rng rng(6);
  auto p = random_masks(rng, 6, 4, 4, 8), t = random_masks(rng, 6, 4, 4, 8);
  DiceCounts all, s1, s2, s3;
  for (int i = 0; i < 6; ++i) all.add(p[i], t[i]);
  for (int i = 0; i < 2; ++i) s1.add(p[i], t[i]);
  for (int i = 2; i < 4; ++i) s2.add(p[i], t[i]);
  for (int i = 4; i < 6; ++i) s3.add(p[i], t[i]);
  DiceCounts left = s1;
  left.merge(s2);
  left.merge(s3);
  DiceCounts right = s2;
  right.merge(s3);
  DiceCounts r2 = s1;
  r2.merge(right);
  EXPECT_EQ(left, all);
  EXPECT_EQ(r2, all);
}

TEST(Evaluate, OracleModelAllBackgroundAndHandCounts) {
  // Three 2x3 slices with hand-counted totals.
  std::vector<SegMask> truth{mask_from({1, 1, 0, 0, 2, 2}, 2, 3), mask_from({1, 0, 0, 0, 0, 2}, 2, 3),
                             mask_from({0, 0, 0, 0, 0, 0}, 2, 3)};
  std::vector<SegMask> pred{mask_from({1, 0, 0, 0, 2, 2}, 2, 3), mask_from({1, 1, 0, 0, 2, 2}, 2, 3),
                            mask_from({0, 0, 0, 3, 0, 0}, 2, 3)};
  auto c = toy_case(truth);
  std::vector<const PhantomCase*> split{&c};
  auto perfect = evaluate([](const PhantomCase& pc, int s) { return pc.masks[s]; }, split);
  EXPECT_EQ(*perfect.per_class[1], 1.0);
  EXPECT_EQ(*perfect.per_class[2], 1.0);
  EXPECT_FALSE(perfect.per_class[3].has_value());
  EXPECT_EQ(*perfect.mean_dice, 1.0);

  auto empty = evaluate([](const PhantomCase& pc, int s) { return SegMask(pc.masks[s].height, pc.masks[s].width); }, split);
  EXPECT_EQ(*empty.per_class[1], 0.0);
  EXPECT_EQ(*empty.per_class[2], 0.0);
  EXPECT_FALSE(empty.per_class[4].has_value());

  auto rep = evaluate([&](const PhantomCase&, int s) { return pred[s]; }, split);
  // ICH: |P| = 3, |G| = 3, inter = 2. SDH: |P| = 4, |G| = 3, inter = 3. SAH: |P| = 1, |G| = 0.
  EXPECT_EQ(*rep.per_class[1], 4.0 / 6.0);
  EXPECT_EQ(*rep.per_class[2], 6.0 / 7.0);
  EXPECT_EQ(*rep.per_class[3], 0.0);
  EXPECT_DOUBLE_EQ(*rep.mean_dice, (4.0 / 6.0 + 6.0 / 7.0 + 0.0) / 3.0);
  const std::array<LesionClass, 2> pair{LesionClass::ICH, LesionClass::SDH};
  EXPECT_DOUBLE_EQ(*rep.mean_over(pair), (4.0 / 6.0 + 6.0 / 7.0) / 2);
  DiceCounts sum;
  for (int s = 0; s < 3; ++s) sum.add(pred[s], truth[s]);
  EXPECT_EQ(rep.counts, sum);
  auto j = rep.to_json();
  for (const char* k : {"per_class", "support", "predicted", "mean_dice", "config_echo"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_THROW(evaluate([](const PhantomCase&, int) { return SegMask(); }, {}), ConfigError);
}

TEST(Weights, UniformClippedAndHand) {
  for (double w : weights_from_frequencies({0.25, 0.25, 0.25, 0.25}, 10)) EXPECT_DOUBLE_EQ(w, 1.0);
  auto rare = weights_from_frequencies({0.5, 0.495, 0.005}, 10);
  EXPECT_DOUBLE_EQ(rare[2], 10.0);
  auto h = weights_from_frequencies({0.9, 0.09, 0.01}, 10);
  EXPECT_NEAR(h[0], 0.1, 1e-12);
  EXPECT_NEAR(h[1], 1.0, 1e-12);
  EXPECT_NEAR(h[2], 9.0, 1e-12);
  auto absent = weights_from_frequencies({0.6, 0.4, 0.0}, 5);
  EXPECT_EQ(absent[2], 5.0);
  EXPECT_THROW(weights_from_frequencies({0.5, 0.5}, 0.5), ConfigError);
}
