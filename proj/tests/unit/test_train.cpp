#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "aaunet/checkpoint.hpp"
#include "aaunet/config.hpp"
#include "aaunet/dataset.hpp"
#include "aaunet/errors.hpp"
#include "aaunet/optim.hpp"
#include "aaunet/train.hpp"
#include "oracles.hpp"

using namespace aaunet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("aaunet_train_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.encoder.stage_depths = {1, 1, 1, 1};
  m.encoder.base_width = 8;
  m.encoder.stem_skip_width = 4;
  m.decoder_widths = {16, 16, 16, 16};
  m.skip_reduced_widths = {8, 8, 8, 4};
  return m;
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.model = tiny_model();
  c.batch_size = 2;
  c.max_steps = 20;
  c.eval_interval = 0;
  c.seed = 3;
  return c;
}

const Dataset& data7() {
  static const Dataset ds = generate_dataset(21, 7, 64);
  return ds;
}

std::vector<double> losses(const Trainer& t) {
  std::vector<double> v;
  for (const auto& r : t.history()) v.push_back(r.loss);
  return v;
}

}  // namespace

TEST(AdamW, ZeroGradient) {
  std::vector<float> p{1.5f, -2.0f}, g{0.f, 0.f};
  AdamWSlot<float> slot;
  AdamWConfig cfg;
  cfg.weight_decay = 0;
  adamw_step<float>(p, g, slot, 1, 0.1, cfg);
  EXPECT_EQ(p, (std::vector<float>{1.5f, -2.0f}));
  std::vector<double> q{1.5, -2.0}, gq{0, 0};
  AdamWSlot<double> s2;
  cfg.weight_decay = 0.01;
  adamw_step<double>(q, gq, s2, 1, 0.1, cfg);
  EXPECT_EQ(q[0], 1.5 * (1 - 0.1 * 0.01));
  EXPECT_EQ(q[1], -2.0 * 0.999);
}

TEST(AdamW, QuadraticMatchesScalarReference) {
  AdamWConfig cfg;
  std::vector<double> p{0.8};
  AdamWSlot<double> slot;
  oracle::ScalarAdamW ref;
  double r = 0.8;
  for (int t = 1; t <= 100; ++t) {
    std::vector<double> g{2 * p[0]};
    adamw_step<double>(p, g, slot, t, 0.05, cfg);
    r = ref.step(r, 2 * r, 0.05, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    ASSERT_NEAR(p[0], r, 1e-10) << "step " << t;
  }
  EXPECT_LT(std::abs(p[0]), 0.8);
}

TEST(AdamW, RandomGradientsMatchReference) {
  Rng rng(1);
  AdamWConfig cfg{0.85, 0.99, 1e-7, 0.03};
  std::vector<double> p = oracle::random_vec(rng, 20);
  std::vector<oracle::ScalarAdamW> refs(20);
  std::vector<double> r = p;
  AdamWSlot<double> slot;
  for (int t = 1; t <= 30; ++t) {
    auto g = oracle::random_vec(rng, 20, -3, 3);
    adamw_step<double>(p, g, slot, t, 0.01, cfg);
    for (int i = 0; i < 20; ++i) r[i] = refs[i].step(r[i], g[i], 0.01, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
  }
  EXPECT_LT(oracle::max_abs_diff(p, r), 1e-10);
}

TEST(AdamW, NonFiniteGradientRejectedWithoutChanges) {
  ParamStore<float> store(1);
  auto a = store.create("a", {2}, Init::Ones);
  auto b = store.create("b", {2}, Init::Ones);
  a.grad()[0] = 1.f;
  b.grad()[1] = NAN;
  AdamW<float> opt;
  try {
    opt.step(store, 0.1);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
  EXPECT_EQ(a.data()[0], 1.f);
  EXPECT_EQ(opt.steps(), 0);
}

TEST(CyclicLr, BoundariesAndRange) {
  EXPECT_DOUBLE_EQ(cyclic_lr(0, 1e-4, 1e-3, 500), 1e-4);
  EXPECT_DOUBLE_EQ(cyclic_lr(250, 1e-4, 1e-3, 500), 1e-3);
  EXPECT_DOUBLE_EQ(cyclic_lr(500, 1e-4, 1e-3, 500), 1e-4);
  EXPECT_DOUBLE_EQ(cyclic_lr(1250, 1e-4, 1e-3, 500), 1e-3);
  for (int s = 0; s < 2000; s += 7) {
    const double lr = cyclic_lr(s, 1e-4, 1e-3, 500);
    EXPECT_GE(lr, 1e-4);
    EXPECT_LE(lr, 1e-3);
  }
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  TrainConfig c = tiny_train();
  c.lr_max = 0.02;
  c.augment = AugmentPolicy::identity();
  c.model.use_space_attention = false;
  EXPECT_EQ(train_config_from_json(to_json(c)), c);
  try {
    train_config_from_json(json{{"model", {{"encoder", {{"widht", 3}}}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.encoder.widht"), std::string::npos) << e.what();
  }
  EXPECT_EQ(train_config_from_json(json{{"batch_size", 2}}).batch_size, 2);
  EXPECT_THROW(train_config_from_json(json{{"batch_size", "two"}}), ConfigError);
  TrainConfig bad;
  bad.lr_max = bad.lr_base / 2;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Checkpoint, RoundTripForwardBitIdentical) {
  const auto dir = scratch("ck");
  Model<float> m(tiny_model(), 4);
  Rng rng(2);
  std::vector<float> in(2 * 3 * 64 * 64);
  for (auto& v : in) v = static_cast<float>(rng.uniform());
  TensorF x({2, 3, 64, 64}, in);
  NoGradGuard ng;
  auto before = m.logits(x);
  write_checkpoint(dir / "m.ckpt", checkpoint_from_model(m));
  auto loaded = model_from_checkpoint(read_checkpoint(dir / "m.ckpt"));
  EXPECT_EQ(loaded.config(), m.config());
  auto after = loaded.logits(x);
  EXPECT_TRUE(std::equal(before.data().begin(), before.data().end(), after.data().begin()));
  EXPECT_FALSE(fs::exists(dir / "m.ckpt.tmp"));
  fs::remove_all(dir);
}

TEST(Checkpoint, CorruptAndMismatched) {
  const auto dir = scratch("ckbad");
  Model<float> m(tiny_model(), 5);
  write_checkpoint(dir / "m.ckpt", checkpoint_from_model(m));
  const auto full = fs::file_size(dir / "m.ckpt");
  fs::copy_file(dir / "m.ckpt", dir / "t.ckpt");
  fs::resize_file(dir / "t.ckpt", full - 10);
  try {
    read_checkpoint(dir / "t.ckpt");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("t.ckpt"), std::string::npos);
  }
  std::ofstream(dir / "junk.ckpt") << "AAUX....";
  EXPECT_THROW(read_checkpoint(dir / "junk.ckpt"), IoError);
  EXPECT_THROW(read_checkpoint(dir / "none.ckpt"), IoError);
  auto ck = checkpoint_from_model(m);
  ck.records.pop_back();
  EXPECT_THROW(model_from_checkpoint(ck), ConfigError);
  auto other = tiny_model();
  other.use_channel_attention = false;
  Model<float> plain(other, 1);
  EXPECT_THROW(load_parameters(plain, checkpoint_from_model(m)), ConfigError);
  fs::remove_all(dir);
}

TEST(Trainer, DeterministicLossLog) {
  auto train = data7().split("train"), val = data7().split("val");
  Trainer a(tiny_train(), train, val), b(tiny_train(), train, val);
  a.run_until(16);
  b.run_until(16);
  EXPECT_EQ(losses(a), losses(b));
  for (double l : losses(a)) EXPECT_TRUE(std::isfinite(l));
}

TEST(Trainer, ResumeContinuesBitIdentically) {
  const auto dir = scratch("resume");
  auto train = data7().split("train"), val = data7().split("val");
  auto cfg = tiny_train();
  cfg.eval_interval = 4;
  Trainer straight(cfg, train, val);
  straight.run_until(16);
  Trainer first(cfg, train, val, dir / "a");
  first.run_until(6);
  first.save_checkpoint(dir / "k6.ckpt");
  auto resumed = Trainer::resume(dir / "k6.ckpt", train, val, dir / "b");
  EXPECT_EQ(resumed.steps_done(), 6);
  resumed.run_until(16);
  const auto full = losses(straight), tail = losses(resumed);
  ASSERT_EQ(tail.size(), 10u);
  for (size_t i = 0; i < 10; ++i) EXPECT_EQ(tail[i], full[6 + i]) << "step " << 7 + i;
  ASSERT_TRUE(resumed.best_val_dice() && straight.best_val_dice());
  EXPECT_EQ(*resumed.best_val_dice(), *straight.best_val_dice()) << std::setprecision(17) << *resumed.best_val_dice() << " vs " << *straight.best_val_dice();
  EXPECT_TRUE(fs::exists(dir / "a" / "metrics.jsonl"));
  fs::remove_all(dir);
}

TEST(Trainer, NonFiniteLossSavesLastGoodStateAndThrows) {
  const auto dir = scratch("nan");
  auto cfg = tiny_train();
  cfg.lr_base = 1e6;
  cfg.lr_max = 1e7;
  cfg.weight_decay = 0;
  Trainer t(cfg, data7().split("train"), data7().split("val"), dir);
  bool threw = false;
  try {
    for (int i = 0; i < 20; ++i) t.step();
  } catch (const NumericError&) {
    threw = true;
  }
  EXPECT_TRUE(threw);
  ASSERT_TRUE(fs::exists(dir / "last.ckpt"));
  auto ck = read_checkpoint(dir / "last.ckpt");
  for (const auto& r : ck.records)
    for (float v : r.values) ASSERT_TRUE(std::isfinite(v)) << r.name;
  fs::remove_all(dir);
}

TEST(Trainer, ValidationLogAndBestCheckpoint) {
  const auto dir = scratch("val");
  auto cfg = tiny_train();
  cfg.max_steps = 4;
  cfg.eval_interval = 2;
  Trainer t(cfg, data7().split("train"), data7().split("val"), dir);
  t.run();
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  int steps = 0, vals = 0;
  while (std::getline(in, line)) {
    auto j = json::parse(line);
    if (j.contains("split")) {
      ++vals;
      EXPECT_TRUE(j.contains("per_class_dice"));
      EXPECT_TRUE(j.contains("mean_dice"));
    } else {
      ++steps;
      EXPECT_TRUE(j.contains("lr") && j.contains("loss") && j.contains("step"));
    }
  }
  EXPECT_EQ(steps, 4);
  EXPECT_EQ(vals, 2);
  EXPECT_TRUE(t.best_val_dice().has_value());
  fs::remove_all(dir);
}

TEST(Ablation, ReferenceRowsVerbatimAndFormat) {
  const auto& rows = reference_rows();
  ASSERT_EQ(rows.size(), 4u);
  const std::array<std::array<double, 7>, 4> expect{{{0.914, 0.8, 0.45, 0.74, 0.877, 0.68, 0.82},
                                                      {0.9318, 0.78, 0.39, 0.63, 0.905, 0.634, 0.792},
                                                      {0.932, 0.777, 0.53, 0.779, 0.843, 0.743, 0.868},
                                                      {0.924, 0.82, 0.567, 0.816, 0.906, 0.71, 0.858}}};
  const std::array<std::string, 4> names{"RSU", "RSU+S", "RSU+C", "RSU+SC"};
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rows[i].variant, names[i]);
    for (size_t c = 0; c < 7; ++c) EXPECT_EQ(rows[i].dice[c], expect[i][c]);
  }
  auto variants = ablation_variants(ModelConfig{});
  ASSERT_EQ(variants.size(), 4u);
  for (size_t i = 0; i < 4; ++i) EXPECT_EQ(variants[i].variant_name(), names[i]);

  const auto dir = scratch("abl");
  auto cfg = tiny_train();
  cfg.max_steps = 2;
  auto out = run_ablation(data7(), cfg, dir, ablation_variants(tiny_model()));
  ASSERT_EQ(out.size(), 4u);
  auto j = json::parse(std::ifstream(dir / "ablation.json"));
  EXPECT_EQ(j.at("trained").size(), 4u);
  EXPECT_EQ(j.at("reference").at("rows").size(), 4u);
  const auto md = ablation_markdown(out);
  EXPECT_NE(md.find(kReferenceLabel), std::string::npos);
  for (const char* col : {"ICH", "SDH", "SAH", "EDH", "CSDH", "Pneumocranium", "IVH"})
    EXPECT_NE(md.find(col), std::string::npos);
  fs::remove_all(dir);
}
