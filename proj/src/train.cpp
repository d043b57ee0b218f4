#include "aaunet/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aaunet/augment.hpp"
#include "aaunet/errors.hpp"

namespace aaunet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint64_t kBatchStream = 0xba7c4;

AdamWConfig adamw_config(const TrainConfig& c) {
  return {c.beta1, c.beta2, c.adam_eps, c.weight_decay};
}

json dice_json(const DiceReport& r) {
  json j = r.to_json();
  j.erase("config_echo");
  return j;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, std::vector<const PhantomCase*> train,
                 std::vector<const PhantomCase*> val, fs::path out_dir)
    : cfg_(cfg),
      train_(std::move(train)),
      val_(std::move(val)),
      out_dir_(std::move(out_dir)),
      model_((cfg.validate(), cfg.model), cfg.seed),
      opt_(adamw_config(cfg)) {
  if (train_.empty()) throw ConfigError("training split is empty");
  samples_ = enumerate_samples(train_);
  weights_ = inverse_frequency_weights(train_, cfg_.weight_clip);
  int classes = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    bool seen = false;
    for (const auto* pc : train_) {
      for (const auto& m : pc->masks) {
        if (std::find(m.labels.begin(), m.labels.end(), c) != m.labels.end()) {
          seen = true;
          break;
        }
      }
      if (seen) break;
    }
    classes += seen ? 1 : 0;
  }
  if (classes < 2) throw ConfigError("training split must contain at least two classes");
  const int64_t size = train_.front()->size;
  if (size % 32 != 0) throw ConfigError("slice size must be divisible by 32");
  if (!out_dir_.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    if (ec) throw IoError("cannot create " + out_dir_.string() + ": " + ec.message());
  }
}

Trainer Trainer::resume(const fs::path& checkpoint, std::vector<const PhantomCase*> train,
                        std::vector<const PhantomCase*> val, fs::path out_dir) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  if (!ck.header.contains("train_config") || !ck.header.contains("step")) {
    throw ConfigError("checkpoint " + checkpoint.string() + " holds no training state");
  }
  TrainConfig cfg = train_config_from_json(ck.header.at("train_config"));
  if (to_json(cfg.model) != ck.header.at("model_config")) {
    throw ConfigError("checkpoint model_config and train_config.model disagree");
  }
  Trainer t(cfg, std::move(train), std::move(val), std::move(out_dir));
  load_parameters(t.model_, ck);
  t.steps_done_ = ck.header.at("step").get<int64_t>();
  t.opt_.set_steps(ck.header.value("adamw_steps", int64_t(0)));
  if (ck.header.contains("best_val_mean_dice") && !ck.header["best_val_mean_dice"].is_null()) {
    t.best_ = ck.header["best_val_mean_dice"].get<double>();
  }
  for (const auto& [name, p] : t.model_.params().entries()) {
    const auto* m = ck.find("adamw.m/" + name);
    const auto* v = ck.find("adamw.v/" + name);
    if (m && v) t.opt_.slots()[name] = {m->values, v->values};
    if (const auto* b = ck.find("best/" + name)) t.best_values_.push_back(b->values);
  }
  if (t.best_values_.size() != t.model_.params().entries().size()) t.best_values_.clear();
  return t;
}

void Trainer::log(const json& record) const {
  if (out_dir_.empty()) return;
  std::ofstream out(out_dir_ / "metrics.jsonl", std::ios::app);
  out << record.dump() << "\n";
}

double Trainer::step() {
  const int64_t k = steps_done_;
  const double lr = cyclic_lr(k, cfg_.lr_base, cfg_.lr_max, cfg_.cycle_length_steps);
  Rng rng(mix_seed(mix_seed(cfg_.seed, kBatchStream), static_cast<uint64_t>(k)));

  // Without replacement while the batch fits in the sample pool.
  std::vector<size_t> pool;
  std::vector<SliceStack> stacks;
  std::vector<SegMask> masks;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    if (pool.empty()) {
      pool.resize(samples_.size());
      for (size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    }
    const size_t j = static_cast<size_t>(rng.uniform_int(0, int64_t(pool.size()) - 1));
    const SampleRef ref = samples_[pool[j]];
    pool[j] = pool.back();
    pool.pop_back();
    const PhantomCase& pc = *train_[static_cast<size_t>(ref.case_index)];
    auto [x, m] = augment(stack_slices(pc, ref.slice), pc.masks[static_cast<size_t>(ref.slice)],
                          rng.next(), cfg_.augment);
    stacks.push_back(std::move(x));
    masks.push_back(std::move(m));
  }

  const TensorF logits = model_.logits(stacks_to_tensor(stacks));
  TensorF loss = focal_loss(logits, std::span<const SegMask>(masks), weights_, cfg_.focal_gamma);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    if (!out_dir_.empty()) save_checkpoint(out_dir_ / "last.ckpt");
    throw NumericError("non-finite loss at step " + std::to_string(k + 1) +
                       "; last good state kept" +
                       (out_dir_.empty() ? std::string() : " in " + (out_dir_ / "last.ckpt").string()));
  }
  model_.params().zero_grad();
  loss.backward();
  try {
    opt_.step(model_.params(), lr);
  } catch (const NumericError&) {
    // AdamW leaves the parameters untouched when it rejects a step.
    if (!out_dir_.empty()) save_checkpoint(out_dir_ / "last.ckpt");
    throw;
  }
  ++steps_done_;
  history_.push_back({steps_done_, lr, value});
  log({{"step", steps_done_}, {"lr", lr}, {"loss", value}});

  if (cfg_.eval_interval > 0 && steps_done_ % cfg_.eval_interval == 0) validate();
  if (cfg_.checkpoint_interval > 0 && steps_done_ % cfg_.checkpoint_interval == 0 &&
      !out_dir_.empty()) {
    save_checkpoint(out_dir_ / "last.ckpt");
  }
  return value;
}

void Trainer::run_until(int64_t until) {
  until = std::min(until, cfg_.max_steps);
  while (steps_done_ < until) step();
}

void Trainer::run() {
  run_until(cfg_.max_steps);
  if (!out_dir_.empty()) save_checkpoint(out_dir_ / "last.ckpt");
}

std::optional<DiceReport> Trainer::validate() {
  if (val_.empty()) return std::nullopt;
  DiceReport r = evaluate(model_, val_, cfg_.eval_batch);
  json rec = {{"step", steps_done_}, {"split", "val"}};
  const json dj = dice_json(r);
  rec["per_class_dice"] = dj["per_class"];
  rec["mean_dice"] = dj["mean_dice"];
  log(rec);
  const double score = r.mean_dice.value_or(0.0);
  if (!best_ || score > *best_) {
    best_ = score;
    best_values_.clear();
    for (const auto& [name, p] : model_.params().entries()) {
      best_values_.emplace_back(p.data().begin(), p.data().end());
    }
    if (!out_dir_.empty()) {
      Checkpoint ck = checkpoint_from_model(model_);
      ck.header["train_config"] = to_json(cfg_);
      ck.header["step"] = steps_done_;
      ck.header["best_val_mean_dice"] = *best_;
      write_checkpoint(out_dir_ / "best.ckpt", ck);
    }
  }
  return r;
}

Model<float> Trainer::best_model() const {
  Model<float> m(cfg_.model, cfg_.seed);
  const auto& src = model_.params().entries();
  const auto& dst = m.params().entries();
  for (size_t i = 0; i < dst.size(); ++i) {
    Tensor<float> handle = dst[i].second;
    if (best_values_.empty()) {
      std::copy(src[i].second.data().begin(), src[i].second.data().end(), handle.data().begin());
    } else {
      std::copy(best_values_[i].begin(), best_values_[i].end(), handle.data().begin());
    }
  }
  return m;
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint ck = checkpoint_from_model(model_);
  ck.header["train_config"] = to_json(cfg_);
  ck.header["step"] = steps_done_;
  ck.header["adamw_steps"] = opt_.steps();
  ck.header["best_val_mean_dice"] = best_ ? json(*best_) : json(nullptr);
  const auto& entries = model_.params().entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, p] = entries[i];
    const auto it = opt_.slots().find(name);
    if (it != opt_.slots().end()) {
      ck.records.push_back({"adamw.m/" + name, p.shape(), it->second.m});
      ck.records.push_back({"adamw.v/" + name, p.shape(), it->second.v});
    }
    if (!best_values_.empty()) ck.records.push_back({"best/" + name, p.shape(), best_values_[i]});
  }
  return ck;
}

void Trainer::save_checkpoint(const fs::path& path) const { write_checkpoint(path, make_checkpoint()); }

const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"RSU", {0.914, 0.8, 0.45, 0.74, 0.877, 0.68, 0.82}},
      {"RSU+S", {0.9318, 0.78, 0.39, 0.63, 0.905, 0.634, 0.792}},
      {"RSU+C", {0.932, 0.777, 0.53, 0.779, 0.843, 0.743, 0.868}},
      {"RSU+SC", {0.924, 0.82, 0.567, 0.816, 0.906, 0.71, 0.858}},
  };
  return rows;
}

std::vector<ModelConfig> ablation_variants(const ModelConfig& base) {
  std::vector<ModelConfig> out;
  for (auto [s, c] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}}) {
    ModelConfig m = base;
    m.use_space_attention = s;
    m.use_channel_attention = c;
    out.push_back(m);
  }
  return out;
}

std::vector<AblationRow> run_ablation(const Dataset& data, const TrainConfig& base,
                                      const fs::path& out_dir,
                                      const std::vector<ModelConfig>& variants) {
  const auto configs = variants.empty() ? ablation_variants(base.model) : variants;
  const auto train = data.split("train"), val = data.split("val"), test = data.split("test");
  if (test.empty()) throw ConfigError("ablation needs a non-empty test split");
  std::vector<AblationRow> rows;
  for (const auto& mc : configs) {
    TrainConfig cfg = base;
    cfg.model = mc;
    const auto start = std::chrono::steady_clock::now();
    Trainer t(cfg, train, val, out_dir.empty() ? fs::path() : out_dir / mc.variant_name());
    t.run();
    if (t.best_val_dice() == std::nullopt || cfg.eval_interval == 0 ||
        cfg.max_steps % cfg.eval_interval != 0) {
      t.validate();
    }
    AblationRow row;
    row.variant = mc.variant_name();
    row.test_report = evaluate(t.best_model(), test, cfg.eval_batch);
    row.test_report.config_echo = to_json(cfg);
    row.steps = t.steps_done();
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(std::move(row));
    std::fprintf(stderr, "ablation: %s done in %.0f s\n", rows.back().variant.c_str(),
                 rows.back().seconds);
  }
  if (!out_dir.empty()) {
    std::ofstream(out_dir / "ablation.json") << ablation_json(rows).dump(2) << "\n";
    std::ofstream(out_dir / "ablation.md") << ablation_markdown(rows);
  }
  return rows;
}

json ablation_json(const std::vector<AblationRow>& rows) {
  json trained = json::array();
  for (const auto& r : rows) {
    const json dj = dice_json(r.test_report);
    trained.push_back({{"variant", r.variant},
                       {"per_class", dj["per_class"]},
                       {"mean_dice", dj["mean_dice"]},
                       {"support", dj["support"]},
                       {"steps", r.steps},
                       {"seconds", r.seconds}});
  }
  json refs = json::array();
  for (const auto& ref : reference_rows()) {
    json per = json::object();
    for (int c = 0; c < kNumLesionClasses; ++c) per[std::string(kClassNames[c + 1])] = ref.dice[c];
    refs.push_back({{"variant", ref.variant}, {"per_class", per}});
  }
  return {{"classes", json(std::vector<std::string>(kClassNames.begin() + 1, kClassNames.end()))},
          {"trained", trained},
          {"reference", {{"label", kReferenceLabel}, {"rows", refs}}}};
}

std::string ablation_markdown(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  auto cell = [](const std::optional<double>& v) {
    char buf[16];
    if (!v) return std::string("n/a");
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return std::string(buf);
  };
  os << "| Method |";
  for (int c = 1; c < kNumClasses; ++c) os << " " << kClassNames[c] << " |";
  os << " Mean |\n|---|";
  for (int c = 0; c <= kNumLesionClasses; ++c) os << "---|";
  os << "\n";
  for (const auto& r : rows) {
    os << "| " << r.variant << " |";
    for (int c = 1; c < kNumClasses; ++c) os << " " << cell(r.test_report.per_class[c]) << " |";
    os << " " << cell(r.test_report.mean_dice) << " |\n";
  }
  for (const auto& ref : reference_rows()) {
    os << "| " << ref.variant << ", " << kReferenceLabel << " |";
    double sum = 0;
    for (double d : ref.dice) {
      os << " " << cell(d) << " |";
      sum += d;
    }
    os << " " << cell(sum / kNumLesionClasses) << " |\n";
  }
  return os.str();
}

}  // namespace aaunet
