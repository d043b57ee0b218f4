// aaunet command-line tool. Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aaunet/checkpoint.hpp"
#include "aaunet/config.hpp"
#include "aaunet/dataset.hpp"
#include "aaunet/errors.hpp"
#include "aaunet/metrics.hpp"
#include "aaunet/overlay.hpp"
#include "aaunet/png_io.hpp"
#include "aaunet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace aaunet;

namespace {

constexpr const char* kPaletteHelp =
    "Overlay palette: ICH red, SDH blue, SAH yellow, EDH green, CSDH magenta, "
    "Pneumocranium cyan, IVH orange; background keeps the grey image.";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out);
  return out;
}

// "a.b.c=value"; value is parsed as JSON when possible, else taken as a string.
void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

struct TrainFlags {
  std::string config, data, out;
  std::vector<std::string> sets;
  bool no_space = false, no_channel = false;
  std::optional<int64_t> steps, eval_interval;
  std::optional<uint64_t> seed;
  std::optional<int> batch;
  std::optional<double> lr_base, lr_max;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config, "JSON config: TrainConfig fields plus optional \"data\"");
  cmd->add_option("--data", f.data, "dataset directory (overrides the config's \"data\")");
  cmd->add_option("--out", f.out, "output directory")->required();
  cmd->add_flag("--no-space-attn", f.no_space, "disable the spatial attention gates");
  cmd->add_flag("--no-channel-attn", f.no_channel, "disable decoder channel attention");
  cmd->add_option("--steps", f.steps, "max_steps");
  cmd->add_option("--seed", f.seed, "seed");
  cmd->add_option("--batch-size", f.batch, "batch_size");
  cmd->add_option("--lr-base", f.lr_base, "lr_base");
  cmd->add_option("--lr-max", f.lr_max, "lr_max");
  cmd->add_option("--eval-interval", f.eval_interval, "eval_interval (0 disables)");
  cmd->add_option("--set", f.sets, "override any config field, e.g. --set model.encoder.base_width=16");
}

// Resolved config plus the dataset path; echo() reproduces it.
struct CliConfig {
  TrainConfig train;
  std::string data;
  json echo() const {
    json j = to_json(train);
    j["data"] = data;
    return j;
  }
};

CliConfig resolve(const TrainFlags& f) {
  json j = f.config.empty() ? json::object() : read_json_file(f.config);
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& s : f.sets) apply_override(j, s);
  if (f.steps) j["max_steps"] = *f.steps;
  if (f.seed) j["seed"] = *f.seed;
  if (f.batch) j["batch_size"] = *f.batch;
  if (f.lr_base) j["lr_base"] = *f.lr_base;
  if (f.lr_max) j["lr_max"] = *f.lr_max;
  if (f.eval_interval) j["eval_interval"] = *f.eval_interval;
  if (f.no_space) j["model"]["use_space_attention"] = false;
  if (f.no_channel) j["model"]["use_channel_attention"] = false;
  CliConfig c;
  if (j.contains("data")) {
    if (!j["data"].is_string()) throw ConfigError("\"data\" must be a string");
    c.data = j["data"].get<std::string>();
    j.erase("data");
  }
  if (!f.data.empty()) c.data = f.data;
  if (c.data.empty()) throw UsageError("no dataset: pass --data or set \"data\" in the config");
  c.train = train_config_from_json(j);
  c.train.validate();
  return c;
}

Dataset open_dataset(const std::string& root) {
  if (!fs::exists(fs::path(root) / "manifest.json")) {
    throw IoError("missing manifest: " + (fs::path(root) / "manifest.json").string());
  }
  return load_dataset(root);
}

// "/encoder/base_width" -> "model.encoder.base_width"
std::string dotted(const std::string& pointer) {
  std::string s = "model";
  for (char ch : pointer) s += ch == '/' ? '.' : ch;
  return s;
}

// A --config given next to a checkpoint must describe the same model.
void check_config_matches(const Checkpoint& ck, const std::string& config_path) {
  if (config_path.empty()) return;
  json j = read_json_file(config_path);
  j.erase("data");
  const TrainConfig cfg = train_config_from_json(j);
  const json want = to_json(cfg.model), have = ck.header.at("model_config");
  const json patch = json::diff(have, want);
  if (patch.empty()) return;
  const std::string ptr = patch[0].at("path").get<std::string>();
  const json::json_pointer jp(ptr);
  std::ostringstream os;
  os << "checkpoint/config mismatch at " << dotted(ptr) << ": checkpoint "
     << (have.contains(jp) ? have.at(jp).dump() : "absent") << ", config "
     << (want.contains(jp) ? want.at(jp).dump() : "absent");
  throw ConfigError(os.str());
}

void print_report(const DiceReport& r) { std::cout << r.to_json().dump(2) << std::endl; }

// ---------------------------------------------------------------------------

int cmd_generate(uint64_t seed, int cases, int size, const std::string& out) {
  const fs::path root = prepare_out(out);
  const auto m = write_dataset(root, seed, cases, size);
  write_json_file(root / "effective_config.json",
                  {{"command", "generate-data"}, {"seed", seed}, {"cases", cases}, {"size", size}});
  const auto c = m.counts();
  std::cout << "wrote " << m.cases.size() << " cases to " << root.string() << " (split " << c.train << "/"
            << c.val << "/" << c.test << ", lesion-free fraction " << m.lesion_free_fraction << ")\n";
  return 0;
}

int cmd_train(const TrainFlags& f) {
  const CliConfig c = resolve(f);
  const Dataset ds = open_dataset(c.data);
  const fs::path out = prepare_out(f.out);
  write_json_file(out / "effective_config.json", c.echo());
  Trainer t(c.train, ds.split("train"), ds.split("val"), out);
  t.run();
  DiceReport rep = evaluate(t.best_model(), ds.split("test"), c.train.eval_batch);
  rep.config_echo = c.echo();
  write_json_file(out / "test_report.json", rep.to_json());
  print_report(rep);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& split,
             const std::string& config, const std::string& out) {
  if (split != "train" && split != "val" && split != "test") throw UsageError("unknown split '" + split + "'");
  const Checkpoint ck = read_checkpoint(checkpoint);
  check_config_matches(ck, config);
  const Model<float> model = model_from_checkpoint(ck);
  const Dataset ds = open_dataset(data);
  DiceReport rep = evaluate(model, ds.split(split));
  rep.config_echo = {{"checkpoint", checkpoint}, {"data", data}, {"split", split}, {"model", ck.header.at("model_config")}};
  if (!out.empty()) {
    const fs::path dir = prepare_out(out);
    write_json_file(dir / "effective_config.json",
                    {{"command", "eval"}, {"checkpoint", checkpoint}, {"data", data}, {"split", split}});
    write_json_file(dir / "report.json", rep.to_json());
  }
  print_report(rep);
  return 0;
}

std::string slice_name(const char* prefix, int s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.png", prefix, s);
  return buf;
}

int cmd_predict(const std::string& checkpoint, const std::string& case_dir, const std::string& config,
                const std::string& out) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  check_config_matches(ck, config);
  const Model<float> model = model_from_checkpoint(ck);
  const PhantomCase pc = load_case(case_dir);
  const fs::path dir = prepare_out(out);
  write_json_file(dir / "effective_config.json",
                  {{"command", "predict"}, {"checkpoint", checkpoint}, {"case", case_dir}});
  NoGradGuard no_grad;
  constexpr int kBatch = 8;
  int alpha_maps = 0;
  for (int s0 = 0; s0 < pc.n_slices(); s0 += kBatch) {
    std::vector<SliceStack> stacks;
    for (int s = s0; s < std::min(pc.n_slices(), s0 + kBatch); ++s) stacks.push_back(stack_slices(pc, s));
    const auto fwd = model.forward(stacks_to_tensor(stacks));
    const auto masks = predict_mask(fwd.logits);
    for (size_t i = 0; i < masks.size(); ++i) {
      const int s = s0 + static_cast<int>(i);
      write_mask_png(dir / slice_name("mask", s), masks[i]);
      write_rgb8_png(dir / slice_name("overlay", s), pc.size, pc.size,
                     render_overlay(pc.images[static_cast<size_t>(s)], masks[i]));
      for (size_t g = 0; g < fwd.alphas.size(); ++g) {
        const auto& a = fwd.alphas[g];
        const int64_t h = a.dim(2), w = a.dim(3);
        const auto v = a.data();
        std::vector<uint8_t> px(static_cast<size_t>(h * w));
        for (size_t p = 0; p < px.size(); ++p) px[p] = to_gray8(v[i * px.size() + p]);
        const std::string prefix = "alpha" + std::to_string(g);
        write_gray8_png(dir / slice_name(prefix.c_str(), s), h, w, px);
        ++alpha_maps;
      }
    }
  }
  std::cout << "wrote " << pc.n_slices() << " masks and overlays, " << alpha_maps << " attention maps to "
            << dir.string() << "\n";
  return 0;
}

int cmd_inspect(const std::string& checkpoint, const std::string& out) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  const Model<float> model = model_from_checkpoint(ck);
  std::ostringstream os;
  os << "config:\n" << ck.header.dump(2) << "\n";
  os << "variant: " << model.config().variant_name() << "\n";
  os << "parameters:\n";
  for (const auto& [name, t] : model.params().entries()) os << "  " << name << " " << shape_str(t.shape()) << "\n";
  os << "tensors: " << model.params().entries().size() << "\n";
  os << "parameter count: " << model.params().scalar_count() << "\n";
  if (!out.empty()) {
    const fs::path dir = prepare_out(out);
    write_json_file(dir / "effective_config.json", {{"command", "inspect"}, {"checkpoint", checkpoint}});
    std::ofstream(dir / "inspect.txt") << os.str();
  }
  std::cout << os.str();
  return 0;
}

int cmd_ablation(const TrainFlags& f) {
  const CliConfig c = resolve(f);
  const Dataset ds = open_dataset(c.data);
  const fs::path out = prepare_out(f.out);
  write_json_file(out / "effective_config.json", c.echo());
  const auto rows = run_ablation(ds, c.train, out);
  std::cout << ablation_markdown(rows);
  return 0;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"All-attention U-Net: synthetic data, training, evaluation and prediction"};
  app.require_subcommand(1);

  uint64_t gen_seed = 0;
  int gen_cases = 51, gen_size = 128;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate-data", "write a synthetic head-phantom dataset");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--cases", gen_cases, "number of patient cases (>= 7)");
  gen->add_option("--size", gen_size, "slice size, a multiple of 32");
  gen->add_option("--out", gen_out, "dataset directory")->required();

  TrainFlags train_flags, ablation_flags;
  add_train_flags(app.add_subcommand("train", "train one model; prints the test DiceReport"), train_flags);
  add_train_flags(app.add_subcommand("ablation", "train the RSU / RSU+S / RSU+C / RSU+SC variants"),
                  ablation_flags);

  std::string ev_ckpt, ev_data, ev_split = "test", ev_config, ev_out;
  auto* ev = app.add_subcommand("eval", "Dice report of a checkpoint on one split");
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--split", ev_split, "train, val or test");
  ev->add_option("--config", ev_config, "optional config; its model must match the checkpoint");
  ev->add_option("--out", ev_out, "optional directory for report.json");

  std::string pr_ckpt, pr_case, pr_config, pr_out;
  auto* pr = app.add_subcommand("predict", std::string("masks, overlays and attention maps for one case. ") + kPaletteHelp);
  pr->add_option("--checkpoint", pr_ckpt)->required();
  pr->add_option("--case", pr_case, "case directory (cases/<id> of a dataset)")->required();
  pr->add_option("--config", pr_config, "optional config; its model must match the checkpoint");
  pr->add_option("--out", pr_out)->required();

  std::string in_ckpt, in_out;
  auto* in = app.add_subcommand("inspect", "print the config and parameter registry of a checkpoint");
  in->add_option("--checkpoint", in_ckpt)->required();
  in->add_option("--out", in_out, "optional directory for inspect.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*gen) return guarded([&] { return cmd_generate(gen_seed, gen_cases, gen_size, gen_out); });
  if (app.got_subcommand("train")) return guarded([&] { return cmd_train(train_flags); });
  if (app.got_subcommand("ablation")) return guarded([&] { return cmd_ablation(ablation_flags); });
  if (*ev) return guarded([&] { return cmd_eval(ev_ckpt, ev_data, ev_split, ev_config, ev_out); });
  if (*pr) return guarded([&] { return cmd_predict(pr_ckpt, pr_case, pr_config, pr_out); });
  if (*in) return guarded([&] { return cmd_inspect(in_ckpt, in_out); });
  return 2;
}
