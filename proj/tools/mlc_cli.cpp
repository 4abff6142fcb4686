// mlc: command-line front end for dataset generation, training, evaluation
// and the diagnostic subcommands.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "mlc/checkpoint.hpp"
#include "mlc/config.hpp"
#include "mlc/dataset.hpp"
#include "mlc/gradcheck_suite.hpp"
#include "mlc/label_graph.hpp"
#include "mlc/losses.hpp"
#include "mlc/metrics.hpp"
#include "mlc/model.hpp"
#include "mlc/synth.hpp"
#include "mlc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mlc;

namespace {

struct Flags {
  std::string config, data, out, checkpoint, thresholds, spec, module = "all";
  std::optional<std::uint64_t> seed;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required flag ") + flag);
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

// --out, then the MLC_OUT_DIR environment variable, then the fallback.
fs::path output_dir(const Flags& f, const std::string& fallback) {
  if (!f.out.empty()) return f.out;
  if (const char* env = std::getenv("MLC_OUT_DIR"); env && *env) return env;
  return fallback;
}

RunConfig config_from_checkpoint(const Checkpoint& ckpt) { return RunConfig::from_json(ckpt.config); }

Model model_from_checkpoint(const Checkpoint& ckpt, const RunConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.classes = ckpt.get("classifier.weight").dim(0);
  Model model(mc, cfg.seed, graph_from_checkpoint(ckpt));
  model.load_state(ckpt);
  if (uses_gat(mc.head)) model.freeze();
  return model;
}

int gen_synth(const Flags& f) {
  SynthSpec spec = f.spec.empty() ? SynthSpec::reference() : SynthSpec::from_json(read_json(f.spec));
  if (f.seed) spec.seed = *f.seed;
  const fs::path out = output_dir(f, "data");
  auto ds = generate_synthetic(spec);
  save_dataset(out, ds);
  save_embeddings(out / "embeddings.txt", synthetic_embeddings(spec, ds.class_names));
  write_text(out / "synth_spec.json", spec.to_json().dump(2) + "\n");
  std::cout << "wrote " << ds.size() << " samples, " << ds.classes() << " classes, "
            << ds.avg_labels_per_image() << " labels per image to " << out.string() << "\n";
  return 0;
}

int train_cmd(const Flags& f) {
  require(f.data, "--data");
  RunConfig cfg = f.config.empty() ? RunConfig::from_json(json::object()) : RunConfig::load(f.config);
  if (f.seed) cfg.seed = *f.seed;
  const fs::path out = output_dir(f, cfg.out_dir);
  cfg.out_dir = out.string();
  auto data = load_dataset(f.data);
  Model model = build_model(cfg, data, f.data);
  fs::create_directories(out);
  std::ofstream log(out / "train_log.jsonl");
  auto result = train(model, data, cfg, &log);
  save_checkpoint(out / "checkpoint.mlc", model.to_checkpoint(cfg.to_json()));
  write_text(out / "config.json", cfg.to_json().dump(2) + "\n");
  std::cout << "epochs " << result.log.size() << ", best EMA val mAP " << result.best_ema_map << " at epoch "
            << result.best_epoch << "\n";
  return 0;
}

json table_row(const EvalReport& r) { return {{"mAP", r.map}, {"CP", r.cp}, {"CR", r.cr}, {"CF1", r.cf1}, {"OP", r.op}, {"OR", r.orc}, {"OF1", r.of1}}; }

int eval_cmd(const Flags& f) {
  require(f.checkpoint, "--checkpoint");
  require(f.data, "--data");
  auto ckpt = load_checkpoint(f.checkpoint);
  RunConfig cfg = config_from_checkpoint(ckpt);
  Model model = model_from_checkpoint(ckpt, cfg);
  auto data = load_dataset(f.data);
  const auto rows = data.indices(Split::kVal);
  const Tensor labels = data.batch_labels(rows);
  const Tensor scores = predict(model, data, rows, cfg);
  std::vector<double> half(data.classes(), 0.5);
  auto base = overall_and_per_class(scores, labels, half);
  json report = base.to_json();
  json table = table_row(base);
  if (!f.thresholds.empty()) {
    auto cal = Calibration::from_json(read_json(f.thresholds));
    if (cal.thresholds.size() != data.classes()) throw DimensionError("threshold file does not match the class count");
    auto adapt = overall_and_per_class(scores, labels, cal.thresholds);
    report["adapt"] = adapt.to_json();
    table["OF1-adapt"] = adapt.of1;
    table["CF1-adapt"] = adapt.cf1;
    table["OF1-delta"] = adapt.of1 - base.of1;
    table["CF1-delta"] = adapt.cf1 - base.cf1;
  }
  report["table"] = table;
  const fs::path out = output_dir(f, fs::path(f.checkpoint).parent_path().string());
  write_text(out / "eval_report.json", report.dump(2) + "\n");
  std::ostringstream csv;
  base.write_csv(csv);
  write_text(out / "eval_report.csv", csv.str());
  std::cout << table.dump() << "\n";
  return 0;
}

int calibrate_cmd(const Flags& f) {
  require(f.checkpoint, "--checkpoint");
  require(f.data, "--data");
  auto ckpt = load_checkpoint(f.checkpoint);
  RunConfig cfg = config_from_checkpoint(ckpt);
  Model model = model_from_checkpoint(ckpt, cfg);
  auto data = load_dataset(f.data);
  const auto rows = data.indices(Split::kTrain);
  auto cal = calibrate_thresholds(predict(model, data, rows, cfg), data.batch_labels(rows), default_grid());
  const fs::path out = output_dir(f, fs::path(f.checkpoint).parent_path().string());
  write_text(out / "thresholds.json", cal.to_json().dump(2) + "\n");
  std::cout << "calibrated " << cal.thresholds.size() << " thresholds on the training split";
  if (!cal.no_positive.empty()) std::cout << " (" << cal.no_positive.size() << " classes without positives kept 0.5)";
  std::cout << "\n";
  return 0;
}

int freeze_cmd(const Flags& f) {
  require(f.checkpoint, "--checkpoint");
  auto ckpt = load_checkpoint(f.checkpoint);
  RunConfig cfg = config_from_checkpoint(ckpt);
  if (!uses_gat(cfg.model.head)) throw std::invalid_argument("head '" + to_string(cfg.model.head) + "' has no graph branch to freeze");
  ModelConfig mc = cfg.model;
  mc.classes = ckpt.get("classifier.weight").dim(0);
  Model model(mc, cfg.seed, graph_from_checkpoint(ckpt));
  model.load_state(ckpt);
  auto frozen = model.compute_channel_weights();
  const fs::path out = output_dir(f, fs::path(f.checkpoint).parent_path().string());
  fs::create_directories(out);
  frozen.save(out / "frozen_graph.json");
  std::cout << "froze " << frozen.weights.size() << " channel weights\n";
  return 0;
}

int gradcheck_cmd(const Flags& f) {
  bool ok = true;
  for (const auto& name : gradcheck_module_suites(f.module)) {
    auto r = run_gradcheck_suite(name, 100);
    std::cout << (r.passed() ? "PASS " : "FAIL ") << name << " seeds=" << r.seeds << " max_rel_err=" << r.worst
              << " tol=" << r.tolerance;
    if (!r.failure.empty()) std::cout << " " << r.failure;
    std::cout << "\n";
    ok = ok && r.passed();
  }
  if (!ok) throw DomainError("gradient check failed");
  return 0;
}

int curves_cmd(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig::from_json(json::object()) : RunConfig::load(f.config);
  std::vector<double> grid;
  for (int i = -100; i <= 100; ++i) grid.push_back(i / 100.0);
  auto points = aam_part_curves(cfg.aam, grid);
  std::ostringstream csv;
  write_curves_csv(csv, points);
  const fs::path out = output_dir(f, cfg.out_dir);
  write_text(out / "loss_curves.csv", csv.str());
  std::cout << "wrote " << points.size() << " points to " << (out / "loss_curves.csv").string() << "\n";
  return 0;
}

std::string kind_of(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const GraphStructureError*>(&e)) return "graph";
  if (dynamic_cast<const InfeasibleSpecError*>(&e)) return "infeasible";
  if (dynamic_cast<const TrainingError*>(&e)) return "training";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "config";
  if (dynamic_cast<const std::runtime_error*>(&e)) return "io";
  return "internal";
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multilabel classification toolkit"};
  app.require_subcommand(1);
  Flags f;
  auto add = [&](CLI::App* sub, std::initializer_list<const char*> flags) {
    for (std::string flag : flags) {
      if (flag == "--config") sub->add_option("--config", f.config, "run config JSON");
      if (flag == "--data") sub->add_option("--data", f.data, "dataset directory");
      if (flag == "--out") sub->add_option("--out", f.out, "output directory");
      if (flag == "--seed") sub->add_option("--seed", f.seed, "seed override");
      if (flag == "--checkpoint") sub->add_option("--checkpoint", f.checkpoint, "checkpoint file");
      if (flag == "--thresholds") sub->add_option("--thresholds", f.thresholds, "calibrated thresholds JSON");
      if (flag == "--spec") sub->add_option("--spec", f.spec, "synthetic dataset spec JSON");
      if (flag == "--module") sub->add_option("--module", f.module, "losses | label-graph | decoder-head | backbone | all");
    }
    return sub;
  };
  std::function<int(const Flags&)> action;
  auto bind = [&](CLI::App* sub, std::function<int(const Flags&)> fn) { sub->callback([&action, fn] { action = fn; }); };
  bind(add(app.add_subcommand("gen-synth", "generate a synthetic correlated-label dataset"), {"--spec", "--out", "--seed"}), gen_synth);
  bind(add(app.add_subcommand("train", "train a model"), {"--config", "--data", "--out", "--seed"}), train_cmd);
  bind(add(app.add_subcommand("eval", "evaluate a checkpoint on the validation split"),
           {"--checkpoint", "--data", "--thresholds", "--out"}),
       eval_cmd);
  bind(add(app.add_subcommand("calibrate", "fit per-class thresholds on the training split"),
           {"--checkpoint", "--data", "--out"}),
       calibrate_cmd);
  bind(add(app.add_subcommand("freeze-graph", "precompute the graph branch channel weights"), {"--checkpoint", "--out"}),
       freeze_cmd);
  bind(add(app.add_subcommand("gradcheck", "finite-difference gradient checks"), {"--module", "--seed"}), gradcheck_cmd);
  bind(add(app.add_subcommand("loss-curves", "tabulate the AAM loss parts over cos"), {"--config", "--out"}), curves_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }
  try {
    return action(f);
  } catch (const std::exception& e) {
    std::cerr << "error: " << kind_of(e) << ": " << one_line(e.what()) << "\n";
    return kind_of(e) == "usage" ? 2 : 1;
  }
}
