#include "mlc/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

namespace mlc {

namespace {

struct Preset {
  double s, lr, gamma_neg, gamma_pos;
  LossKind loss;
};

const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> table{
      {"coco", {23, 0.007, 1, 0, LossKind::kAam}},   {"voc", {17, 0.005, 2, 1, LossKind::kAam}},
      {"nus", {23, 0.009, 2, 1, LossKind::kAam}},    {"vg500", {25, 0.005, 1, 0, LossKind::kAam}},
      {"asl", {23, 0.0001, 4, 0, LossKind::kAsl}},
  };
  return table;
}

using Setter = std::function<void(RunConfig&, const nlohmann::json&)>;

template <typename T>
Setter set(T RunConfig::*field) {
  return [field](RunConfig& c, const nlohmann::json& v) { c.*field = v.get<T>(); };
}

template <typename F>
Setter with(F f) {
  return [f](RunConfig& c, const nlohmann::json& v) { f(c, v); };
}

const std::map<std::string, Setter>& setters() {
  using J = const nlohmann::json&;
  static const std::map<std::string, Setter> table{
      {"seed", set(&RunConfig::seed)},
      {"out_dir", set(&RunConfig::out_dir)},
      {"model.head", with([](RunConfig& c, J v) { c.model.head = parse_head(v.get<std::string>()); })},
      {"model.input_channels", with([](RunConfig& c, J v) { c.model.backbone.in_channels = v.get<std::size_t>(); })},
      {"model.height", with([](RunConfig& c, J v) { c.model.backbone.height = v.get<std::size_t>(); })},
      {"model.width", with([](RunConfig& c, J v) { c.model.backbone.width = v.get<std::size_t>(); })},
      {"model.stage_widths",
       with([](RunConfig& c, J v) { c.model.backbone.stage_widths = v.get<std::vector<std::size_t>>(); })},
      {"model.decoder.groups", with([](RunConfig& c, J v) { c.model.decoder.groups = v.get<std::size_t>(); })},
      {"model.decoder.embed_dim", with([](RunConfig& c, J v) { c.model.decoder.embed_dim = v.get<std::size_t>(); })},
      {"model.decoder.heads", with([](RunConfig& c, J v) { c.model.decoder.heads = v.get<std::size_t>(); })},
      {"model.decoder.ffn_dim", with([](RunConfig& c, J v) { c.model.decoder.ffn_dim = v.get<std::size_t>(); })},
      {"model.gat.layers", with([](RunConfig& c, J v) { c.model.gat.layers = v.get<std::size_t>(); })},
      {"model.gat.heads", with([](RunConfig& c, J v) { c.model.gat.heads = v.get<std::size_t>(); })},
      {"model.gat.hidden", with([](RunConfig& c, J v) { c.model.gat.hidden = v.get<std::size_t>(); })},
      {"model.gat.alpha", with([](RunConfig& c, J v) { c.model.gat.alpha = v.get<double>(); })},
      {"model.gat.activation", with([](RunConfig& c, J v) {
         const auto s = v.get<std::string>();
         if (s != "sigmoid" && s != "identity") throw std::invalid_argument("model.gat.activation: sigmoid | identity");
         c.model.gat.activation = s == "sigmoid" ? GateActivation::kSigmoid : GateActivation::kIdentity;
       })},
      {"graph.tau", with([](RunConfig& c, J v) { c.correlation.tau = v.get<double>(); })},
      {"graph.p", with([](RunConfig& c, J v) { c.correlation.p = v.get<double>(); })},
      {"loss.kind", with([](RunConfig& c, J v) {
         const auto s = v.get<std::string>();
         if (s != "aam" && s != "asl") throw std::invalid_argument("loss.kind: aam | asl");
         c.loss = s == "aam" ? LossKind::kAam : LossKind::kAsl;
       })},
      {"loss.s", with([](RunConfig& c, J v) { c.aam.s = v.get<double>(); })},
      {"loss.m", with([](RunConfig& c, J v) { c.aam.m = v.get<double>(); })},
      {"loss.k", with([](RunConfig& c, J v) { c.aam.k = v.get<double>(); })},
      {"loss.gamma_pos", with([](RunConfig& c, J v) { c.aam.gamma_pos = c.asl.gamma_pos = v.get<double>(); })},
      {"loss.gamma_neg", with([](RunConfig& c, J v) { c.aam.gamma_neg = c.asl.gamma_neg = v.get<double>(); })},
      {"loss.exponents_as_printed", with([](RunConfig& c, J v) { c.aam.exponents_as_printed = v.get<bool>(); })},
      {"loss.clip", with([](RunConfig& c, J v) { c.asl.clip = v.get<double>(); })},
      {"optim.lr", with([](RunConfig& c, J v) { c.sam.base.lr = v.get<double>(); })},
      {"optim.momentum", with([](RunConfig& c, J v) { c.sam.base.momentum = v.get<double>(); })},
      {"optim.weight_decay", with([](RunConfig& c, J v) { c.sam.base.weight_decay = v.get<double>(); })},
      {"optim.rho", with([](RunConfig& c, J v) { c.sam.rho = v.get<double>(); })},
      {"schedule.warmup_fraction", set(&RunConfig::warmup_fraction)},
      {"schedule.div_initial", set(&RunConfig::div_initial)},
      {"schedule.div_final", set(&RunConfig::div_final)},
      {"ema.decay", set(&RunConfig::ema_decay)},
      {"early_stop.patience", set(&RunConfig::patience)},
      {"early_stop.beta", set(&RunConfig::early_stop_beta)},
      {"train.epochs", set(&RunConfig::epochs)},
      {"train.batch_size", set(&RunConfig::batch_size)},
  };
  return table;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [name, _] : presets()) out.push_back(name);
  return out;
}

void RunConfig::apply_preset(const std::string& name) {
  auto it = presets().find(name);
  if (it == presets().end()) throw std::invalid_argument("unknown preset '" + name + "'");
  const Preset& p = it->second;
  preset = name;
  loss = p.loss;
  aam.s = p.s;
  sam.base.lr = p.lr;
  aam.gamma_neg = asl.gamma_neg = p.gamma_neg;
  aam.gamma_pos = asl.gamma_pos = p.gamma_pos;
  model.normalize = loss == LossKind::kAam;
}

nlohmann::json RunConfig::to_json() const {
  const auto& b = model.backbone;
  nlohmann::json j{
      {"seed", seed},
      {"out_dir", out_dir},
      {"model.head", to_string(model.head)},
      {"model.input_channels", b.in_channels},
      {"model.height", b.height},
      {"model.width", b.width},
      {"model.stage_widths", b.stage_widths},
      {"model.decoder.groups", model.decoder.groups},
      {"model.decoder.embed_dim", model.decoder.embed_dim},
      {"model.decoder.heads", model.decoder.heads},
      {"model.decoder.ffn_dim", model.decoder.ffn_dim},
      {"model.gat.layers", model.gat.layers},
      {"model.gat.heads", model.gat.heads},
      {"model.gat.hidden", model.gat.hidden},
      {"model.gat.alpha", model.gat.alpha},
      {"model.gat.activation", model.gat.activation == GateActivation::kSigmoid ? "sigmoid" : "identity"},
      {"graph.tau", correlation.tau},
      {"graph.p", correlation.p},
      {"loss.kind", loss == LossKind::kAam ? "aam" : "asl"},
      {"loss.s", aam.s},
      {"loss.m", aam.m},
      {"loss.k", aam.k},
      {"loss.gamma_pos", loss == LossKind::kAam ? aam.gamma_pos : asl.gamma_pos},
      {"loss.gamma_neg", loss == LossKind::kAam ? aam.gamma_neg : asl.gamma_neg},
      {"loss.exponents_as_printed", aam.exponents_as_printed},
      {"loss.clip", asl.clip},
      {"optim.lr", sam.base.lr},
      {"optim.momentum", sam.base.momentum},
      {"optim.weight_decay", sam.base.weight_decay},
      {"optim.rho", sam.rho},
      {"schedule.warmup_fraction", warmup_fraction},
      {"schedule.div_initial", div_initial},
      {"schedule.div_final", div_final},
      {"ema.decay", ema_decay},
      {"early_stop.patience", patience},
      {"early_stop.beta", early_stop_beta},
      {"train.epochs", epochs},
      {"train.batch_size", batch_size},
  };
  if (!preset.empty()) j["preset"] = preset;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("run config must be a JSON object");
  RunConfig c;
  c.apply_preset("coco");
  c.preset.clear();
  try {
    if (j.contains("preset")) c.apply_preset(j.at("preset").get<std::string>());
    for (const auto& [key, value] : j.items()) {
      if (key == "preset") continue;
      auto it = setters().find(key);
      if (it == setters().end()) throw std::invalid_argument("run config: unknown key '" + key + "'");
      it->second(c, value);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("run config: " + std::string(e.what()));
  }
  c.model.normalize = c.loss == LossKind::kAam;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
}

void RunConfig::validate() const {
  model.backbone.validate();
  aam.validate();
  asl.validate();
  sam.validate();
  OneCycleConfig{.max_lr = sam.base.lr, .total_steps = 1, .warmup_fraction = warmup_fraction,
                 .div_initial = div_initial, .div_final = div_final}
      .validate();
  if (!(ema_decay >= 0 && ema_decay <= 1)) throw std::invalid_argument("ema.decay must lie in [0, 1]");
  if (!(early_stop_beta >= 0 && early_stop_beta <= 1)) throw std::invalid_argument("early_stop.beta must lie in [0, 1]");
  if (epochs == 0 || batch_size == 0) throw std::invalid_argument("train.epochs and train.batch_size must be positive");
  if (!(correlation.tau >= 0 && correlation.tau <= 1) || !(correlation.p >= 0 && correlation.p <= 1)) {
    throw std::invalid_argument("graph.tau and graph.p must lie in [0, 1]");
  }
}

}  // namespace mlc
