#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlc/label_graph.hpp"
#include "mlc/losses.hpp"
#include "mlc/model.hpp"
#include "mlc/optim.hpp"

namespace mlc {

enum class LossKind { kAam, kAsl };

/// Everything a training run needs besides the data. Serialized as flat
/// JSON with dotted keys, e.g. {"preset": "voc", "train.epochs": 30}.
struct RunConfig {
  ModelConfig model;  // `classes` is filled from the dataset
  LossKind loss = LossKind::kAam;
  AamConfig aam;
  AslConfig asl;
  SamConfig sam{.rho = 0.05, .base = {.lr = 0.007, .momentum = 0.9, .weight_decay = 1e-4}};
  double warmup_fraction = 0.3;
  double div_initial = 25.0;
  double div_final = 1e4;
  double ema_decay = 0.9997;
  std::size_t patience = 5;
  double early_stop_beta = 0.9;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  CorrelationConfig correlation;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string preset;

  /// Presets: coco, voc, nus, vg500 (AAM) and asl.
  void apply_preset(const std::string& name);
  nlohmann::json to_json() const;
  /// Defaults, then the preset (if any), then the remaining keys. Unknown keys are errors.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  void validate() const;
};

std::vector<std::string> preset_names();

}  // namespace mlc
