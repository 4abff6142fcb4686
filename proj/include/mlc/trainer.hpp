#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "mlc/config.hpp"
#include "mlc/dataset.hpp"
#include "mlc/model.hpp"

namespace mlc {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0, lr = 0, val_map = 0, ema_val_map = 0;
  bool stopped = false;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  double best_ema_map = 0;
  std::size_t best_epoch = 0;
};

/// Builds the model for `cfg` on `data`. Graph heads read `embeddings.txt`
/// from `data_dir` and estimate the label graph on the training split.
Model build_model(const RunConfig& cfg, const MultilabelDataset& data, const std::filesystem::path& data_dir);

/// Per-class probabilities: sigmoid(s * cos) for angular logits, sigmoid(x) otherwise.
Tensor scores_from_logits(const Tensor& logits, const RunConfig& cfg);
Tensor loss_of(const Tensor& logits, const Tensor& targets, const RunConfig& cfg);

/// Scores for the given rows, without building a graph.
Tensor predict(const Model& model, const MultilabelDataset& data, const std::vector<std::size_t>& rows,
               const RunConfig& cfg);

/// SAM + OneCycle + EMA training with early stopping on the EMA model's
/// validation mAP. Writes one JSON line per epoch to `log` when given. On
/// return the model holds the EMA weights of the best epoch.
TrainResult train(Model& model, const MultilabelDataset& data, const RunConfig& cfg, std::ostream* log = nullptr);

}  // namespace mlc
