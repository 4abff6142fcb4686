#include "mlc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "mlc/metrics.hpp"
#include "mlc/ops.hpp"
#include "mlc/optim.hpp"

namespace mlc {

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch},     {"train_loss", train_loss},   {"lr", lr},
          {"val_mAP", val_map}, {"ema_val_mAP", ema_val_map}, {"stopped", stopped}};
}

Model build_model(const RunConfig& cfg, const MultilabelDataset& data, const std::filesystem::path& data_dir) {
  ModelConfig mc = cfg.model;
  mc.classes = data.classes();
  if (mc.backbone.in_channels != data.channels || mc.backbone.height != data.height ||
      mc.backbone.width != data.width) {
    throw DimensionError("config expects images " + std::to_string(mc.backbone.in_channels) + "x" +
                         std::to_string(mc.backbone.height) + "x" + std::to_string(mc.backbone.width) +
                         ", dataset has " + std::to_string(data.channels) + "x" + std::to_string(data.height) + "x" +
                         std::to_string(data.width));
  }
  std::optional<LabelGraph> graph;
  if (uses_gat(mc.head)) {
    if (data.class_names.empty()) {
      throw std::runtime_error("the dataset has unnamed labels; the graph branch needs a word vector per class name");
    }
    auto emb = align_embeddings(load_embeddings(data_dir / "embeddings.txt"), data.class_names);
    auto z = build_correlation(data.label_sets(data.indices(Split::kTrain)), data.classes(), cfg.correlation,
                               data.class_names);
    graph = LabelGraph{emb.matrix, z.adjacency};
  }
  return Model(mc, cfg.seed, std::move(graph));
}

Tensor scores_from_logits(const Tensor& logits, const RunConfig& cfg) {
  return sigmoid(cfg.loss == LossKind::kAam ? scale(logits, cfg.aam.s) : logits);
}

Tensor loss_of(const Tensor& logits, const Tensor& targets, const RunConfig& cfg) {
  return cfg.loss == LossKind::kAam ? aam_loss(logits, targets, cfg.aam) : asl_loss(logits, targets, cfg.asl);
}

Tensor predict(const Model& model, const MultilabelDataset& data, const std::vector<std::size_t>& rows,
               const RunConfig& cfg) {
  std::vector<double> out;
  out.reserve(rows.size() * data.classes());
  const std::size_t chunk = std::max<std::size_t>(cfg.batch_size, 64);
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    std::vector<std::size_t> part(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                  rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), start + chunk)));
    Tensor s = scores_from_logits(model.forward(data.batch_features(part)), cfg);
    out.insert(out.end(), s.data().begin(), s.data().end());
  }
  return Tensor::from({rows.size(), data.classes()}, std::move(out));
}

TrainResult train(Model& model, const MultilabelDataset& data, const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const auto train_rows = data.indices(Split::kTrain);
  const auto val_rows = data.indices(Split::kVal);
  if (train_rows.empty() || val_rows.empty()) throw TrainingError("training needs non-empty train and val splits");
  const Tensor val_labels = data.batch_labels(val_rows);

  ParamStore& store = model.params();
  Sam sam(store, cfg.sam);
  Ema ema(store, cfg.ema_decay);
  EarlyStopTracker stopper(cfg.patience, cfg.early_stop_beta);
  const std::size_t steps_per_epoch = (train_rows.size() + cfg.batch_size - 1) / cfg.batch_size;
  const OneCycleConfig schedule{.max_lr = cfg.sam.base.lr,
                                .total_steps = steps_per_epoch * cfg.epochs,
                                .warmup_fraction = cfg.warmup_fraction,
                                .div_initial = cfg.div_initial,
                                .div_final = cfg.div_final};

  Rng rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::vector<std::size_t> order = train_rows;
  TrainResult result;
  std::vector<std::vector<double>> best = snapshot(store);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch_size),
                                    order.begin() + static_cast<std::ptrdiff_t>(
                                                        std::min(order.size(), (b + 1) * cfg.batch_size)));
      const Tensor x = data.batch_features(rows);
      const Tensor y = data.batch_labels(rows);
      lr = onecycle_lr(step, schedule);
      double loss;
      try {
        loss = sam.step([&] { return loss_of(model.forward(x), y, cfg); }, lr);
      } catch (const DomainError& e) {
        throw TrainingError("non-finite values at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                            ": " + e.what());
      }
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      loss_sum += loss;
      ema.update(store);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    rec.lr = lr;
    rec.val_map = mean_average_precision(predict(model, data, val_rows, cfg), val_labels);
    {
      EmaScope scope(ema, store);
      rec.ema_val_map = mean_average_precision(predict(model, data, val_rows, cfg), val_labels);
      if (result.log.empty() || rec.ema_val_map > result.best_ema_map) {
        result.best_ema_map = rec.ema_val_map;
        result.best_epoch = epoch;
        best = snapshot(store);
      }
    }
    rec.stopped = stopper.update(rec.ema_val_map);
    result.log.push_back(rec);
    if (log) *log << rec.to_json().dump() << '\n' << std::flush;
    if (rec.stopped) break;
  }
  restore(store, best);
  return result;
}

}  // namespace mlc
