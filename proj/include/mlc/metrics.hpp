#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlc/tensor.hpp"

namespace mlc {

/// Mean of precision@rank over the positives, ranking by descending score
/// with ties broken by original index. Throws std::domain_error without positives.
double average_precision(std::span<const double> scores, std::span<const double> labels);

/// Per-class AP over a [B, K] score matrix; classes without positives are nullopt.
std::vector<std::optional<double>> per_class_ap(const Tensor& scores, const Tensor& labels);

/// Mean over classes with at least one positive.
double mean_average_precision(const Tensor& scores, const Tensor& labels);

struct Counts {
  double tp = 0, fp = 0, fn = 0;
};

/// Precision, recall and F1 from counts; zero denominators yield 0.
struct PrfScores {
  double precision = 0, recall = 0, f1 = 0;
  bool degenerate = false;
};
PrfScores prf(const Counts& c);
double harmonic(double p, double r);

struct EvalReport {
  std::vector<std::optional<double>> ap;
  std::vector<double> precision, recall, f1;
  std::vector<double> thresholds;
  double map = 0, op = 0, orc = 0, of1 = 0, cp = 0, cr = 0, cf1 = 0;
  /// Human-readable notes on excluded classes and zero-denominator cells.
  std::vector<std::string> flags;

  nlohmann::json to_json() const;
  /// One row per class plus an `all` row of aggregates.
  void write_csv(std::ostream& os) const;
};

/// A score counts as a positive prediction when score >= threshold.
EvalReport overall_and_per_class(const Tensor& scores, const Tensor& labels, std::span<const double> thresholds);

std::vector<double> default_grid();  // 0.01 ... 0.99

struct Calibration {
  std::vector<double> thresholds;
  std::vector<std::size_t> no_positive;  // classes left at 0.5

  nlohmann::json to_json() const;
  static Calibration from_json(const nlohmann::json& j);
};

/// Per-class F1-maximizing threshold over the grid, ties broken toward 0.5.
Calibration calibrate_thresholds(const Tensor& scores, const Tensor& labels, std::span<const double> grid);

/// Stop when the best value has not improved for `patience` epochs and the
/// current value is strictly below an EMA of the running-best sequence.
class EarlyStopTracker {
 public:
  explicit EarlyStopTracker(std::size_t patience = 5, double beta = 0.9);

  /// Records one epoch's metric and returns true when training should stop.
  bool update(double metric);
  double best() const { return best_; }
  double ema() const { return ema_; }
  std::size_t since_improvement() const { return since_; }

 private:
  std::size_t patience_;
  double beta_;
  bool started_ = false;
  double best_ = 0, ema_ = 0;
  std::size_t since_ = 0;
};

}  // namespace mlc
