#include "mlc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace mlc {

namespace {

void check_matrix(const Tensor& scores, const Tensor& labels) {
  if (scores.rank() != 2 || scores.shape() != labels.shape()) {
    throw DimensionError("metrics: expected matching [B, K] scores and labels, got " + shape_str(scores.shape()) +
                         " and " + shape_str(labels.shape()));
  }
  for (double y : labels.data()) {
    if (y != 0.0 && y != 1.0) throw DomainError("metrics: labels must be 0 or 1");
  }
}

std::vector<double> column(const Tensor& m, std::size_t j) {
  const std::size_t b = m.dim(0), k = m.dim(1);
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) out[i] = m.data()[i * k + j];
  return out;
}

Counts count(std::span<const double> scores, std::span<const double> labels, double thr) {
  Counts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= thr;
    if (pred && labels[i] == 1.0) c.tp += 1;
    else if (pred) c.fp += 1;
    else if (labels[i] == 1.0) c.fn += 1;
  }
  return c;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw DimensionError("average_precision: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0, sum = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] == 1.0) {
      hits += 1;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  if (hits == 0) throw std::domain_error("average_precision: no positives");
  return sum / hits;
}

std::vector<std::optional<double>> per_class_ap(const Tensor& scores, const Tensor& labels) {
  check_matrix(scores, labels);
  std::vector<std::optional<double>> out(scores.dim(1));
  for (std::size_t j = 0; j < out.size(); ++j) {
    auto y = column(labels, j);
    if (std::find(y.begin(), y.end(), 1.0) == y.end()) continue;
    out[j] = average_precision(column(scores, j), y);
  }
  return out;
}

double mean_average_precision(const Tensor& scores, const Tensor& labels) {
  double sum = 0, n = 0;
  for (const auto& ap : per_class_ap(scores, labels)) {
    if (!ap) continue;
    sum += *ap;
    n += 1;
  }
  return n == 0 ? 0.0 : sum / n;
}

double harmonic(double p, double r) { return p + r == 0 ? 0.0 : 2 * p * r / (p + r); }

PrfScores prf(const Counts& c) {
  PrfScores s;
  const double pd = c.tp + c.fp, rd = c.tp + c.fn;
  s.degenerate = pd == 0 || rd == 0;
  s.precision = pd == 0 ? 0.0 : c.tp / pd;
  s.recall = rd == 0 ? 0.0 : c.tp / rd;
  s.f1 = harmonic(s.precision, s.recall);
  return s;
}

EvalReport overall_and_per_class(const Tensor& scores, const Tensor& labels, std::span<const double> thresholds) {
  check_matrix(scores, labels);
  const std::size_t k = scores.dim(1);
  if (thresholds.size() != k) throw DimensionError("overall_and_per_class: need one threshold per class");
  EvalReport r;
  r.thresholds.assign(thresholds.begin(), thresholds.end());
  r.ap = per_class_ap(scores, labels);
  Counts pooled;
  for (std::size_t j = 0; j < k; ++j) {
    auto s = column(scores, j), y = column(labels, j);
    Counts c = count(s, y, thresholds[j]);
    pooled.tp += c.tp;
    pooled.fp += c.fp;
    pooled.fn += c.fn;
    PrfScores m = prf(c);
    r.precision.push_back(m.precision);
    r.recall.push_back(m.recall);
    r.f1.push_back(m.f1);
    if (!r.ap[j]) r.flags.push_back("class " + std::to_string(j) + ": no positives, excluded from mAP");
    if (c.tp + c.fp == 0) r.flags.push_back("class " + std::to_string(j) + ": no predicted positives, precision 0");
    if (c.tp + c.fn == 0) r.flags.push_back("class " + std::to_string(j) + ": no positives, recall 0");
  }
  double map_sum = 0, map_n = 0;
  for (const auto& ap : r.ap) {
    if (!ap) continue;
    map_sum += *ap;
    map_n += 1;
  }
  r.map = map_n == 0 ? 0.0 : map_sum / map_n;
  PrfScores overall = prf(pooled);
  if (overall.degenerate) r.flags.push_back("overall: zero denominator");
  r.op = overall.precision;
  r.orc = overall.recall;
  r.of1 = overall.f1;
  r.cp = mean_of(r.precision);
  r.cr = mean_of(r.recall);
  r.cf1 = harmonic(r.cp, r.cr);
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  nlohmann::json aps = nlohmann::json::array();
  for (const auto& a : ap) aps.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
  j["per_class"] = {{"ap", aps}, {"precision", precision}, {"recall", recall}, {"f1", f1}, {"threshold", thresholds}};
  j["mAP"] = map;
  j["OP"] = op;
  j["OR"] = orc;
  j["OF1"] = of1;
  j["CP"] = cp;
  j["CR"] = cr;
  j["CF1"] = cf1;
  j["flags"] = flags;
  return j;
}

void EvalReport::write_csv(std::ostream& os) const {
  os << "class,ap,precision,recall,f1,threshold\n";
  for (std::size_t j = 0; j < precision.size(); ++j) {
    os << j << ',';
    if (ap[j]) os << *ap[j];
    os << ',' << precision[j] << ',' << recall[j] << ',' << f1[j] << ',' << thresholds[j] << '\n';
  }
  os << "all," << map << ',' << cp << ',' << cr << ',' << cf1 << ",\n";
}

std::vector<double> default_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 99; ++i) g.push_back(i / 100.0);
  return g;
}

nlohmann::json Calibration::to_json() const { return {{"thresholds", thresholds}, {"no_positive", no_positive}}; }

Calibration Calibration::from_json(const nlohmann::json& j) {
  Calibration c;
  c.thresholds = j.at("thresholds").get<std::vector<double>>();
  if (j.contains("no_positive")) c.no_positive = j.at("no_positive").get<std::vector<std::size_t>>();
  for (double t : c.thresholds) {
    if (!(t > 0 && t < 1)) throw std::runtime_error("thresholds must lie in (0, 1)");
  }
  return c;
}

Calibration calibrate_thresholds(const Tensor& scores, const Tensor& labels, std::span<const double> grid) {
  check_matrix(scores, labels);
  if (std::find(grid.begin(), grid.end(), 0.5) == grid.end()) throw std::invalid_argument("calibration grid must contain 0.5");
  for (double t : grid) {
    if (!(t > 0 && t < 1)) throw std::invalid_argument("calibration grid must lie in (0, 1)");
  }
  Calibration cal;
  for (std::size_t j = 0; j < scores.dim(1); ++j) {
    auto s = column(scores, j), y = column(labels, j);
    if (std::find(y.begin(), y.end(), 1.0) == y.end()) {
      cal.thresholds.push_back(0.5);
      cal.no_positive.push_back(j);
      continue;
    }
    double best_t = 0.5, best_f1 = prf(count(s, y, 0.5)).f1;
    for (double t : grid) {
      const double f1 = prf(count(s, y, t)).f1;
      const double d = std::abs(t - 0.5), bd = std::abs(best_t - 0.5);
      if (f1 > best_f1 || (f1 == best_f1 && (d < bd || (d == bd && t < best_t)))) {
        best_f1 = f1;
        best_t = t;
      }
    }
    cal.thresholds.push_back(best_t);
  }
  return cal;
}

EarlyStopTracker::EarlyStopTracker(std::size_t patience, double beta) : patience_(patience), beta_(beta) {
  if (!(beta >= 0 && beta <= 1)) throw std::invalid_argument("early stop: beta must lie in [0, 1]");
}

bool EarlyStopTracker::update(double metric) {
  if (!std::isfinite(metric)) throw DomainError("early stop: metric must be finite");
  if (!started_) {
    started_ = true;
    best_ = ema_ = metric;
    since_ = 0;
    return false;
  }
  if (metric > best_) {
    best_ = metric;
    since_ = 0;
  } else {
    ++since_;
  }
  ema_ += (1.0 - beta_) * (best_ - ema_);
  return since_ >= patience_ && metric < ema_;
}

}  // namespace mlc
