#include "mlc/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mlc {

void SgdConfig::validate() const {
  if (!(lr >= 0) || !(momentum >= 0 && momentum < 1) || !(weight_decay >= 0)) {
    throw std::invalid_argument("sgd: need lr >= 0, momentum in [0, 1), weight_decay >= 0");
  }
}

void SamConfig::validate() const {
  if (!(rho >= 0)) throw std::invalid_argument("sam: rho must be >= 0");
  base.validate();
}

bool decays(const Tensor& param) { return param.rank() >= 2; }

std::vector<bool> apply_decay_policy(const ParamStore& store) {
  std::vector<bool> mask;
  mask.reserve(store.size());
  for (const auto& p : store.entries()) mask.push_back(decays(p.value));
  return mask;
}

Sgd::Sgd(ParamStore& store, SgdConfig cfg) : store_(store), cfg_(cfg), mask_(apply_decay_policy(store)) {
  cfg_.validate();
  for (const auto& p : store.entries()) momentum_.emplace_back(p.value.numel(), 0.0);
}

void Sgd::step(double lr) {
  auto& entries = store_.entries();
  if (entries.size() != momentum_.size()) throw std::logic_error("sgd: parameter store changed after construction");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor& p = entries[i].value;
    if (!p.has_grad()) continue;
    auto data = p.mutable_data();
    auto grad = p.grad();
    auto& buf = momentum_[i];
    const double wd = mask_[i] ? cfg_.weight_decay : 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
      double g = grad[k];
      if (wd != 0.0) g += wd * data[k];
      buf[k] = cfg_.momentum * buf[k] + g;
      data[k] -= lr * buf[k];
    }
  }
}

Sam::Sam(ParamStore& store, SamConfig cfg) : store_(store), cfg_(cfg), base_(store, cfg.base) { cfg_.validate(); }

double Sam::step(const LossFn& loss_fn, double lr) {
  store_.zero_grad();
  Tensor loss = loss_fn();
  const double value = loss.item();
  loss.backward();

  double norm_sq = 0.0;
  for (const auto& p : store_.entries()) {
    if (!p.value.has_grad()) continue;
    for (double g : p.value.grad()) norm_sq += g * g;
  }
  const double norm = std::sqrt(norm_sq);
  if (norm > 0.0) {
    auto saved = snapshot(store_);
    const double factor = cfg_.rho / norm;
    for (auto& p : store_.entries()) {
      if (!p.value.has_grad()) continue;
      auto data = p.value.mutable_data();
      auto grad = p.value.grad();
      for (std::size_t k = 0; k < data.size(); ++k) data[k] += factor * grad[k];
    }
    store_.zero_grad();
    loss_fn().backward();
    restore(store_, saved);
  }
  base_.step(lr);
  return value;
}

std::size_t OneCycleConfig::warmup_steps() const {
  return static_cast<std::size_t>(std::lround(warmup_fraction * static_cast<double>(total_steps)));
}

void OneCycleConfig::validate() const {
  if (!(max_lr >= 0) || total_steps == 0 || !(warmup_fraction >= 0 && warmup_fraction <= 1) ||
      !(div_initial > 0) || !(div_final > 0)) {
    throw std::invalid_argument("onecycle: invalid configuration");
  }
}

double onecycle_lr(std::size_t step, const OneCycleConfig& cfg) {
  cfg.validate();
  const double start = cfg.max_lr / cfg.div_initial;
  const double end = cfg.max_lr / cfg.div_final;
  const std::size_t warm = cfg.warmup_steps();
  // Blending as a * w + b * (1 - w) hits both endpoints exactly.
  auto blend = [](double a, double b, double w) { return a * w + b * (1.0 - w); };
  if (step < warm) {
    const double t = static_cast<double>(step) / static_cast<double>(warm);
    return blend(cfg.max_lr, start, (1.0 - std::cos(std::numbers::pi * t)) / 2.0);
  }
  if (step >= cfg.total_steps) return end;
  const double t = static_cast<double>(step - warm) / static_cast<double>(cfg.total_steps - warm);
  return blend(cfg.max_lr, end, (1.0 + std::cos(std::numbers::pi * t)) / 2.0);
}

Ema::Ema(const ParamStore& store, double decay) : decay_(decay), shadow_(snapshot(store)) {
  if (!(decay >= 0 && decay <= 1)) throw std::invalid_argument("ema: decay must lie in [0, 1]");
}

void Ema::update(const ParamStore& store) {
  const auto& entries = store.entries();
  if (entries.size() != shadow_.size()) throw std::logic_error("ema: parameter store changed after construction");
  const double c = 1.0 - decay_;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto live = entries[i].value.data();
    auto& s = shadow_[i];
    if (live.size() != s.size()) throw std::logic_error("ema: shape of '" + entries[i].name + "' changed");
    // Written as an increment so that a constant parameter leaves the shadow exactly unchanged.
    for (std::size_t k = 0; k < s.size(); ++k) s[k] += c * (live[k] - s[k]);
  }
}

void Ema::swap(ParamStore& store) {
  auto& entries = store.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto live = entries[i].value.mutable_data();
    std::swap_ranges(live.begin(), live.end(), shadow_[i].begin());
  }
}

std::vector<std::vector<double>> snapshot(const ParamStore& store) {
  std::vector<std::vector<double>> out;
  out.reserve(store.size());
  for (const auto& p : store.entries()) out.emplace_back(p.value.data().begin(), p.value.data().end());
  return out;
}

void restore(ParamStore& store, const std::vector<std::vector<double>>& values) {
  auto& entries = store.entries();
  if (values.size() != entries.size()) throw std::invalid_argument("restore: parameter count mismatch");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto data = entries[i].value.mutable_data();
    if (values[i].size() != data.size()) throw std::invalid_argument("restore: size mismatch for " + entries[i].name);
    std::copy(values[i].begin(), values[i].end(), data.begin());
  }
}

}  // namespace mlc
