#pragma once

#include <functional>
#include <vector>

#include "mlc/params.hpp"
#include "mlc/tensor.hpp"

namespace mlc {

struct SgdConfig {
  double lr = 0.007;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  void validate() const;
};

struct SamConfig {
  double rho = 0.05;
  SgdConfig base;

  void validate() const;
};

/// Weight decay applies to tensors of rank >= 2 only; biases, gains and
/// attention vectors are exempt.
bool decays(const Tensor& param);
std::vector<bool> apply_decay_policy(const ParamStore& store);

/// SGD with heavy-ball momentum: buf = momentum * buf + (g + wd * p), p -= lr * buf.
class Sgd {
 public:
  Sgd(ParamStore& store, SgdConfig cfg);

  /// Applies one update from the gradients currently held by the parameters.
  void step(double lr);
  const SgdConfig& config() const { return cfg_; }

 private:
  ParamStore& store_;
  SgdConfig cfg_;
  std::vector<bool> mask_;
  std::vector<std::vector<double>> momentum_;
};

/// Returns the scalar loss for the current parameter values; it must build
/// a fresh graph on every call.
using LossFn = std::function<Tensor()>;

/// Sharpness-aware minimization around an Sgd base step.
class Sam {
 public:
  Sam(ParamStore& store, SamConfig cfg);

  /// Two-phase step. Returns the loss at the unperturbed parameters.
  double step(const LossFn& loss_fn, double lr);
  const SamConfig& config() const { return cfg_; }

 private:
  ParamStore& store_;
  SamConfig cfg_;
  Sgd base_;
};

struct OneCycleConfig {
  double max_lr = 0.007;
  std::size_t total_steps = 1;
  double warmup_fraction = 0.3;
  double div_initial = 25.0;
  double div_final = 1e4;

  std::size_t warmup_steps() const;
  void validate() const;
};

/// Cosine warmup from max_lr / div_initial to max_lr, then cosine anneal to
/// max_lr / div_final at total_steps. Steps past the end hold the final value.
double onecycle_lr(std::size_t step, const OneCycleConfig& cfg);

/// Shadow weights: shadow <- decay * shadow + (1 - decay) * param.
class Ema {
 public:
  Ema(const ParamStore& store, double decay);

  void update(const ParamStore& store);
  /// Exchanges live and shadow values; calling it twice restores both.
  void swap(ParamStore& store);
  double decay() const { return decay_; }
  const std::vector<std::vector<double>>& shadow() const { return shadow_; }

 private:
  double decay_;
  std::vector<std::vector<double>> shadow_;
};

/// Evaluates with EMA weights for the lifetime of the scope.
class EmaScope {
 public:
  EmaScope(Ema& ema, ParamStore& store) : ema_(ema), store_(store) { ema_.swap(store_); }
  ~EmaScope() { ema_.swap(store_); }
  EmaScope(const EmaScope&) = delete;
  EmaScope& operator=(const EmaScope&) = delete;

 private:
  Ema& ema_;
  ParamStore& store_;
};

/// Copies of all parameter values, in store order.
std::vector<std::vector<double>> snapshot(const ParamStore& store);
void restore(ParamStore& store, const std::vector<std::vector<double>>& values);

}  // namespace mlc
