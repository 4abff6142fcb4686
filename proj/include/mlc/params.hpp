#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mlc/tensor.hpp"

namespace mlc {

struct NamedParam {
  std::string name;
  Tensor value;
};

/// Ordered registry of trainable tensors. Modules keep their own handles;
/// the store shares the same storage, so updates through either are visible.
class ParamStore {
 public:
  Tensor add(std::string name, Tensor value);
  const std::vector<NamedParam>& entries() const { return params_; }
  std::vector<NamedParam>& entries() { return params_; }
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<NamedParam> params_;
};

using Rng = std::mt19937_64;

/// Glorot-uniform init for a weight with the given fan-in and fan-out.
Tensor glorot(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out);
/// He-uniform init, for weights feeding a ReLU.
Tensor he_uniform(Rng& rng, Shape shape, std::size_t fan_in);

}  // namespace mlc
