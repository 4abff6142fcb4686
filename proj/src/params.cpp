#include "mlc/params.hpp"

#include <algorithm>
#include <cmath>

namespace mlc {

Tensor ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name " + name);
  value.set_requires_grad(true);
  params_.push_back({std::move(name), value});
  return value;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw std::out_of_range("no parameter named " + name);
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const NamedParam& p) { return p.name == name; });
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

Tensor glorot(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor he_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace mlc
