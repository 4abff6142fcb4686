#include "mlc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mlc {

namespace {
std::atomic<std::uint64_t> next_seq{1};
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

namespace {

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != numel(shape)) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = next_seq.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = mlc::numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::make_result(const char* op, Shape shape, std::vector<double> values,
                           std::vector<Tensor> parents, std::function<void(detail::Node&)> backward) {
  bool needs = std::any_of(parents.begin(), parents.end(),
                           [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  auto node = new_node(std::move(shape), std::move(values), needs);
  node->op = op;
  if (needs) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

detail::Node& Tensor::node() const {
  if (!node_) throw std::logic_error("use of undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::span<const double> Tensor::data() const { return node().data; }
std::span<double> Tensor::mutable_data() { return node().data; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node().data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch for " + shape_str(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range for " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node().data[flat];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  node().requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (node().grad.empty()) throw std::logic_error("tensor has no gradient");
  return node().grad;
}

std::span<double> Tensor::mutable_grad() { return node().ensure_grad(); }

void Tensor::zero_grad() { node().grad.clear(); }

const char* Tensor::op_name() const { return node().op; }
std::uint64_t Tensor::seq() const { return node().seq; }

void Tensor::backward() const {
  auto& root = node();
  if (root.data.size() != 1) {
    throw DimensionError("backward() requires a single-element tensor, got " + shape_str(root.shape));
  }
  if (!root.requires_grad) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{&root};
  seen.insert(&root);
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  // Creation order is a valid topological order of the recorded graph.
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  for (auto* n : order) {
    if (n->backward) n->grad.clear();
  }
  root.ensure_grad()[0] += 1.0;
  for (auto* n : order) {
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (auto* n : order) {
    for (double g : n->grad) {
      if (!std::isfinite(g)) {
        throw DomainError(std::string("non-finite gradient at op '") + n->op + "' " + shape_str(n->shape));
      }
    }
  }
}

Tensor Tensor::detach() const {
  auto& n = node();
  return from(n.shape, n.data, false);
}

Tensor Tensor::clone(bool requires_grad) const {
  auto& n = node();
  return from(n.shape, n.data, requires_grad);
}

}  // namespace mlc
