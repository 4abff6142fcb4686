#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlc {

using Shape = std::vector<std::size_t>;

/// Raised when operand extents are incompatible with an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for values outside an operation's mathematical domain (log of a
/// non-positive number, non-finite gradients, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major float64 tensor with reverse-mode differentiation.
///
/// A Tensor is a cheap handle; copies share storage. Every op returns a new
/// node that remembers its inputs, and `backward()` on a scalar walks the
/// reachable nodes in reverse creation order, visiting each exactly once.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  /// Creates an op result. `backward` receives the result node and must
  /// accumulate into the parents that require grad.
  static Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const double> data() const;
  /// In-place access for leaves (parameter updates, fixtures). Mutating a
  /// tensor that already feeds a recorded op invalidates that op's gradient.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Reverse-mode pass from a single-element tensor. Throws DomainError if
  /// any reachable gradient is non-finite.
  void backward() const;

  /// Same data, no history, no grad.
  Tensor detach() const;
  /// Deep copy of the data into a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  const char* op_name() const;
  std::uint64_t seq() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  detail::Node& node() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

}  // namespace mlc
