#pragma once

#include <cstddef>
#include <vector>

#include "mlc/tensor.hpp"

namespace mlc {

// Binary ops follow numpy broadcasting. Gradients are summed back over the
// broadcast axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor neg(const Tensor& x);

Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
/// Throws DomainError on any non-positive input.
Tensor log(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double alpha);
Tensor relu(const Tensor& x);
Tensor elu(const Tensor& x, double alpha = 1.0);
Tensor power(const Tensor& x, double p);
/// Gradient passes where lo < x < hi, zero elsewhere.
Tensor clamp(const Tensor& x, double lo, double hi);

/// rank-2 x rank-2, rank-3 x rank-3 (batched) or rank-3 x rank-2 (shared rhs).
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reductions over one axis; the axis is removed from the result shape.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
/// Gradient goes to the first maximal element along the axis.
Tensor max(const Tensor& x, std::size_t axis);

/// Unit L2 norm along `axis`; the denominator is sqrt(sum x^2 + eps^2) so a
/// zero vector maps to zero instead of failing.
Tensor l2_normalize(const Tensor& x, std::size_t axis, double eps = 1e-12);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Softmax over the last axis restricted to entries where `mask` is nonzero.
/// `mask` has the shape of the last two axes of x. Masked entries output 0.
/// A row with no admissible entry is a DimensionError.
Tensor masked_softmax(const Tensor& x, const std::vector<std::vector<bool>>& mask);

enum class PoolKind { kAvg, kMax };
/// Global spatial pooling of [..., S, h, w] to [..., S].
Tensor pool(const Tensor& f, PoolKind kind);

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor index_select(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& index);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};
/// x: [B, C, H, W], weight: [O, C, k, k], bias: [O] (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opts);

}  // namespace mlc
