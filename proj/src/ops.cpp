#include "mlc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "mlc/op_audit.hpp"

namespace mlc {

namespace {

using detail::Node;

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

// [outer, n, inner] view of a shape around one axis.
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out.push_back(s[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Per-output-axis strides into an operand, 0 along broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& operand, const Shape& out) {
  std::size_t r = out.size();
  std::vector<std::size_t> strides(r, 0);
  std::size_t stride = 1;
  for (std::size_t i = operand.size(); i-- > 0;) {
    std::size_t oi = i + (r - operand.size());
    strides[oi] = operand[i] == 1 ? 0 : stride;
    stride *= operand[i];
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Shape& as, const Shape& bs, const Shape& out, F&& f) {
  std::size_t total = numel(out);
  if (as == out && bs == out) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  std::size_t na = numel(as), nb = numel(bs);
  if (as == out && nb == 1) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, std::size_t{0});
    return;
  }
  if (bs == out && na == 1) {
    for (std::size_t i = 0; i < total; ++i) f(i, std::size_t{0}, i);
    return;
  }
  if (as == out && nb > 0 && total % nb == 0 && bs.size() <= out.size() &&
      std::equal(bs.begin(), bs.end(), out.end() - static_cast<std::ptrdiff_t>(bs.size()))) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, i % nb);
    return;
  }
  auto sa = broadcast_strides(as, out);
  auto sb = broadcast_strides(bs, out);
  std::size_t r = out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

template <typename F, typename DA, typename DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb,
                 bool counts_multiplies) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  std::vector<double> out(numel(out_shape));
  auto ad = a.data();
  auto bd = b.data();
  for_each_broadcast(a.shape(), b.shape(), out_shape,
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = f(ad[ia], bd[ib]); });
  OpAudit::record(name, counts_multiplies ? out.size() : 0);
  return Tensor::make_result(name, out_shape, std::move(out), {a, b}, [dfa, dfb](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    const auto& g = n.grad;
    const auto& av = pa.data;
    const auto& bv = pb.data;
    std::vector<double>* ga = pa.requires_grad ? &pa.ensure_grad() : nullptr;
    std::vector<double>* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
    for_each_broadcast(pa.shape, pb.shape, n.shape, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (ga) (*ga)[ia] += g[o] * dfa(av[ia], bv[ib]);
      if (gb) (*gb)[ib] += g[o] * dfb(av[ia], bv[ib]);
    });
  });
}

// f(x) -> y; df(x, y) -> dy/dx.
template <typename F, typename DF>
Tensor unary_op(const char* name, const Tensor& x, F f, DF df, std::uint64_t multiplies = 0) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  OpAudit::record(name, multiplies);
  return Tensor::make_result(name, x.shape(), std::move(out), {x}, [df](Node& n) {
    Node& p = parent(n, 0);
    auto& gp = p.ensure_grad();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += n.grad[i] * df(p.data[i], n.data[i]);
  });
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; }, false);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; }, false);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; }, true);
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); }, true);
}

Tensor scale(const Tensor& x, double factor) {
  return unary_op(
      "scale", x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; },
      x.numel());
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary_op(
      "add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      "neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary_op(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor leaky_relu(const Tensor& x, double alpha) {
  return unary_op(
      "leaky_relu", x, [alpha](double v) { return v > 0 ? v : alpha * v; },
      [alpha](double v, double) { return v > 0 ? 1.0 : alpha; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor elu(const Tensor& x, double alpha) {
  return unary_op(
      "elu", x, [alpha](double v) { return v > 0 ? v : alpha * std::expm1(v); },
      [alpha](double v, double) { return v > 0 ? 1.0 : alpha * std::exp(v); });
}

Tensor power(const Tensor& x, double p) {
  for (double v : x.data()) {
    if (!std::isfinite(std::pow(v, p))) throw DomainError("power: non-finite result for base " + std::to_string(v));
  }
  return unary_op(
      "power", x, [p](double v) { return std::pow(v, p); },
      [p](double v, double) { return p == 0.0 ? 0.0 : p * std::pow(v, p - 1.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary_op(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// matmul

namespace {

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// da[m,k] += dc[m,n] * b[k,n]^T
void gemm_nt(const double* dc, const double* b, double* da, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
      da[i * k + p] += acc;
    }
  }
}

// db[k,n] += a[m,k]^T * dc[m,n]
void gemm_tn(const double* a, const double* dc, double* db, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      if (av == 0.0) continue;
      double* dp = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dp[j] += av * gi[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  std::size_t batch = 1, m, k, n;
  bool shared_rhs = false;
  if (as.size() == 2 && bs.size() == 2) {
    m = as[0];
    k = as[1];
    n = bs[1];
    if (bs[0] != k) throw DimensionError("matmul: " + shape_str(as) + " x " + shape_str(bs));
  } else if (as.size() == 3 && bs.size() == 3) {
    batch = as[0];
    m = as[1];
    k = as[2];
    n = bs[2];
    if (bs[0] != batch || bs[1] != k) throw DimensionError("matmul: " + shape_str(as) + " x " + shape_str(bs));
  } else if (as.size() == 3 && bs.size() == 2) {
    batch = as[0];
    m = as[1];
    k = as[2];
    n = bs[1];
    shared_rhs = true;
    if (bs[0] != k) throw DimensionError("matmul: " + shape_str(as) + " x " + shape_str(bs));
  } else {
    throw DimensionError("matmul: unsupported ranks " + shape_str(as) + " x " + shape_str(bs));
  }
  Shape out_shape = as.size() == 2 ? Shape{m, n} : Shape{batch, m, n};
  std::vector<double> out(batch * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  if (shared_rhs) {
    // Rows of all batch items share the right operand.
    gemm_nn(ad, bd, out.data(), batch * m, k, n);
  } else {
    for (std::size_t t = 0; t < batch; ++t) gemm_nn(ad + t * m * k, bd + t * k * n, out.data() + t * m * n, m, k, n);
  }
  OpAudit::record("matmul", batch * m * k * n);
  return Tensor::make_result("matmul", out_shape, std::move(out), {a, b},
                             [batch, m, k, n, shared_rhs](Node& node) {
                               Node& pa = parent(node, 0);
                               Node& pb = parent(node, 1);
                               const double* g = node.grad.data();
                               if (shared_rhs) {
                                 if (pa.requires_grad)
                                   gemm_nt(g, pb.data.data(), pa.ensure_grad().data(), batch * m, k, n);
                                 if (pb.requires_grad)
                                   gemm_tn(pa.data.data(), g, pb.ensure_grad().data(), batch * m, k, n);
                                 return;
                               }
                               for (std::size_t t = 0; t < batch; ++t) {
                                 if (pa.requires_grad)
                                   gemm_nt(g + t * m * n, pb.data.data() + t * k * n,
                                           pa.ensure_grad().data() + t * m * k, m, k, n);
                                 if (pb.requires_grad)
                                   gemm_tn(pa.data.data() + t * m * k, g + t * m * n,
                                           pb.ensure_grad().data() + t * k * n, m, k, n);
                               }
                             });
}

Tensor transpose(const Tensor& x) {
  const auto& s = x.shape();
  if (s.size() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(s));
  std::size_t r = s[s.size() - 2], c = s[s.size() - 1];
  std::size_t batch = x.numel() / (r * c);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t t = 0; t < batch; ++t)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[t * r * c + j * r + i] = xd[t * r * c + i * c + j];
  OpAudit::record("transpose", 0);
  return Tensor::make_result("transpose", out_shape, std::move(out), {x}, [batch, r, c](Node& n) {
    auto& gp = parent(n, 0).ensure_grad();
    for (std::size_t t = 0; t < batch; ++t)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gp[t * r * c + i * c + j] += n.grad[t * r * c + j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  auto xd = x.data();
  OpAudit::record("reshape", 0);
  return Tensor::make_result("reshape", std::move(shape), std::vector<double>(xd.begin(), xd.end()), {x},
                             [](Node& n) {
                               auto& gp = parent(n, 0).ensure_grad();
                               for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += n.grad[i];
                             });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  OpAudit::record("sum", 0);
  return Tensor::make_result("sum", {1}, {acc}, {x}, [](Node& n) {
    auto& gp = parent(n, 0).ensure_grad();
    for (auto& g : gp) g += n.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  double count = static_cast<double>(x.numel());
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  OpAudit::record("mean", 1);
  return Tensor::make_result("mean", {1}, {acc / count}, {x}, [count](Node& n) {
    auto& gp = parent(n, 0).ensure_grad();
    double g = n.grad[0] / count;
    for (auto& v : gp) v += g;
  });
}

Tensor sum(const Tensor& x, std::size_t axis) {
  auto v = axis_view(x.shape(), axis);
  auto xd = x.data();
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.n; ++i)
      for (std::size_t j = 0; j < v.inner; ++j) out[o * v.inner + j] += xd[(o * v.n + i) * v.inner + j];
  OpAudit::record("sum_axis", 0);
  return Tensor::make_result("sum_axis", drop_axis(x.shape(), axis), std::move(out), {x}, [v](Node& n) {
    auto& gp = parent(n, 0).ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < v.n; ++i)
        for (std::size_t j = 0; j < v.inner; ++j) gp[(o * v.n + i) * v.inner + j] += n.grad[o * v.inner + j];
  });
}

Tensor mean(const Tensor& x, std::size_t axis) {
  auto v = axis_view(x.shape(), axis);
  return scale(sum(x, axis), 1.0 / static_cast<double>(v.n));
}

Tensor max(const Tensor& x, std::size_t axis) {
  auto v = axis_view(x.shape(), axis);
  auto xd = x.data();
  std::vector<double> out(v.outer * v.inner);
  std::vector<std::size_t> arg(v.outer * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t j = 0; j < v.inner; ++j) {
      std::size_t best = 0;
      double bv = xd[o * v.n * v.inner + j];
      for (std::size_t i = 1; i < v.n; ++i) {
        double c = xd[(o * v.n + i) * v.inner + j];
        if (c > bv) {
          bv = c;
          best = i;
        }
      }
      out[o * v.inner + j] = bv;
      arg[o * v.inner + j] = (o * v.n + best) * v.inner + j;
    }
  OpAudit::record("max_axis", 0);
  return Tensor::make_result("max_axis", drop_axis(x.shape(), axis), std::move(out), {x},
                             [arg = std::move(arg)](Node& n) {
                               auto& gp = parent(n, 0).ensure_grad();
                               for (std::size_t i = 0; i < arg.size(); ++i) gp[arg[i]] += n.grad[i];
                             });
}

Tensor l2_normalize(const Tensor& x, std::size_t axis, double eps) {
  auto v = axis_view(x.shape(), axis);
  auto xd = x.data();
  std::vector<double> out(xd.size());
  std::vector<double> norms(v.outer * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t j = 0; j < v.inner; ++j) {
      double ss = eps * eps;
      for (std::size_t i = 0; i < v.n; ++i) {
        double c = xd[(o * v.n + i) * v.inner + j];
        ss += c * c;
      }
      double r = std::sqrt(ss);
      norms[o * v.inner + j] = r;
      for (std::size_t i = 0; i < v.n; ++i) {
        std::size_t idx = (o * v.n + i) * v.inner + j;
        out[idx] = xd[idx] / r;
      }
    }
  OpAudit::record("l2_normalize", 2 * xd.size());
  return Tensor::make_result("l2_normalize", x.shape(), std::move(out), {x},
                             [v, norms = std::move(norms)](Node& n) {
                               auto& gp = parent(n, 0).ensure_grad();
                               const auto& y = n.data;
                               const auto& g = n.grad;
                               for (std::size_t o = 0; o < v.outer; ++o)
                                 for (std::size_t j = 0; j < v.inner; ++j) {
                                   double dot = 0.0;
                                   for (std::size_t i = 0; i < v.n; ++i) {
                                     std::size_t idx = (o * v.n + i) * v.inner + j;
                                     dot += g[idx] * y[idx];
                                   }
                                   double r = norms[o * v.inner + j];
                                   for (std::size_t i = 0; i < v.n; ++i) {
                                     std::size_t idx = (o * v.n + i) * v.inner + j;
                                     gp[idx] += (g[idx] - y[idx] * dot) / r;
                                   }
                                 }
                             });
}

namespace {

// Shared backward for softmax-like ops: dx = y * (g - sum(g*y)) per row.
void softmax_backward(Node& n, AxisView v) {
  auto& gp = parent(n, 0).ensure_grad();
  const auto& y = n.data;
  const auto& g = n.grad;
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t j = 0; j < v.inner; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < v.n; ++i) {
        std::size_t idx = (o * v.n + i) * v.inner + j;
        dot += g[idx] * y[idx];
      }
      for (std::size_t i = 0; i < v.n; ++i) {
        std::size_t idx = (o * v.n + i) * v.inner + j;
        gp[idx] += y[idx] * (g[idx] - dot);
      }
    }
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  auto v = axis_view(x.shape(), axis);
  auto xd = x.data();
  for (double c : xd) {
    if (!std::isfinite(c)) throw DomainError("softmax: non-finite input");
  }
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t j = 0; j < v.inner; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < v.n; ++i) mx = std::max(mx, xd[(o * v.n + i) * v.inner + j]);
      double z = 0.0;
      for (std::size_t i = 0; i < v.n; ++i) {
        std::size_t idx = (o * v.n + i) * v.inner + j;
        out[idx] = std::exp(xd[idx] - mx);
        z += out[idx];
      }
      for (std::size_t i = 0; i < v.n; ++i) out[(o * v.n + i) * v.inner + j] /= z;
    }
  OpAudit::record("softmax", xd.size());
  return Tensor::make_result("softmax", x.shape(), std::move(out), {x}, [v](Node& n) { softmax_backward(n, v); });
}

Tensor masked_softmax(const Tensor& x, const std::vector<std::vector<bool>>& mask) {
  const auto& s = x.shape();
  if (s.size() < 2) throw DimensionError("masked_softmax needs rank >= 2, got " + shape_str(s));
  std::size_t rows = s[s.size() - 2], cols = s[s.size() - 1];
  if (mask.size() != rows) throw DimensionError("masked_softmax: mask rows mismatch for " + shape_str(s));
  for (std::size_t r = 0; r < rows; ++r) {
    if (mask[r].size() != cols) throw DimensionError("masked_softmax: mask cols mismatch for " + shape_str(s));
    if (std::none_of(mask[r].begin(), mask[r].end(), [](bool b) { return b; })) {
      throw DimensionError("masked_softmax: row " + std::to_string(r) + " has no admissible entry");
    }
  }
  auto xd = x.data();
  std::size_t batch = xd.size() / (rows * cols);
  std::vector<double> out(xd.size(), 0.0);
  for (std::size_t t = 0; t < batch; ++t)
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = xd.data() + (t * rows + r) * cols;
      double* yr = out.data() + (t * rows + r) * cols;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < cols; ++c)
        if (mask[r][c]) mx = std::max(mx, xr[c]);
      double z = 0.0;
      for (std::size_t c = 0; c < cols; ++c)
        if (mask[r][c]) {
          yr[c] = std::exp(xr[c] - mx);
          z += yr[c];
        }
      for (std::size_t c = 0; c < cols; ++c) yr[c] /= z;
    }
  OpAudit::record("masked_softmax", xd.size());
  AxisView v{batch * rows, cols, 1};
  // Masked outputs are exactly 0, so the generic softmax backward gives them 0 gradient.
  return Tensor::make_result("masked_softmax", s, std::move(out), {x}, [v](Node& n) { softmax_backward(n, v); });
}

Tensor pool(const Tensor& f, PoolKind kind) {
  const auto& s = f.shape();
  if (s.size() < 3) throw DimensionError("pool needs [..., S, h, w], got " + shape_str(s));
  std::size_t hw = s[s.size() - 2] * s[s.size() - 1];
  Shape flat(s.begin(), s.end() - 2);
  flat.push_back(hw);
  auto spatial = reshape(f, flat);
  return kind == PoolKind::kAvg ? mean(spatial, flat.size() - 1) : max(spatial, flat.size() - 1);
}

// ---------------------------------------------------------------------------
// structural

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  auto v = axis_view(x.shape(), axis);
  if (length == 0 || start + length > v.n) {
    throw DimensionError("narrow: [" + std::to_string(start) + ", +" + std::to_string(length) + ") out of " +
                         shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  auto xd = x.data();
  std::vector<double> out(v.outer * length * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy_n(xd.data() + (o * v.n + start) * v.inner, length * v.inner, out.data() + o * length * v.inner);
  OpAudit::record("narrow", 0);
  return Tensor::make_result("narrow", out_shape, std::move(out), {x}, [v, start, length](Node& n) {
    auto& gp = parent(n, 0).ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < length * v.inner; ++i)
        gp[(o * v.n + start) * v.inner + i] += n.grad[o * length * v.inner + i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw DimensionError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    auto ps = p.shape();
    if (ps.size() != out_shape.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t d = 0; d < ps.size(); ++d) {
      if (d != axis && ps[d] != out_shape[d]) {
        throw DimensionError("concat: " + shape_str(ps) + " vs " + shape_str(out_shape));
      }
    }
    total += ps[axis];
  }
  out_shape[axis] = total;
  auto v = axis_view(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::size_t len = p.dim(axis);
    auto pd = p.data();
    for (std::size_t o = 0; o < v.outer; ++o)
      std::copy_n(pd.data() + o * len * v.inner, len * v.inner, out.data() + (o * v.n + off) * v.inner);
    off += len;
  }
  OpAudit::record("concat", 0);
  return Tensor::make_result("concat", out_shape, std::move(out), parts, [v, offsets](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      Node& p = parent(n, k);
      if (!p.requires_grad) continue;
      auto& gp = p.ensure_grad();
      std::size_t len = p.data.size() / (v.outer * v.inner);
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < len * v.inner; ++i)
          gp[o * len * v.inner + i] += n.grad[(o * v.n + offsets[k]) * v.inner + i];
    }
  });
}

Tensor index_select(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& index) {
  auto v = axis_view(x.shape(), axis);
  if (index.empty()) throw DimensionError("index_select: empty index");
  for (auto i : index) {
    if (i >= v.n) throw DimensionError("index_select: index " + std::to_string(i) + " out of " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = index.size();
  auto xd = x.data();
  std::size_t m = index.size();
  std::vector<double> out(v.outer * m * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t k = 0; k < m; ++k)
      std::copy_n(xd.data() + (o * v.n + index[k]) * v.inner, v.inner, out.data() + (o * m + k) * v.inner);
  OpAudit::record("index_select", 0);
  return Tensor::make_result("index_select", out_shape, std::move(out), {x}, [v, index](Node& n) {
    auto& gp = parent(n, 0).ensure_grad();
    std::size_t m = index.size();
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t j = 0; j < v.inner; ++j)
          gp[(o * v.n + index[k]) * v.inner + j] += n.grad[(o * m + k) * v.inner + j];
  });
}

// ---------------------------------------------------------------------------
// conv2d via im2col

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opts) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (xs.size() != 4 || ws.size() != 4 || ws[1] != xs[1] || ws[2] != ws[3]) {
    throw DimensionError("conv2d: input " + shape_str(xs) + " weight " + shape_str(ws));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != ws[0])) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " for weight " + shape_str(ws));
  }
  if (opts.stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::size_t O = ws[0], K = ws[2], S = opts.stride, P = opts.padding;
  if (H + 2 * P < K || W + 2 * P < K) throw DimensionError("conv2d: kernel larger than padded input");
  const std::size_t Ho = (H + 2 * P - K) / S + 1, Wo = (W + 2 * P - K) / S + 1;
  const std::size_t ckk = C * K * K, hw = Ho * Wo;

  auto xd = x.data();
  auto wd = weight.data();
  // cols[b][q][pos], q = (c, ky, kx)
  std::vector<double> cols(B * ckk * hw, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ky = 0; ky < K; ++ky)
        for (std::size_t kx = 0; kx < K; ++kx) {
          double* row = cols.data() + (b * ckk + (c * K + ky) * K + kx) * hw;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * S + ky) - static_cast<std::ptrdiff_t>(P);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * S + kx) - static_cast<std::ptrdiff_t>(P);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              row[oy * Wo + ox] = xd[((b * C + c) * H + iy) * W + ix];
            }
          }
        }
  std::vector<double> out(B * O * hw, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    double* ob = out.data() + b * O * hw;
    if (bias.defined()) {
      auto bd = bias.data();
      for (std::size_t o = 0; o < O; ++o) std::fill_n(ob + o * hw, hw, bd[o]);
    }
    gemm_nn(wd.data(), cols.data() + b * ckk * hw, ob, O, ckk, hw);
  }
  OpAudit::record("conv2d", B * O * ckk * hw);
  std::vector<Tensor> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return Tensor::make_result(
      "conv2d", {B, O, Ho, Wo}, std::move(out), parents,
      [cols = std::move(cols), B, C, H, W, O, K, S, P, Ho, Wo, ckk, hw](Node& n) {
        Node& px = parent(n, 0);
        Node& pw = parent(n, 1);
        const double* g = n.grad.data();
        if (n.parents.size() > 2 && parent(n, 2).requires_grad) {
          auto& gb = parent(n, 2).ensure_grad();
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < O; ++o)
              for (std::size_t i = 0; i < hw; ++i) gb[o] += g[(b * O + o) * hw + i];
        }
        if (pw.requires_grad) {
          double* gw = pw.ensure_grad().data();
          for (std::size_t b = 0; b < B; ++b) gemm_nt(g + b * O * hw, cols.data() + b * ckk * hw, gw, O, ckk, hw);
        }
        if (px.requires_grad) {
          auto& gx = px.ensure_grad();
          std::vector<double> dcols(ckk * hw);
          for (std::size_t b = 0; b < B; ++b) {
            std::fill(dcols.begin(), dcols.end(), 0.0);
            gemm_tn(pw.data.data(), g + b * O * hw, dcols.data(), O, ckk, hw);
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t ky = 0; ky < K; ++ky)
                for (std::size_t kx = 0; kx < K; ++kx) {
                  const double* row = dcols.data() + ((c * K + ky) * K + kx) * hw;
                  for (std::size_t oy = 0; oy < Ho; ++oy) {
                    std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * S + ky) - static_cast<std::ptrdiff_t>(P);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                      std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * S + kx) - static_cast<std::ptrdiff_t>(P);
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                      gx[((b * C + c) * H + iy) * W + ix] += row[oy * Wo + ox];
                    }
                  }
                }
          }
        }
      });
}

}  // namespace mlc
