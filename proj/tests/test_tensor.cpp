#include <cmath>
#include <random>

#include "doctest.h"
#include "mlc/gradcheck.hpp"
#include "mlc/op_audit.hpp"
#include "mlc/ops.hpp"
#include "test_util.hpp"

using namespace mlc;
using mlc::testing::random_projection;
using mlc::testing::random_tensor;

namespace {

void check_all_close(std::span<const double> a, std::vector<double> b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol * std::max(1.0, std::abs(b[i])));
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({0, 2}), DimensionError);
  auto t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.at({1, 2}) == 6);
  CHECK(t.numel() == 6);
}

TEST_CASE("matmul examples") {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto r = matmul(eye, eye);
  check_all_close(r.data(), {1, 0, 0, 1}, 0);
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from({2, 1}, {1, 1});
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  check_all_close(c.data(), {3, 7}, 0);
  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 1})), DimensionError);
}

TEST_CASE("matmul gradient matches central differences") {
  std::mt19937_64 rng(7);
  auto a = random_tensor(rng, {3, 4});
  auto b = random_tensor(rng, {4, 2});
  auto rep = gradcheck([](const std::vector<Tensor>& in) { return random_projection(matmul(in[0], in[1]), 3); },
                       {a, b}, {.step = 1e-5, .tolerance = 1e-6});
  CHECK(rep.passed);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("elementwise examples") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(leaky_relu(Tensor::scalar(-1.0), 0.2).item() == doctest::Approx(-0.2).epsilon(1e-15));
  auto x = Tensor::scalar(3.0, true);
  auto y = power(x, 2.0);
  y.backward();
  CHECK(std::abs(x.grad()[0] - 6.0) < 1e-9);
  CHECK_THROWS_AS(log(Tensor::from({2}, {1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(log(Tensor::scalar(-2.0)), DomainError);
  auto s = sigmoid(Tensor::from({2}, {-800.0, 800.0}));
  CHECK(s.data()[0] == 0.0);
  CHECK(s.data()[1] == 1.0);
}

TEST_CASE("broadcast add and mul reduce gradients over broadcast axes") {
  auto col = Tensor::from({3, 1}, {1, 2, 3}, true);
  auto row = Tensor::from({1, 2}, {10, 20}, true);
  auto out = add(col, row);
  CHECK(out.shape() == Shape{3, 2});
  check_all_close(out.data(), {11, 21, 12, 22, 13, 23}, 0);
  sum(mul(out, out)).backward();
  // d/dcol_i = sum_j 2(col_i + row_j)
  check_all_close(col.grad(), {64, 68, 72}, 1e-15);
  check_all_close(row.grad(), {72, 132}, 1e-15);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
}

TEST_CASE("l2_normalize examples") {
  auto v = l2_normalize(Tensor::from({2}, {3.0, 4.0}), 0);
  check_all_close(v.data(), {0.6, 0.8}, 1e-15);
  auto u = Tensor::from({3}, {0.0, 1.0, 0.0});
  auto w = l2_normalize(u, 0);
  check_all_close(w.data(), {0.0, 1.0, 0.0}, 0);
  std::mt19937_64 rng(11);
  auto r = l2_normalize(random_tensor(rng, {5}), 0);
  double ss = 0;
  for (double x : r.data()) ss += x * x;
  CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-12);
  auto z = l2_normalize(Tensor::zeros({3}), 0);
  for (double x : z.data()) CHECK(x == 0.0);
}

TEST_CASE("pool examples") {
  auto c = pool(Tensor::full({2, 3, 3}, 1.75), PoolKind::kAvg);
  check_all_close(c.data(), {1.75, 1.75}, 0);
  auto m = pool(Tensor::full({2, 3, 3}, 1.75), PoolKind::kMax);
  check_all_close(m.data(), {1.75, 1.75}, 0);
  auto f = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  CHECK(pool(f, PoolKind::kAvg).item() == 2.5);
  CHECK(pool(f, PoolKind::kMax).item() == 4.0);
  CHECK_THROWS_AS(pool(Tensor::zeros({4, 4}), PoolKind::kAvg), DimensionError);
}

TEST_CASE("max pool routes gradient to the first maximum") {
  auto f = Tensor::from({1, 2, 2}, {5, 1, 5, 5}, true);
  pool(f, PoolKind::kMax).backward();
  check_all_close(f.grad(), {1, 0, 0, 0}, 0);
}

TEST_CASE("softmax examples") {
  check_all_close(softmax(Tensor::from({2}, {0, 0}), 0).data(), {0.5, 0.5}, 0);
  auto big = softmax(Tensor::from({2}, {1000, 0}), 0);
  CHECK(big.data()[0] == 1.0);
  CHECK(big.data()[1] >= 0.0);
  CHECK(big.data()[1] < 1e-300);
  std::mt19937_64 rng(5);
  auto s = softmax(random_tensor(rng, {6}, -5, 5), 0);
  double tot = 0;
  for (double x : s.data()) tot += x;
  CHECK(std::abs(tot - 1.0) < 1e-12);
}

TEST_CASE("masked softmax zeroes masked entries and rejects empty rows") {
  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto y = masked_softmax(x, {{true, false, true}, {false, true, false}});
  CHECK(y.at({0, 1}) == 0.0);
  CHECK(y.at({1, 1}) == 1.0);
  CHECK(std::abs(y.at({0, 0}) + y.at({0, 2}) - 1.0) < 1e-15);
  CHECK_THROWS_AS(masked_softmax(x, {{true, true, true}, {false, false, false}}), DimensionError);
}

TEST_CASE("gradcheck is exact for a linear function") {
  std::mt19937_64 rng(1);
  auto x = random_tensor(rng, {4});
  auto coeff = random_tensor(rng, {4});
  auto rep = gradcheck([&](const std::vector<Tensor>& in) { return sum(mul(in[0], coeff)); }, {x},
                       {.tolerance = 1e-10});
  CHECK(rep.passed);
  CHECK(rep.max_rel_error < 1e-10);
}

TEST_CASE("gradcheck reports non-finite values with their location") {
  auto x = Tensor::from({2}, {1.0, 1.0});
  auto rep = gradcheck(
      [](const std::vector<Tensor>& in) {
        auto d = in[0].data();
        // Blows up only when the second element is perturbed upward.
        return d[1] > 1.0 ? Tensor::scalar(std::numeric_limits<double>::infinity()) : sum(in[0]);
      },
      {x});
  CHECK_FALSE(rep.passed);
  CHECK(rep.worst_index == 1);
  CHECK_FALSE(rep.failure.empty());
}

// Every exported differentiable op, checked on 100 seeds.
TEST_CASE("all ops agree with central differences on 100 seeds") {
  using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
  struct Case {
    const char* name;
    std::vector<Shape> shapes;
    Fn fn;
    double lo = -1.0, hi = 1.0;
  };
  const std::vector<bool> row0{true, true, false}, row1{false, true, true};
  std::vector<Case> cases{
      {"add", {{3, 4}, {4}}, [](auto& in) { return add(in[0], in[1]); }},
      {"sub", {{3, 1}, {1, 4}}, [](auto& in) { return sub(in[0], in[1]); }},
      {"mul", {{2, 3}, {2, 3}}, [](auto& in) { return mul(in[0], in[1]); }},
      {"div", {{2, 3}, {3}}, [](auto& in) { return div(in[0], in[1]); }, 0.5, 2.0},
      {"sigmoid", {{5}}, [](auto& in) { return sigmoid(in[0]); }, -4, 4},
      {"exp", {{5}}, [](auto& in) { return exp(in[0]); }},
      {"log", {{5}}, [](auto& in) { return log(in[0]); }, 0.5, 3.0},
      {"leaky_relu", {{6}}, [](auto& in) { return leaky_relu(in[0], 0.2); }},
      {"elu", {{6}}, [](auto& in) { return elu(in[0]); }},
      {"power", {{4}}, [](auto& in) { return power(in[0], 2.5); }, 0.5, 2.0},
      {"matmul", {{3, 4}, {4, 2}}, [](auto& in) { return matmul(in[0], in[1]); }},
      {"bmm", {{2, 3, 4}, {2, 4, 2}}, [](auto& in) { return matmul(in[0], in[1]); }},
      {"bmm_shared", {{2, 3, 4}, {4, 2}}, [](auto& in) { return matmul(in[0], in[1]); }},
      {"transpose", {{2, 3, 4}}, [](auto& in) { return transpose(in[0]); }},
      {"sum_axis", {{2, 3, 4}}, [](auto& in) { return sum(in[0], 1); }},
      {"mean_axis", {{2, 3, 4}}, [](auto& in) { return mean(in[0], 2); }},
      {"max_axis", {{3, 5}}, [](auto& in) { return max(in[0], 1); }},
      {"l2_normalize", {{3, 5}}, [](auto& in) { return l2_normalize(in[0], 1); }},
      {"softmax", {{3, 4}}, [](auto& in) { return softmax(in[0], 1); }, -3, 3},
      {"masked_softmax", {{2, 2, 3}},
       [row0, row1](auto& in) { return masked_softmax(in[0], {row0, row1}); }, -3, 3},
      {"pool_avg", {{2, 3, 2, 2}}, [](auto& in) { return pool(in[0], PoolKind::kAvg); }},
      {"pool_max", {{2, 3, 2, 2}}, [](auto& in) { return pool(in[0], PoolKind::kMax); }},
      {"narrow", {{3, 6}}, [](auto& in) { return narrow(in[0], 1, 2, 3); }},
      {"concat", {{2, 3}, {2, 2}}, [](auto& in) { return concat({in[0], in[1]}, 1); }},
      {"index_select", {{4, 3}}, [](auto& in) { return index_select(in[0], 0, {3, 0, 0, 2}); }},
      {"conv2d", {{2, 2, 5, 5}, {3, 2, 3, 3}, {3}},
       [](auto& in) { return conv2d(in[0], in[1], in[2], {.stride = 2, .padding = 1}); }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    double worst = 0.0;
    for (unsigned seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) inputs.push_back(random_tensor(rng, s, c.lo, c.hi));
      auto fn = c.fn;
      auto rep = gradcheck([fn, seed](const std::vector<Tensor>& in) { return random_projection(fn(in), seed + 1000); },
                           inputs);
      CHECK_MESSAGE(rep.failure.empty(), rep.failure);
      worst = std::max(worst, rep.max_rel_error);
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("gradients do not depend on tape construction order") {
  std::mt19937_64 rng(3);
  auto base = random_tensor(rng, {4, 3});
  auto w = random_tensor(rng, {3, 2});
  auto run = [&](bool forward_order) {
    auto x = base.clone(true);
    Tensor a, b;
    if (forward_order) {
      a = sum(sigmoid(matmul(x, w)));
      b = sum(softmax(x, 1));
    } else {
      b = sum(softmax(x, 1));
      a = sum(sigmoid(matmul(x, w)));
    }
    add(a, b).backward();
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  auto g1 = run(true);
  auto g2 = run(false);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(g1[i] - g2[i]) <= 1e-12);
}

TEST_CASE("a node shared by two paths is visited once") {
  auto x = Tensor::scalar(2.0, true);
  auto y = mul(x, x);
  auto z = add(y, y);
  z.backward();
  CHECK(x.grad()[0] == 8.0);
}

TEST_CASE("op audit counts forward ops in scope only") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({3, 4});
  OpAudit audit;
  matmul(a, b);
  mul(a, a);
  CHECK(audit.calls("matmul") == 1);
  CHECK(audit.multiplies("matmul") == 24);
  CHECK(audit.multiplies("mul") == 6);
  {
    OpAudit inner;
    sigmoid(a);
    CHECK(inner.calls("sigmoid") == 1);
  }
  CHECK(audit.calls("sigmoid") == 0);
}
