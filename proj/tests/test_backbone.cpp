#include <random>

#include "doctest.h"
#include "mlc/backbone.hpp"
#include "mlc/gradcheck.hpp"
#include "mlc/ops.hpp"
#include "test_util.hpp"

using namespace mlc;
using mlc::testing::random_projection;
using mlc::testing::random_tensor;

namespace {

// Direct stride-2, pad-1 convolution followed by ReLU.
std::vector<double> conv_relu_oracle(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), O = w.dim(0), k = w.dim(2);
  const std::size_t oh = H / 2, ow = W / 2;
  const long pad = static_cast<long>(k / 2);
  std::vector<double> out(O * oh * ow);
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = b.data()[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              long r = static_cast<long>(2 * i + u) - pad, q = static_cast<long>(2 * j + v) - pad;
              if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
              acc += w.at({o, c, u, v}) * x.at({c, static_cast<std::size_t>(r), static_cast<std::size_t>(q)});
            }
        out[(o * oh + i) * ow + j] = acc > 0 ? acc : 0.0;
      }
  return out;
}

}  // namespace

TEST_CASE("zero image gives zero features") {
  Rng rng(1);
  ParamStore store;
  auto bb = Backbone::init({}, rng, store);
  auto f = bb.extract(Tensor::zeros({3, 16, 16}));
  CHECK(f.shape() == Shape{32, 2, 2});
  for (double v : f.data()) CHECK(v == 0.0);
}

TEST_CASE("output shape follows the downscale factor") {
  Rng rng(2);
  ParamStore store;
  BackboneConfig cfg{.in_channels = 3, .height = 32, .width = 32, .stage_widths = {16, 64}};
  CHECK(cfg.downscale() == 4);
  auto bb = Backbone::init(cfg, rng, store);
  CHECK(bb.extract(random_tensor(rng, {3, 32, 32})).shape() == Shape{64, 8, 8});
  CHECK(bb.extract(random_tensor(rng, {2, 3, 32, 32})).shape() == Shape{2, 64, 8, 8});
}

TEST_CASE("indivisible extents are rejected") {
  Rng rng(3);
  ParamStore store;
  BackboneConfig bad{.height = 10, .width = 16, .stage_widths = {4, 4}};
  CHECK_THROWS_AS(bad.validate(), DimensionError);
  auto bb = Backbone::init({.height = 16, .width = 16, .stage_widths = {4, 4}}, rng, store);
  CHECK_THROWS_AS(bb.extract(Tensor::zeros({3, 10, 16})), DimensionError);
  CHECK_THROWS_AS(bb.extract(Tensor::zeros({4, 16, 16})), DimensionError);
}

TEST_CASE("single stage matches a direct convolution") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    ParamStore store;
    auto bb = Backbone::init({.in_channels = 2, .height = 6, .width = 8, .stage_widths = {3}}, rng, store);
    bb.biases[0] = random_tensor(rng, {3});
    auto x = random_tensor(rng, {2, 6, 8});
    auto got = bb.extract(x);
    auto want = conv_relu_oracle(x, bb.weights[0], bb.biases[0]);
    REQUIRE(got.numel() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.data()[i] - want[i]) <= 1e-12);
  }
}

TEST_CASE("backbone gradient on an 8x8 input") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    ParamStore store;
    auto bb = Backbone::init({.in_channels = 2, .height = 8, .width = 8, .stage_widths = {3, 4}}, rng, store);
    std::vector<Tensor> inputs{random_tensor(rng, {2, 8, 8})};
    for (auto& b : bb.biases) b = random_tensor(rng, b.shape(), -0.1, 0.1);
    for (const auto& w : bb.weights) inputs.push_back(w);
    for (const auto& b : bb.biases) inputs.push_back(b);
    auto rep = gradcheck(
        [&](const std::vector<Tensor>& in) {
          Backbone local = bb;
          for (std::size_t i = 0; i < 2; ++i) {
            local.weights[i] = in[1 + i];
            local.biases[i] = in[3 + i];
          }
          return random_projection(local.extract(in[0]), seed);
        },
        inputs);
    CHECK(rep.failure.empty());
    CHECK(rep.max_rel_error < 1e-5);
  }
}
