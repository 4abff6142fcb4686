#include "mlc/gradcheck_suite.hpp"

#include <random>
#include <stdexcept>

#include "mlc/backbone.hpp"
#include "mlc/decoder.hpp"
#include "mlc/label_graph.hpp"
#include "mlc/losses.hpp"
#include "mlc/ops.hpp"

namespace mlc {

namespace {

Tensor uniform(Rng& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor labels(Rng& rng, Shape shape) {
  std::bernoulli_distribution coin(0.4);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = coin(rng) ? 1.0 : 0.0;
  return Tensor::from(std::move(shape), std::move(v));
}

// sum(out * r) for a fixed random r.
Tensor probe(const Tensor& out, Rng& rng) { return sum(mul(out, uniform(rng, out.shape(), -1, 1))); }

std::vector<Tensor> with_params(Tensor first, const ParamStore& store) {
  std::vector<Tensor> in{std::move(first)};
  for (const auto& p : store.entries()) in.push_back(p.value);
  return in;
}
const std::vector<std::vector<bool>> kAdjacency{
    {true, true, false, true}, {false, true, true, false}, {true, false, true, true}, {false, false, true, true}};

GradcheckReport one(const std::string& name, unsigned seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  if (name == "aam_loss") {
    auto cos = uniform(rng, {3, 5}, -0.95, 0.95);
    auto y = labels(rng, {3, 5});
    AamConfig c{.s = 5 + 20 * u(rng), .m = 0.1 * u(rng), .k = u(rng), .gamma_pos = 2 * u(rng), .gamma_neg = 2 * u(rng)};
    return gradcheck([&](const std::vector<Tensor>& in) { return aam_loss(in[0], y, c); }, {cos});
  }
  if (name == "asl_loss") {
    auto x = uniform(rng, {3, 5}, -3, 3);
    auto y = labels(rng, {3, 5});
    AslConfig c{.gamma_pos = u(rng), .gamma_neg = 1 + 3 * u(rng), .clip = 0.05};
    return gradcheck([&](const std::vector<Tensor>& in) { return asl_loss(in[0], y, c); }, {x});
  }
  if (name == "gat_forward") {
    ParamStore store;
    auto params = GatParams::init({.layers = 2, .heads = 2, .hidden = 3, .out_channels = 4}, 5, rng, store);
    auto emb = uniform(rng, {4, 5}, -1, 1);
    return gradcheck(
        [&](const std::vector<Tensor>& in) {
          GatParams local = params;
          std::size_t k = 1;
          for (auto& layer : local.layers)
            for (auto& head : layer) {
              head.weight = in[k++];
              head.att_src = in[k++];
              head.att_dst = in[k++];
            }
          Rng r(seed + 1);
          return probe(channel_weights(gat_forward(in[0], kAdjacency, local).h), r);
        },
        with_params(emb, store));
  }
  if (name == "decode") {
    ParamStore store;
    DecoderConfig cfg{.classes = 5, .groups = 3, .embed_dim = 4, .heads = 2, .ffn_dim = 3};
    auto p = DecoderParams::init(cfg, 3, rng, store);
    p.ffn_b1 = uniform(rng, {3}, -0.2, 0.2);
    auto f = uniform(rng, {2, 3, 2, 2}, -1, 1);
    return gradcheck(
        [&](const std::vector<Tensor>& in) {
          DecoderParams q = p;
          std::size_t i = 1;
          for (Tensor* t : {&q.queries, &q.key_proj, &q.value_proj, &q.out_proj, &q.ffn_w1, &q.ffn_b1, &q.ffn_w2,
                            &q.ffn_b2})
            *t = in[i++];
          Rng r(seed + 1);
          return probe(decode(in[0], cfg, q), r);
        },
        {f, p.queries, p.key_proj, p.value_proj, p.out_proj, p.ffn_w1, p.ffn_b1, p.ffn_w2, p.ffn_b2});
  }
  if (name == "extract") {
    ParamStore store;
    auto bb = Backbone::init({.in_channels = 2, .height = 8, .width = 8, .stage_widths = {3, 4}}, rng, store);
    for (auto& b : bb.biases) b = uniform(rng, b.shape(), -0.1, 0.1);
    std::vector<Tensor> in{uniform(rng, {2, 8, 8}, -1, 1)};
    for (const auto& w : bb.weights) in.push_back(w);
    for (const auto& b : bb.biases) in.push_back(b);
    return gradcheck(
        [&](const std::vector<Tensor>& v) {
          Backbone local = bb;
          for (std::size_t i = 0; i < 2; ++i) {
            local.weights[i] = v[1 + i];
            local.biases[i] = v[3 + i];
          }
          Rng r(seed + 1);
          return probe(local.extract(v[0]), r);
        },
        in);
  }
  if (name == "head") {
    // backbone -> graph gate -> decoder -> cosine classifiers -> AAM loss
    ParamStore store;
    auto bb = Backbone::init({.in_channels = 2, .height = 8, .width = 8, .stage_widths = {3, 4}}, rng, store);
    for (auto& b : bb.biases) b = uniform(rng, b.shape(), -0.1, 0.1);
    auto gat = GatParams::init({.layers = 2, .heads = 2, .hidden = 3, .out_channels = 4}, 3, rng, store);
    DecoderConfig dc{.classes = 4, .groups = 2, .embed_dim = 4, .heads = 2, .ffn_dim = 3};
    auto dec = DecoderParams::init(dc, 4, rng, store);
    auto bank = ClassifierBank::init(4, 4, true, rng, store);
    auto emb = uniform(rng, {4, 3}, -1, 1);
    auto x = uniform(rng, {2, 2, 8, 8}, -1, 1);
    auto y = labels(rng, {2, 4});
    AamConfig loss{.s = 10, .m = 0.05};

    std::vector<Tensor> inputs{x};
    for (std::size_t i = 0; i < 2; ++i) inputs.insert(inputs.end(), {bb.weights[i], bb.biases[i]});
    for (const auto& layer : gat.layers)
      for (const auto& h : layer) inputs.insert(inputs.end(), {h.weight, h.att_src, h.att_dst});
    inputs.insert(inputs.end(), {dec.queries, dec.key_proj, dec.value_proj, dec.out_proj, dec.ffn_w1, dec.ffn_b1,
                                 dec.ffn_w2, dec.ffn_b2, bank.weight});
    return gradcheck(
        [&](const std::vector<Tensor>& in) {
          std::size_t k = 1;
          Backbone b = bb;
          for (std::size_t i = 0; i < 2; ++i) {
            b.weights[i] = in[k++];
            b.biases[i] = in[k++];
          }
          GatParams g = gat;
          for (auto& layer : g.layers)
            for (auto& h : layer) {
              h.weight = in[k++];
              h.att_src = in[k++];
              h.att_dst = in[k++];
            }
          DecoderParams d = dec;
          for (Tensor* t : {&d.queries, &d.key_proj, &d.value_proj, &d.out_proj, &d.ffn_w1, &d.ffn_b1, &d.ffn_w2,
                            &d.ffn_b2})
            *t = in[k++];
          ClassifierBank c = bank;
          c.weight = in[k++];
          Tensor w = channel_weights(gat_forward(emb, kAdjacency, g).h);
          return aam_loss(attach_gat_head(b.extract(in[0]), w, dc, d, c), y, loss);
        },
        inputs);
  }
  throw std::invalid_argument("unknown gradcheck suite '" + name + "'");
}

}  // namespace

std::vector<std::string> gradcheck_suite_names() { return {"aam_loss", "asl_loss", "gat_forward", "decode", "extract", "head"}; }

std::vector<std::string> gradcheck_module_suites(const std::string& module) {
  if (module == "losses") return {"aam_loss", "asl_loss"};
  if (module == "label-graph") return {"gat_forward"};
  if (module == "decoder-head") return {"decode", "head"};
  if (module == "backbone") return {"extract"};
  if (module == "all") return gradcheck_suite_names();
  throw std::invalid_argument("unknown module '" + module + "' (losses | label-graph | decoder-head | backbone | all)");
}

SuiteResult run_gradcheck_suite(const std::string& name, std::size_t seeds) {
  SuiteResult r;
  r.name = name;
  r.seeds = seeds;
  r.tolerance = name == "head" ? 1e-4 : 1e-5;
  for (std::size_t s = 0; s < seeds; ++s) {
    auto rep = one(name, static_cast<unsigned>(s));
    if (!rep.failure.empty() && r.failure.empty()) r.failure = "seed " + std::to_string(s) + ": " + rep.failure;
    r.worst = std::max(r.worst, rep.max_rel_error);
  }
  return r;
}

}  // namespace mlc
