#include "mlc/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlc/label_graph.hpp"
#include "mlc/ops.hpp"

namespace mlc {

namespace {

// Attention is a set function of the positions; sorting tokens
// lexicographically fixes the summation order so the result is bitwise
// independent of the input order.
Tensor canonical_order(const Tensor& tokens) {
  const std::size_t b = tokens.dim(0), n = tokens.dim(1), s = tokens.dim(2);
  const auto d = tokens.data();
  std::vector<std::size_t> index;
  index.reserve(b * n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < b; ++i) {
    const double* base = d.data() + i * n * s;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return std::lexicographical_compare(base + x * s, base + (x + 1) * s, base + y * s, base + (y + 1) * s);
    });
    for (auto o : order) index.push_back(i * n + o);
  }
  return reshape(index_select(reshape(tokens, {b * n, s}), 0, index), {b, n, s});
}

}  // namespace

std::size_t DecoderConfig::group_count() const { return groups == 0 ? std::min<std::size_t>(100, classes) : groups; }

std::size_t DecoderConfig::group_size() const {
  const std::size_t l = group_count();
  return (classes + l - 1) / l;
}

std::vector<std::size_t> DecoderConfig::class_groups() const {
  std::vector<std::size_t> g(classes);
  for (std::size_t j = 0; j < classes; ++j) g[j] = group_of(j);
  return g;
}

void DecoderConfig::validate() const {
  if (classes == 0) throw DimensionError("decoder: zero classes");
  const std::size_t l = group_count();
  if (l == 0 || l > classes) throw DimensionError("decoder: group count must lie in [1, K]");
  // Contiguous ceil-sized groups leave the tail empty when (L - 1) * size >= K.
  if ((l - 1) * group_size() >= classes) {
    throw DimensionError("decoder: " + std::to_string(classes) + " classes in " + std::to_string(l) +
                         " groups of " + std::to_string(group_size()) + " leaves a group empty");
  }
  if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
    throw DimensionError("decoder: embed_dim must be a positive multiple of heads");
  }
  if (ffn_dim == 0) throw DimensionError("decoder: ffn_dim must be positive");
}

DecoderParams DecoderParams::init(const DecoderConfig& cfg, std::size_t in_channels, Rng& rng, ParamStore& store,
                                  const std::string& prefix) {
  cfg.validate();
  const std::size_t l = cfg.group_count(), m = cfg.embed_dim, f = cfg.ffn_dim, s = in_channels;
  DecoderParams p;
  p.queries = store.add(prefix + ".queries", glorot(rng, {l, m}, l, m));
  p.key_proj = store.add(prefix + ".key_proj", glorot(rng, {s, m}, s, m));
  p.value_proj = store.add(prefix + ".value_proj", glorot(rng, {s, m}, s, m));
  p.out_proj = store.add(prefix + ".out_proj", glorot(rng, {m, m}, m, m));
  p.ffn_w1 = store.add(prefix + ".ffn_w1", he_uniform(rng, {m, f}, m));
  p.ffn_b1 = store.add(prefix + ".ffn_b1", Tensor::zeros({f}));
  p.ffn_w2 = store.add(prefix + ".ffn_w2", glorot(rng, {f, m}, f, m));
  p.ffn_b2 = store.add(prefix + ".ffn_b2", Tensor::zeros({m}));
  return p;
}

ClassifierBank ClassifierBank::init(std::size_t classes, std::size_t dim, bool normalize, Rng& rng,
                                    ParamStore& store, const std::string& prefix) {
  ClassifierBank b;
  b.normalize = normalize;
  b.weight = store.add(prefix + ".weight", glorot(rng, {classes, dim}, dim, classes));
  if (!normalize) b.bias = store.add(prefix + ".bias", Tensor::zeros({classes}));
  return b;
}

Tensor decode(const Tensor& f, const DecoderConfig& cfg, const DecoderParams& params) {
  cfg.validate();
  const bool single = f.rank() == 3;
  if (!single && f.rank() != 4) throw DimensionError("decode: expected [S,h,w] or [B,S,h,w], got " + shape_str(f.shape()));
  const auto& fs = f.shape();
  const std::size_t b = single ? 1 : fs[0];
  const std::size_t s = fs[fs.size() - 3];
  const std::size_t hw = fs[fs.size() - 2] * fs[fs.size() - 1];
  if (params.key_proj.dim(0) != s) {
    throw DimensionError("decode: features have " + std::to_string(s) + " channels, projections expect " +
                         std::to_string(params.key_proj.dim(0)));
  }
  const std::size_t m = cfg.embed_dim, dh = m / cfg.heads;
  if (params.queries.shape() != Shape{cfg.group_count(), m}) throw DimensionError("decode: query shape mismatch");

  Tensor tokens = canonical_order(transpose(reshape(f, {b, s, hw})));  // [B, hw, S]
  Tensor keys = matmul(tokens, params.key_proj);      // [B, hw, M]
  Tensor values = matmul(tokens, params.value_proj);  // [B, hw, M]
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    Tensor q = narrow(params.queries, 1, h * dh, dh);  // [L, dh]
    Tensor k = narrow(keys, 2, h * dh, dh);            // [B, hw, dh]
    Tensor v = narrow(values, 2, h * dh, dh);
    // Scores are built position-major so the shared query block is the right operand.
    Tensor scores_t = scale(matmul(k, transpose(q)), inv_sqrt);  // [B, hw, L]
    Tensor attn = transpose(softmax(scores_t, 1));               // [B, L, hw]
    heads.push_back(matmul(attn, v));                            // [B, L, dh]
  }
  Tensor attended = heads.size() == 1 ? heads[0] : concat(heads, 2);
  Tensor x1 = add(params.queries, matmul(attended, params.out_proj));
  Tensor hidden = relu(add(matmul(x1, params.ffn_w1), params.ffn_b1));
  Tensor out = add(x1, add(matmul(hidden, params.ffn_w2), params.ffn_b2));
  return single ? reshape(out, {cfg.group_count(), m}) : out;
}

Tensor project_logits(const Tensor& v, const DecoderConfig& cfg, const ClassifierBank& bank) {
  if (v.rank() != 3 || v.dim(1) != cfg.group_count()) {
    throw DimensionError("project_logits: expected [B, " + std::to_string(cfg.group_count()) + ", M], got " +
                         shape_str(v.shape()));
  }
  if (bank.weight.shape() != Shape{cfg.classes, v.dim(2)}) {
    throw DimensionError("project_logits: classifier bank " + shape_str(bank.weight.shape()) + " vs embeddings " +
                         shape_str(v.shape()));
  }
  Tensor per_class = index_select(v, 1, cfg.class_groups());  // [B, K, M]
  if (bank.normalize) {
    return sum(mul(l2_normalize(per_class, 2), l2_normalize(bank.weight, 1)), 2);
  }
  return add(sum(mul(per_class, bank.weight), 2), bank.bias);
}

Tensor project_embedding(const Tensor& v, const ClassifierBank& bank) {
  if (v.rank() != 2 || v.dim(1) != bank.weight.dim(1)) {
    throw DimensionError("project_embedding: embeddings " + shape_str(v.shape()) + " vs classifier bank " +
                         shape_str(bank.weight.shape()));
  }
  if (bank.normalize) return matmul(l2_normalize(v, 1), transpose(l2_normalize(bank.weight, 1)));
  return add(matmul(v, transpose(bank.weight)), bank.bias);
}

Tensor attach_gat_head(const Tensor& f, const Tensor& w, const DecoderConfig& cfg, const DecoderParams& params,
                       const ClassifierBank& bank) {
  Tensor v = decode(reweight(f, w), cfg, params);
  if (v.rank() == 2) v = reshape(v, {1, v.dim(0), v.dim(1)});
  return project_logits(v, cfg, bank);
}

}  // namespace mlc
