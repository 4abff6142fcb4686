#pragma once

#include <string>
#include <vector>

#include "mlc/params.hpp"
#include "mlc/tensor.hpp"

namespace mlc {

/// Cross-attention decoder settings. Classes are split into contiguous
/// groups of ceil(K / L); group g serves classes [g * size, (g + 1) * size).
struct DecoderConfig {
  std::size_t classes = 0;
  std::size_t groups = 0;  // 0 selects min(100, K)
  std::size_t embed_dim = 32;
  std::size_t heads = 4;
  std::size_t ffn_dim = 64;

  std::size_t group_count() const;
  std::size_t group_size() const;
  std::size_t group_of(std::size_t cls) const { return cls / group_size(); }
  std::vector<std::size_t> class_groups() const;
  void validate() const;
};

struct DecoderParams {
  Tensor queries;     // [L, M]
  Tensor key_proj;    // [S, M]
  Tensor value_proj;  // [S, M]
  Tensor out_proj;    // [M, M]
  Tensor ffn_w1;      // [M, F]
  Tensor ffn_b1;      // [F]
  Tensor ffn_w2;      // [F, M]
  Tensor ffn_b2;      // [M]

  static DecoderParams init(const DecoderConfig& cfg, std::size_t in_channels, Rng& rng, ParamStore& store,
                            const std::string& prefix = "decoder");
};

/// One binary classifier vector per class.
struct ClassifierBank {
  Tensor weight;  // [K, D]
  Tensor bias;    // [K], used only when normalize is false
  bool normalize = true;

  static ClassifierBank init(std::size_t classes, std::size_t dim, bool normalize, Rng& rng, ParamStore& store,
                             const std::string& prefix = "classifier");
};

/// Learnable group queries attend over the flattened spatial positions of
/// f ([S, h, w] or [B, S, h, w]); one block, no positional encoding.
/// Returns [L, M] or [B, L, M]: row g is the embedding of group g.
Tensor decode(const Tensor& f, const DecoderConfig& cfg, const DecoderParams& params);

/// Class j reads its group's embedding. With normalize set, both arguments
/// of every dot product are L2-normalized and the result is a cosine.
/// v: [B, L, M] -> [B, K].
Tensor project_logits(const Tensor& v, const DecoderConfig& cfg, const ClassifierBank& bank);

/// Single-embedding variant for the pooled heads. v: [B, D] -> [B, K].
Tensor project_embedding(const Tensor& v, const ClassifierBank& bank);

/// decode(w * f) followed by project_logits.
Tensor attach_gat_head(const Tensor& f, const Tensor& w, const DecoderConfig& cfg, const DecoderParams& params,
                       const ClassifierBank& bank);

}  // namespace mlc
