#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlc/params.hpp"
#include "mlc/tensor.hpp"

namespace mlc {

/// Thrown when the label graph cannot drive attention (a node with no
/// admissible neighbor, including itself).
class GraphStructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Label word vectors, one row per class, in class order.
struct WordEmbeddings {
  std::vector<std::string> names;
  Tensor matrix;  // [K, N]

  std::size_t classes() const { return names.size(); }
  std::size_t width() const { return matrix.dim(1); }
};

/// Reads the GLOVE text layout: `name v1 v2 ... vN` per line.
WordEmbeddings load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const WordEmbeddings& emb);
/// Reorders `emb` to follow `class_names`; every class needs a vector.
WordEmbeddings align_embeddings(const WordEmbeddings& emb, const std::vector<std::string>& class_names);

struct CorrelationConfig {
  double tau = 0.4;  // binarization threshold on P(L_j | L_i)
  double p = 0.2;    // off-diagonal mass after reweighting
};

using LabelSet = std::vector<std::size_t>;

struct CorrelationMatrix {
  std::size_t classes = 0;
  /// conditional[i * K + j] = P(L_j | L_i) = M_ij / N_i; diagonal is 1.
  std::vector<double> conditional;
  /// Binarized at tau, with self-loops. adjacency[i][j]: i attends to j.
  std::vector<std::vector<bool>> adjacency;
  /// Off-diagonal edges share mass p, diagonal 1 - p; rows without edges keep 1.
  std::vector<double> reweighted;

  double probability(std::size_t i, std::size_t j) const { return conditional[i * classes + j]; }
};

/// Estimates the label co-occurrence graph from per-sample label sets.
/// A class that never occurs is an error naming it.
CorrelationMatrix build_correlation(const std::vector<LabelSet>& annotations, std::size_t classes,
                                    const CorrelationConfig& cfg = {},
                                    const std::vector<std::string>& class_names = {});

enum class GateActivation { kSigmoid, kIdentity };

struct GatConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t hidden = 32;  // per-head width of hidden layers
  std::size_t out_channels = 0;  // S, must match the backbone
  double alpha = 0.2;  // LeakyReLU slope of the attention logits
  GateActivation activation = GateActivation::kSigmoid;
};

struct GatHead {
  Tensor weight;  // [in, out]
  Tensor att_src;  // [out]
  Tensor att_dst;  // [out]
};

struct GatParams {
  GatConfig config;
  std::vector<std::vector<GatHead>> layers;  // [layer][head]

  static GatParams init(const GatConfig& cfg, std::size_t in_width, Rng& rng, ParamStore& store,
                        const std::string& prefix = "gat");
};

struct GatOutput {
  Tensor h;  // [S, K]
  std::vector<std::vector<Tensor>> attention;  // [layer][head] -> [K, K]
};

/// Multi-head graph attention over the label graph. Hidden layers
/// concatenate heads and apply ELU; the last layer averages its heads.
GatOutput gat_forward(const Tensor& embeddings, const std::vector<std::vector<bool>>& adjacency,
                      const GatParams& params);

/// w = gate(max over the node axis of h): [S, K] -> [S].
Tensor channel_weights(const Tensor& h, GateActivation activation = GateActivation::kSigmoid);

/// Scales each channel of f ([S, h, w] or [B, S, h, w]) by w ([S] or [S, 1, 1]).
Tensor reweight(const Tensor& f, const Tensor& w);

/// GAP(w * f) + GMP(w * f), i.e. w_c * (avg f_c + max f_c) for w >= 0.
Tensor reweight_and_pool(const Tensor& f, const Tensor& w);

/// Channel weights computed once and cached for inference.
struct FrozenChannelWeights {
  std::vector<double> weights;

  Tensor tensor() const;
  /// JSON with fields `s`, `weights`, `checksum`.
  void save(const std::filesystem::path& path) const;
  static FrozenChannelWeights load(const std::filesystem::path& path);
};

FrozenChannelWeights freeze_branch(const WordEmbeddings& emb, const CorrelationMatrix& z, const GatParams& params);

}  // namespace mlc
