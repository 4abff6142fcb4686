#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mlc/backbone.hpp"
#include "mlc/checkpoint.hpp"
#include "mlc/decoder.hpp"
#include "mlc/label_graph.hpp"
#include "mlc/params.hpp"

namespace mlc {

enum class HeadKind { kPlain, kGat, kDecoder, kDecoderGat };

HeadKind parse_head(const std::string& name);
std::string to_string(HeadKind head);
inline bool uses_gat(HeadKind h) { return h == HeadKind::kGat || h == HeadKind::kDecoderGat; }
inline bool uses_decoder(HeadKind h) { return h == HeadKind::kDecoder || h == HeadKind::kDecoderGat; }

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t classes = 0;
  HeadKind head = HeadKind::kDecoder;
  bool normalize = true;  // cosine logits for the angular margin loss
  DecoderConfig decoder;  // `classes` is taken from above
  GatConfig gat;          // `out_channels` is taken from the backbone
};

/// Inputs of the graph branch: label word vectors and the binarized graph.
struct LabelGraph {
  Tensor embeddings;  // [K, N]
  std::vector<std::vector<bool>> adjacency;
};

/// Backbone plus one of the four heads:
///   plain        pooled features, cosine (or affine) classifiers
///   gat          pooled features gated by the graph branch
///   decoder      cross-attention decoder over the spatial features
///   decoder+gat  decoder over gated features
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed, std::optional<LabelGraph> graph = std::nullopt);
  Model(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// x: [B, C, H, W] -> logits [B, K] (cosines when normalize is set).
  Tensor forward(const Tensor& x) const;

  /// Channel weights from the live graph branch.
  FrozenChannelWeights compute_channel_weights() const;
  /// Caches the channel weights; later forwards skip the graph computation.
  void freeze();
  void set_frozen(const FrozenChannelWeights& w);
  void unfreeze() { frozen_.reset(); }
  bool frozen() const { return frozen_.has_value(); }

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const std::optional<LabelGraph>& graph() const { return graph_; }

  /// Parameters plus graph buffers, under the given config header.
  Checkpoint to_checkpoint(const nlohmann::json& config) const;
  /// Copies parameter values by name; shapes must match.
  void load_state(const Checkpoint& ckpt);

 private:
  Tensor gate() const;

  ModelConfig cfg_;
  ParamStore store_;
  Backbone backbone_;
  std::optional<DecoderParams> decoder_;
  ClassifierBank bank_;
  std::optional<GatParams> gat_;
  std::optional<LabelGraph> graph_;
  std::optional<Tensor> frozen_;  // [S, 1, 1]
};

/// Rebuilds the graph buffers stored by Model::to_checkpoint, if present.
std::optional<LabelGraph> graph_from_checkpoint(const Checkpoint& ckpt);

}  // namespace mlc
