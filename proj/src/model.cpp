#include "mlc/model.hpp"

#include <stdexcept>

#include "mlc/ops.hpp"

namespace mlc {

HeadKind parse_head(const std::string& name) {
  if (name == "plain") return HeadKind::kPlain;
  if (name == "gat") return HeadKind::kGat;
  if (name == "decoder") return HeadKind::kDecoder;
  if (name == "decoder+gat") return HeadKind::kDecoderGat;
  throw std::invalid_argument("unknown head '" + name + "' (plain | gat | decoder | decoder+gat)");
}

std::string to_string(HeadKind head) {
  switch (head) {
    case HeadKind::kPlain: return "plain";
    case HeadKind::kGat: return "gat";
    case HeadKind::kDecoder: return "decoder";
    case HeadKind::kDecoderGat: return "decoder+gat";
  }
  return "?";
}

Model::Model(ModelConfig cfg, std::uint64_t seed, std::optional<LabelGraph> graph)
    : cfg_(std::move(cfg)), graph_(std::move(graph)) {
  if (cfg_.classes == 0) throw std::invalid_argument("model: zero classes");
  Rng rng(seed);
  backbone_ = Backbone::init(cfg_.backbone, rng, store_);
  const std::size_t s = cfg_.backbone.out_channels();
  std::size_t dim = s;
  if (uses_decoder(cfg_.head)) {
    cfg_.decoder.classes = cfg_.classes;
    decoder_ = DecoderParams::init(cfg_.decoder, s, rng, store_);
    dim = cfg_.decoder.embed_dim;
  }
  if (uses_gat(cfg_.head)) {
    if (!graph_) {
      throw std::runtime_error("head '" + to_string(cfg_.head) +
                               "' needs label word embeddings; datasets with unnamed labels cannot use the graph branch");
    }
    if (graph_->embeddings.rank() != 2 || graph_->embeddings.dim(0) != cfg_.classes ||
        graph_->adjacency.size() != cfg_.classes) {
      throw DimensionError("model: label graph does not match " + std::to_string(cfg_.classes) + " classes");
    }
    cfg_.gat.out_channels = s;
    gat_ = GatParams::init(cfg_.gat, graph_->embeddings.dim(1), rng, store_);
  }
  bank_ = ClassifierBank::init(cfg_.classes, dim, cfg_.normalize, rng, store_);
}

Tensor Model::gate() const {
  if (frozen_) return *frozen_;
  return channel_weights(gat_forward(graph_->embeddings, graph_->adjacency, *gat_).h, cfg_.gat.activation);
}

Tensor Model::forward(const Tensor& x) const {
  Tensor f = backbone_.extract(x);
  switch (cfg_.head) {
    case HeadKind::kPlain:
      return project_embedding(add(pool(f, PoolKind::kAvg), pool(f, PoolKind::kMax)), bank_);
    case HeadKind::kGat:
      return project_embedding(reweight_and_pool(f, gate()), bank_);
    case HeadKind::kDecoder:
      return project_logits(decode(f, cfg_.decoder, *decoder_), cfg_.decoder, bank_);
    case HeadKind::kDecoderGat:
      return attach_gat_head(f, gate(), cfg_.decoder, *decoder_, bank_);
  }
  throw std::logic_error("unreachable head");
}

FrozenChannelWeights Model::compute_channel_weights() const {
  if (!gat_) throw std::logic_error("model: head '" + to_string(cfg_.head) + "' has no graph branch");
  Tensor w = channel_weights(gat_forward(graph_->embeddings, graph_->adjacency, *gat_).h, cfg_.gat.activation);
  return {{w.data().begin(), w.data().end()}};
}

void Model::freeze() { set_frozen(compute_channel_weights()); }

void Model::set_frozen(const FrozenChannelWeights& w) {
  if (!gat_) throw std::logic_error("model: head '" + to_string(cfg_.head) + "' has no graph branch");
  const std::size_t s = cfg_.backbone.out_channels();
  if (w.weights.size() != s) {
    throw DimensionError("frozen weights have " + std::to_string(w.weights.size()) + " channels, backbone has " +
                         std::to_string(s));
  }
  frozen_ = Tensor::from({s, 1, 1}, w.weights);
}

Checkpoint Model::to_checkpoint(const nlohmann::json& config) const {
  Checkpoint c;
  c.config = config;
  for (const auto& p : store_.entries()) c.tensors.emplace_back(p.name, p.value.clone());
  if (graph_) {
    const std::size_t k = graph_->adjacency.size();
    std::vector<double> adj(k * k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) adj[i * k + j] = graph_->adjacency[i][j] ? 1.0 : 0.0;
    c.tensors.emplace_back("buffer.embeddings", graph_->embeddings.clone());
    c.tensors.emplace_back("buffer.adjacency", Tensor::from({k, k}, std::move(adj)));
  }
  return c;
}

void Model::load_state(const Checkpoint& ckpt) {
  for (auto& p : store_.entries()) {
    const Tensor& src = ckpt.get(p.name);
    if (src.shape() != p.value.shape()) {
      throw DimensionError("checkpoint tensor '" + p.name + "' has shape " + shape_str(src.shape()) + ", model expects " +
                           shape_str(p.value.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), p.value.mutable_data().begin());
  }
}

std::optional<LabelGraph> graph_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.contains("buffer.embeddings")) return std::nullopt;
  LabelGraph g;
  g.embeddings = ckpt.get("buffer.embeddings");
  const Tensor& adj = ckpt.get("buffer.adjacency");
  const std::size_t k = adj.dim(0);
  g.adjacency.assign(k, std::vector<bool>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) g.adjacency[i][j] = adj.data()[i * k + j] != 0.0;
  return g;
}

}  // namespace mlc
