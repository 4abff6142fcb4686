#include "mlc/label_graph.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mlc/checksum.hpp"
#include "mlc/ops.hpp"

namespace mlc {

WordEmbeddings load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("label embeddings file '" + path.string() +
                             "' is missing; the graph branch needs a word vector per class name, so datasets "
                             "with unnamed labels cannot use it");
  }
  WordEmbeddings emb;
  std::vector<double> values;
  std::size_t width = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(v)) {
        throw std::runtime_error("embeddings line " + std::to_string(lineno) + ": bad value '" + tok + "'");
      }
      row.push_back(v);
    }
    if (row.empty()) throw std::runtime_error("embeddings line " + std::to_string(lineno) + ": no vector");
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw std::runtime_error("embeddings line " + std::to_string(lineno) + ": expected " + std::to_string(width) +
                               " values, got " + std::to_string(row.size()));
    }
    emb.names.push_back(name);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (emb.names.size() < 2) throw std::runtime_error("embeddings file needs at least two classes");
  emb.matrix = Tensor::from({emb.names.size(), width}, std::move(values));
  return emb;
}

void save_embeddings(const std::filesystem::path& path, const WordEmbeddings& emb) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  const auto d = emb.matrix.data();
  const std::size_t n = emb.width();
  for (std::size_t i = 0; i < emb.classes(); ++i) {
    out << emb.names[i];
    for (std::size_t j = 0; j < n; ++j) out << ' ' << d[i * n + j];
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

WordEmbeddings align_embeddings(const WordEmbeddings& emb, const std::vector<std::string>& class_names) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < emb.names.size(); ++i) index[emb.names[i]] = i;
  const std::size_t n = emb.width();
  const auto d = emb.matrix.data();
  std::vector<double> values;
  values.reserve(class_names.size() * n);
  for (const auto& name : class_names) {
    auto it = index.find(name);
    if (it == index.end()) {
      throw std::runtime_error("no word embedding for class '" + name +
                               "'; unnamed labels cannot feed the graph branch");
    }
    values.insert(values.end(), d.begin() + static_cast<std::ptrdiff_t>(it->second * n),
                  d.begin() + static_cast<std::ptrdiff_t>((it->second + 1) * n));
  }
  return {class_names, Tensor::from({class_names.size(), n}, std::move(values))};
}

CorrelationMatrix build_correlation(const std::vector<LabelSet>& annotations, std::size_t classes,
                                    const CorrelationConfig& cfg, const std::vector<std::string>& class_names) {
  if (classes == 0) throw std::invalid_argument("build_correlation: zero classes");
  const std::size_t K = classes;
  std::vector<double> occur(K, 0.0), co(K * K, 0.0);
  for (const auto& sample : annotations) {
    // Set semantics: duplicates within a sample count once.
    std::set<std::size_t> labels(sample.begin(), sample.end());
    for (auto i : labels) {
      if (i >= K) throw std::out_of_range("build_correlation: label " + std::to_string(i) + " out of range");
      occur[i] += 1.0;
      for (auto j : labels) {
        if (j != i) co[i * K + j] += 1.0;
      }
    }
  }
  for (std::size_t i = 0; i < K; ++i) {
    if (occur[i] == 0.0) {
      std::string name = i < class_names.size() ? class_names[i] : std::to_string(i);
      throw std::runtime_error("class '" + name + "' never occurs; its conditional probabilities are undefined");
    }
  }
  CorrelationMatrix z;
  z.classes = K;
  z.conditional.assign(K * K, 0.0);
  z.adjacency.assign(K, std::vector<bool>(K, false));
  z.reweighted.assign(K * K, 0.0);
  for (std::size_t i = 0; i < K; ++i) {
    std::size_t edges = 0;
    for (std::size_t j = 0; j < K; ++j) {
      double p = i == j ? 1.0 : co[i * K + j] / occur[i];
      z.conditional[i * K + j] = p;
      if (i != j && p >= cfg.tau) {
        z.adjacency[i][j] = true;
        ++edges;
      }
    }
    z.adjacency[i][i] = true;
    if (edges == 0) {
      z.reweighted[i * K + i] = 1.0;
      continue;
    }
    for (std::size_t j = 0; j < K; ++j) {
      if (j == i) {
        z.reweighted[i * K + j] = 1.0 - cfg.p;
      } else if (z.adjacency[i][j]) {
        z.reweighted[i * K + j] = cfg.p / static_cast<double>(edges);
      }
    }
  }
  return z;
}

GatParams GatParams::init(const GatConfig& cfg, std::size_t in_width, Rng& rng, ParamStore& store,
                          const std::string& prefix) {
  if (cfg.layers == 0 || cfg.heads == 0 || cfg.out_channels == 0) {
    throw std::invalid_argument("gat: layers, heads and out_channels must be positive");
  }
  GatParams params;
  params.config = cfg;
  std::size_t in = in_width;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const bool last = l + 1 == cfg.layers;
    const std::size_t out = last ? cfg.out_channels : cfg.hidden;
    std::vector<GatHead> heads;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      std::string p = prefix + ".layer" + std::to_string(l) + ".head" + std::to_string(h);
      GatHead head;
      head.weight = store.add(p + ".weight", glorot(rng, {in, out}, in, out));
      head.att_src = store.add(p + ".att_src", glorot(rng, {out}, out, 1));
      head.att_dst = store.add(p + ".att_dst", glorot(rng, {out}, out, 1));
      heads.push_back(head);
    }
    params.layers.push_back(std::move(heads));
    in = out * cfg.heads;
  }
  return params;
}

GatOutput gat_forward(const Tensor& embeddings, const std::vector<std::vector<bool>>& adjacency,
                      const GatParams& params) {
  if (embeddings.rank() != 2) throw DimensionError("gat_forward: embeddings must be [K, N]");
  const std::size_t K = embeddings.dim(0);
  if (adjacency.size() != K) throw DimensionError("gat_forward: adjacency does not match the class count");
  for (std::size_t i = 0; i < K; ++i) {
    if (adjacency[i].size() != K) throw DimensionError("gat_forward: adjacency is not square");
    bool any = false;
    for (bool b : adjacency[i]) any = any || b;
    if (!any) {
      throw GraphStructureError("gat_forward: node " + std::to_string(i) + " has no neighbor and no self-loop");
    }
  }
  GatOutput out;
  Tensor x = embeddings;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const bool last = l + 1 == params.layers.size();
    std::vector<Tensor> head_out;
    std::vector<Tensor> attn;
    for (const auto& head : params.layers[l]) {
      const std::size_t f = head.weight.dim(1);
      Tensor wh = matmul(x, head.weight);                                  // [K, F]
      Tensor src = matmul(wh, reshape(head.att_src, {f, 1}));              // [K, 1]
      Tensor dst = reshape(matmul(wh, reshape(head.att_dst, {f, 1})), {1, K});  // [1, K]
      Tensor logits = leaky_relu(add(src, dst), params.config.alpha);      // [K, K]
      Tensor a = masked_softmax(logits, adjacency);
      attn.push_back(a);
      head_out.push_back(matmul(a, wh));
    }
    out.attention.push_back(std::move(attn));
    if (last) {
      Tensor acc = head_out[0];
      for (std::size_t h = 1; h < head_out.size(); ++h) acc = add(acc, head_out[h]);
      x = scale(acc, 1.0 / static_cast<double>(head_out.size()));
    } else {
      x = elu(concat(head_out, 1));
    }
  }
  out.h = transpose(x);
  return out;
}

Tensor channel_weights(const Tensor& h, GateActivation activation) {
  if (h.rank() != 2) throw DimensionError("channel_weights: expected [S, K], got " + shape_str(h.shape()));
  Tensor pooled = max(h, 1);
  return activation == GateActivation::kSigmoid ? sigmoid(pooled) : pooled;
}

Tensor reweight(const Tensor& f, const Tensor& w) {
  const bool column = w.rank() == 3 && w.dim(1) == 1 && w.dim(2) == 1;
  if (f.rank() < 3 || !(w.rank() == 1 || column) || f.dim(f.rank() - 3) != w.dim(0)) {
    throw DimensionError("reweight: features " + shape_str(f.shape()) + " vs weights " + shape_str(w.shape()));
  }
  return mul(f, column ? w : reshape(w, {w.dim(0), 1, 1}));
}

Tensor reweight_and_pool(const Tensor& f, const Tensor& w) {
  Tensor weighted = reweight(f, w);
  return add(pool(weighted, PoolKind::kAvg), pool(weighted, PoolKind::kMax));
}

Tensor FrozenChannelWeights::tensor() const { return Tensor::from({weights.size()}, weights); }

void FrozenChannelWeights::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["s"] = weights.size();
  j["weights"] = weights;
  j["checksum"] = fnv1a_hex(std::span<const double>(weights));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

FrozenChannelWeights FrozenChannelWeights::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read frozen weights " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("frozen weights " + path.string() + ": " + e.what());
  }
  if (!j.contains("s") || !j.contains("weights") || !j.contains("checksum")) {
    throw std::runtime_error("frozen weights " + path.string() + ": missing field");
  }
  FrozenChannelWeights fw;
  fw.weights = j.at("weights").get<std::vector<double>>();
  if (fw.weights.size() != j.at("s").get<std::size_t>()) {
    throw std::runtime_error("frozen weights " + path.string() + ": length does not match s");
  }
  if (fnv1a_hex(std::span<const double>(fw.weights)) != j.at("checksum").get<std::string>()) {
    throw std::runtime_error("frozen weights " + path.string() + ": checksum mismatch");
  }
  return fw;
}

FrozenChannelWeights freeze_branch(const WordEmbeddings& emb, const CorrelationMatrix& z, const GatParams& params) {
  Tensor w = channel_weights(gat_forward(emb.matrix, z.adjacency, params).h, params.config.activation);
  return {{w.data().begin(), w.data().end()}};
}

}  // namespace mlc
