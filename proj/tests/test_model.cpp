#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "mlc/checkpoint.hpp"
#include "mlc/config.hpp"
#include "mlc/model.hpp"
#include "mlc/op_audit.hpp"
#include "mlc/ops.hpp"
#include "test_util.hpp"

using namespace mlc;
using mlc::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config(HeadKind head) {
  ModelConfig mc;
  mc.backbone = {.in_channels = 3, .height = 16, .width = 16, .stage_widths = {4, 6, 8}};
  mc.classes = 5;
  mc.head = head;
  mc.decoder = {.groups = 0, .embed_dim = 8, .heads = 2, .ffn_dim = 6};
  mc.gat = {.layers = 2, .heads = 2, .hidden = 4};
  return mc;
}

LabelGraph small_graph(unsigned seed) {
  Rng rng(seed);
  LabelGraph g{random_tensor(rng, {5, 6}), std::vector<std::vector<bool>>(5, std::vector<bool>(5, false))};
  for (std::size_t i = 0; i < 5; ++i) {
    g.adjacency[i][i] = true;
    g.adjacency[i][(i + 1) % 5] = true;
  }
  return g;
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "mlc_test_model";
  fs::create_directories(dir);
  return dir / name;
}

const std::set<std::string> kGraphOps{"leaky_relu", "masked_softmax", "elu", "concat", "max_axis", "sigmoid"};

}  // namespace

TEST_CASE("every head produces cosine logits") {
  for (auto head : {HeadKind::kPlain, HeadKind::kGat, HeadKind::kDecoder, HeadKind::kDecoderGat}) {
    Model m(small_config(head), 1, small_graph(1));
    Rng rng(2);
    auto logits = m.forward(random_tensor(rng, {3, 3, 16, 16}));
    CHECK(logits.shape() == Shape{3, 5});
    for (double v : logits.data()) CHECK((v >= -1 - 1e-9 && v <= 1 + 1e-9));
    CHECK(parse_head(to_string(head)) == head);
  }
  CHECK_THROWS(parse_head("resnet"));
}

TEST_CASE("graph heads need label embeddings") {
  CHECK_THROWS_WITH(Model(small_config(HeadKind::kGat), 1), doctest::Contains("unnamed labels"));
  CHECK_NOTHROW(Model(small_config(HeadKind::kDecoder), 1));
}

TEST_CASE("frozen branch reproduces live logits exactly") {
  for (auto head : {HeadKind::kGat, HeadKind::kDecoderGat}) {
    Model m(small_config(head), 3, small_graph(3));
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      auto x = random_tensor(rng, {2, 3, 16, 16});
      m.unfreeze();
      auto live = m.forward(x);
      m.freeze();
      auto frozen = m.forward(x);
      for (std::size_t i = 0; i < live.numel(); ++i) CHECK(live.data()[i] == frozen.data()[i]);
    }
    auto path = temp_path("frozen.json");
    m.compute_channel_weights().save(path);
    m.unfreeze();
    m.set_frozen(FrozenChannelWeights::load(path));
    Rng again(4);
    auto x = random_tensor(again, {2, 3, 16, 16});
    m.unfreeze();
    auto live = m.forward(x);
    m.set_frozen(FrozenChannelWeights::load(path));
    auto loaded = m.forward(x);
    for (std::size_t i = 0; i < live.numel(); ++i) CHECK(live.data()[i] == loaded.data()[i]);
  }
}

TEST_CASE("frozen inference adds one channel product and no graph work") {
  const std::pair<HeadKind, HeadKind> pairs[] = {{HeadKind::kGat, HeadKind::kPlain},
                                                 {HeadKind::kDecoderGat, HeadKind::kDecoder}};
  for (auto [gated, base] : pairs) {
    // Same seed and init order up to the graph branch, so the shared parts match in shape.
    Model with(small_config(gated), 5, small_graph(5));
    Model without(small_config(base), 5);
    with.freeze();
    Rng rng(6);
    auto x = random_tensor(rng, {2, 3, 16, 16});
    OpAudit a;
    with.forward(x);
    auto gated_counts = a.counts();
    OpAudit b;
    without.forward(x);
    auto base_counts = b.counts();
    for (const auto& op : kGraphOps) CHECK(gated_counts.count(op) == base_counts.count(op));
    std::uint64_t extra_calls = 0;
    for (const auto& [op, c] : gated_counts) {
      auto it = base_counts.find(op);
      const std::uint64_t base_calls = it == base_counts.end() ? 0 : it->second.calls;
      const std::uint64_t base_mults = it == base_counts.end() ? 0 : it->second.multiplies;
      extra_calls += c.calls - base_calls;
      if (op == "mul") {
        CHECK(c.calls == base_calls + 1);
        CHECK(c.multiplies == base_mults + 2 * 8 * 2 * 2);  // B * S * h * w
      } else {
        CHECK(c.calls == base_calls);
        CHECK(c.multiplies == base_mults);
      }
    }
    CHECK(extra_calls == 1);
  }
}

TEST_CASE("live branch runs graph attention") {
  Model m(small_config(HeadKind::kGat), 5, small_graph(5));
  Rng rng(6);
  OpAudit audit;
  m.forward(random_tensor(rng, {1, 3, 16, 16}));
  CHECK(audit.calls("masked_softmax") == 4);  // 2 layers x 2 heads
}

TEST_CASE("checkpoint round trip") {
  Model m(small_config(HeadKind::kDecoderGat), 7, small_graph(7));
  RunConfig cfg;
  auto path = temp_path("model.ckpt");
  save_checkpoint(path, m.to_checkpoint(cfg.to_json()));
  auto ckpt = load_checkpoint(path);
  CHECK(ckpt.config == cfg.to_json());
  Model other(small_config(HeadKind::kDecoderGat), 99, graph_from_checkpoint(ckpt));
  other.load_state(ckpt);
  Rng rng(8);
  auto x = random_tensor(rng, {2, 3, 16, 16});
  auto a = m.forward(x), b = other.forward(x);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);

  // flip one byte in the blob
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[bytes.size() - 3] ^= 0x10;
  {
    std::ofstream out(path, std::ios::binary);
    out << bytes;
  }
  CHECK_THROWS_WITH(load_checkpoint(path), doctest::Contains("checksum"));
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint at all";
  }
  CHECK_THROWS_WITH(load_checkpoint(path), doctest::Contains("not a checkpoint"));

  auto other_cfg = small_config(HeadKind::kPlain);
  other_cfg.backbone.stage_widths = {4, 6, 10};
  Model mismatched(other_cfg, 1);
  CHECK_THROWS(mismatched.load_state(m.to_checkpoint({})));
}

TEST_CASE("run config defaults and presets") {
  auto c = RunConfig::from_json(nlohmann::json::object());
  CHECK(c.aam.m == 0.0);
  CHECK(c.aam.k == 0.7);
  CHECK(c.ema_decay == 0.9997);
  CHECK(c.sam.rho == 0.05);
  CHECK(c.aam.s == 23);
  CHECK(c.sam.base.lr == 0.007);
  CHECK(c.aam.gamma_neg == 1);
  CHECK(c.aam.gamma_pos == 0);
  CHECK(c.model.normalize);

  auto voc = RunConfig::from_json({{"preset", "voc"}});
  CHECK(voc.aam.s == 17);
  CHECK(voc.aam.gamma_neg == 2);
  CHECK(voc.aam.gamma_pos == 1);
  CHECK(RunConfig::from_json({{"preset", "vg500"}}).aam.s == 25);
  auto asl = RunConfig::from_json({{"preset", "asl"}});
  CHECK(asl.loss == LossKind::kAsl);
  CHECK_FALSE(asl.model.normalize);
  CHECK(asl.asl.gamma_neg == 4);

  auto custom = RunConfig::from_json({{"preset", "voc"}, {"loss.s", 5.0}, {"model.head", "decoder+gat"}, {"train.epochs", 7}});
  CHECK(custom.aam.s == 5.0);
  CHECK(custom.model.head == HeadKind::kDecoderGat);
  CHECK(custom.epochs == 7);
  CHECK(RunConfig::from_json(custom.to_json()).to_json() == custom.to_json());

  CHECK_THROWS_WITH(RunConfig::from_json({{"loss.sclae", 3}}), doctest::Contains("loss.sclae"));
  CHECK_THROWS(RunConfig::from_json({{"preset", "imagenet"}}));
  CHECK_THROWS(RunConfig::from_json({{"loss.k", 2.0}}));
  CHECK_THROWS(RunConfig::from_json({{"train.epochs", "many"}}));
}
