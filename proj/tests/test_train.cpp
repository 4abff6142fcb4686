#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "mlc/metrics.hpp"
#include "mlc/optim.hpp"
#include "mlc/synth.hpp"
#include "mlc/trainer.hpp"

using namespace mlc;
namespace fs = std::filesystem;

namespace {

MultilabelDataset tiny_data() {
  SynthSpec spec;
  spec.classes = 4;
  spec.samples = 80;
  spec.height = spec.width = 8;
  spec.priors.assign(4, 0.3);
  spec.seed = 11;
  return generate_synthetic(spec);
}

RunConfig tiny_config(const std::string& head = "decoder") {
  return RunConfig::from_json({{"model.height", 8},
                               {"model.width", 8},
                               {"model.stage_widths", {4, 8}},
                               {"model.head", head},
                               {"model.decoder.embed_dim", 8},
                               {"model.decoder.ffn_dim", 8},
                               {"model.gat.hidden", 4},
                               {"model.gat.heads", 2},
                               {"optim.lr", 0.1},
                               {"ema.decay", 0.9},
                               {"train.epochs", 4},
                               {"train.batch_size", 16}});
}

}  // namespace

TEST_CASE("zero learning rate leaves the model untouched") {
  auto data = tiny_data();
  auto cfg = tiny_config();
  cfg.sam.base.lr = 0.0;
  Model model = build_model(cfg, data, {});
  auto before = snapshot(model.params());
  auto result = train(model, data, cfg);
  CHECK(snapshot(model.params()) == before);
  REQUIRE(result.log.size() == 4);
  for (const auto& r : result.log) {
    CHECK(r.val_map == result.log[0].val_map);
    CHECK(r.ema_val_map == result.log[0].ema_val_map);
    CHECK(r.lr == 0.0);
  }
}

TEST_CASE("training is deterministic and logs json lines") {
  auto data = tiny_data();
  auto cfg = tiny_config();
  std::ostringstream first, second;
  {
    Model model = build_model(cfg, data, {});
    train(model, data, cfg, &first);
  }
  {
    Model model = build_model(cfg, data, {});
    train(model, data, cfg, &second);
  }
  CHECK(first.str() == second.str());
  std::istringstream lines(first.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    for (auto key : {"epoch", "train_loss", "lr", "val_mAP", "ema_val_mAP", "stopped"}) CHECK(j.contains(key));
    CHECK(j["epoch"].get<std::size_t>() == ++n);
  }
  CHECK(n == 4);
}

TEST_CASE("the best EMA weights are kept") {
  auto data = tiny_data();
  auto cfg = tiny_config("plain");
  Model model = build_model(cfg, data, {});
  auto result = train(model, data, cfg);
  double best = 0;
  for (const auto& r : result.log) best = std::max(best, r.ema_val_map);
  CHECK(result.best_ema_map == best);
  const auto val = data.indices(Split::kVal);
  auto map = mean_average_precision(predict(model, data, val, cfg), data.batch_labels(val));
  CHECK(map == best);
}

TEST_CASE("a non-finite loss aborts with the step") {
  auto data = tiny_data();
  data.features[5] = std::numeric_limits<double>::quiet_NaN();
  auto cfg = tiny_config();
  Model model = build_model(cfg, data, {});
  CHECK_THROWS_WITH_AS(train(model, data, cfg), doctest::Contains("step"), TrainingError);
}

TEST_CASE("graph heads train from embeddings on disk") {
  auto data = tiny_data();
  auto dir = fs::temp_directory_path() / "mlc_test_train";
  fs::create_directories(dir);
  fs::remove(dir / "embeddings.txt");
  auto cfg = tiny_config("decoder+gat");
  CHECK_THROWS_WITH(build_model(cfg, data, dir), doctest::Contains("unnamed labels"));
  SynthSpec spec;
  save_embeddings(dir / "embeddings.txt", synthetic_embeddings(spec, data.class_names));
  Model model = build_model(cfg, data, dir);
  cfg.epochs = 2;
  auto result = train(model, data, cfg);
  CHECK(result.log.size() == 2);
  auto unnamed = data;
  unnamed.class_names.clear();
  CHECK_THROWS_WITH(build_model(cfg, unnamed, dir), doctest::Contains("unnamed labels"));
}

TEST_CASE("image shape must match the config") {
  auto data = tiny_data();
  auto cfg = tiny_config();
  cfg.model.backbone.height = 16;
  CHECK_THROWS_AS(build_model(cfg, data, {}), DimensionError);
}
