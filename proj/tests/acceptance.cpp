// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only
// when every criterion passes.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "mlc/config.hpp"
#include "mlc/gradcheck_suite.hpp"
#include "mlc/losses.hpp"
#include "mlc/metrics.hpp"
#include "mlc/model.hpp"
#include "mlc/op_audit.hpp"
#include "mlc/ops.hpp"
#include "mlc/optim.hpp"
#include "mlc/synth.hpp"
#include "mlc/trainer.hpp"

using namespace mlc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

double sigmoid_ref(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double bce_ref(double p, double y) { return -(y * std::log(p) + (1 - y) * std::log(1 - p)); }

// ---------------------------------------------------------------- 1
Outcome loss_identities() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> cos_dist(-1.0, 1.0), logit_dist(-6.0, 6.0);
  std::bernoulli_distribution coin(0.5);
  const AamConfig aam{.s = 1, .m = 0, .k = 0.5, .gamma_pos = 0, .gamma_neg = 0};
  const AslConfig asl{.gamma_pos = 0, .gamma_neg = 0, .clip = 0};
  double worst_aam = 0, worst_asl = 0;
  for (int i = 0; i < 1000; ++i) {
    const double c = cos_dist(rng), x = logit_dist(rng), y = coin(rng) ? 1.0 : 0.0;
    auto t = Tensor::from({1, 1}, {y});
    worst_aam = std::max(worst_aam, std::abs(aam_loss(Tensor::from({1, 1}, {c}), t, aam).item() -
                                             0.5 * bce_ref(sigmoid_ref(c), y)));
    worst_asl = std::max(worst_asl, std::abs(asl_loss(Tensor::from({1, 1}, {x}), t, asl).item() -
                                             bce_ref(sigmoid_ref(x), y)));
  }
  return {worst_aam <= 1e-12 && worst_asl <= 1e-12,
          "max |AAM - BCE/2| = " + fmt(worst_aam) + ", max |ASL - BCE| = " + fmt(worst_asl) + " (tol 1e-12)"};
}

// ---------------------------------------------------------------- 2
Outcome gradient_suite() {
  bool ok = true;
  std::string detail;
  for (const auto& name : gradcheck_suite_names()) {
    auto r = run_gradcheck_suite(name, 100);
    ok = ok && r.passed();
    detail += name + "=" + fmt(r.worst, 3) + (r.failure.empty() ? "" : "(non-finite)") + " ";
  }
  return {ok, detail + "(tol 1e-5, head 1e-4, 100 seeds)"};
}

// ---------------------------------------------------------------- 3
double ap_brute(const std::vector<double>& s, const std::vector<double>& y) {
  double total = 0, npos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    npos += 1;
    double at = 0, hit = 0;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (s[j] > s[i] || (s[j] == s[i] && j <= i)) at += 1, hit += y[j];
    total += hit / at;
  }
  return total / npos;
}

Outcome metric_oracle() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> bd(1, 20), kd(1, 5);
  std::uniform_int_distribution<int> lattice(0, 20);
  std::bernoulli_distribution coin(0.4);
  std::uniform_real_distribution<double> thr(0.05, 0.95);
  double worst = 0;
  bool perfect_exact = true;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t b = bd(rng), k = kd(rng);
    std::vector<double> s(b * k), y(b * k), t(k);
    for (auto& v : s) v = lattice(rng) / 20.0;
    for (auto& v : y) v = coin(rng);
    for (std::size_t j = 0; j < k; ++j) y[j] = 1;
    for (auto& v : t) v = thr(rng);
    auto st = Tensor::from({b, k}, s), yt = Tensor::from({b, k}, y);
    auto report = overall_and_per_class(st, yt, t);
    double TP = 0, FP = 0, FN = 0, cp = 0, cr = 0;
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<double> sc, yc;
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < b; ++i) {
        sc.push_back(s[i * k + j]);
        yc.push_back(y[i * k + j]);
        const bool pred = s[i * k + j] >= t[j], pos = y[i * k + j] == 1;
        tp += pred && pos, fp += pred && !pos, fn += !pred && pos;
      }
      worst = std::max(worst, std::abs(*report.ap[j] - ap_brute(sc, yc)));
      const double p = tp + fp ? tp / (tp + fp) : 0, r = tp + fn ? tp / (tp + fn) : 0;
      worst = std::max({worst, std::abs(report.precision[j] - p), std::abs(report.recall[j] - r)});
      cp += p / k, cr += r / k;
      TP += tp, FP += fp, FN += fn;
      // positives first, then negatives
      std::vector<double> ranked(b);
      for (std::size_t i = 0; i < b; ++i) ranked[i] = yc[i] == 1 ? 1.0 : 0.0;
      perfect_exact = perfect_exact && average_precision(ranked, yc) == 1.0;
    }
    const double op = TP + FP ? TP / (TP + FP) : 0, orc = TP / (TP + FN);
    worst = std::max({worst, std::abs(report.op - op), std::abs(report.orc - orc), std::abs(report.cp - cp),
                      std::abs(report.cr - cr)});
  }
  return {worst <= 1e-12 && perfect_exact,
          "max deviation " + fmt(worst) + " over 500 instances (tol 1e-12); perfect-ranking AP == 1: " +
              (perfect_exact ? "yes" : "no")};
}

// ---------------------------------------------------------------- 4
Outcome optimizer_contracts() {
  // SAM(rho = 0) against plain SGD.
  auto make = [](ParamStore& store, Rng& rng) {
    std::normal_distribution<double> n;
    std::vector<double> w(12), b(3);
    for (auto& v : w) v = n(rng);
    for (auto& v : b) v = n(rng);
    store.add("w", Tensor::from({4, 3}, w));
    store.add("b", Tensor::from({3}, b));
  };
  Rng r1(4), r2(4), rx(5);
  ParamStore a, b;
  make(a, r1);
  make(b, r2);
  std::normal_distribution<double> n;
  std::vector<double> xv(24), yv(18);
  for (auto& v : xv) v = n(rx);
  for (auto& v : yv) v = n(rx);
  const Tensor x = Tensor::from({6, 4}, xv), y = Tensor::from({6, 3}, yv);
  auto loss = [&](ParamStore& s) {
    Tensor r = sub(add(matmul(x, s.get("w")), s.get("b")), y);
    return mean(mul(r, r));
  };
  const SgdConfig base{.lr = 0.03, .momentum = 0.9, .weight_decay = 1e-3};
  Sam sam(a, {.rho = 0.0, .base = base});
  Sgd sgd(b, base);
  for (int i = 0; i < 100; ++i) {
    sam.step([&] { return loss(a); }, 0.03);
    b.zero_grad();
    loss(b).backward();
    sgd.step(0.03);
  }
  const bool bitwise = snapshot(a) == snapshot(b);

  ParamStore q;
  Tensor w = q.add("w", Tensor::from({1}, {1.0}));
  Sam quad(q, {.rho = 0.05, .base = {.lr = 0.1, .momentum = 0, .weight_decay = 0}});
  quad.step([&] { return sum(mul(w, w)); }, 0.1);
  const bool hand = w.data()[0] == 0.79;

  const OneCycleConfig oc{.max_lr = 0.2, .total_steps = 1500};
  const bool cycle = onecycle_lr(0, oc) == 0.2 / 25 && onecycle_lr(oc.warmup_steps(), oc) == 0.2 &&
                     std::abs(onecycle_lr(1500, oc) - 0.2 / 1e4) <= 1e-12;

  ParamStore e;
  Tensor p = e.add("p", Tensor::from({3}, {0.1, -0.4, 2.0}));
  Ema ema(e, 0.9997);
  std::vector<double> oracle(p.data().begin(), p.data().end());
  Rng re(6);
  double ema_dev = 0;
  for (int step = 0; step < 10; ++step) {
    for (auto& v : p.mutable_data()) v = n(re);
    ema.update(e);
    for (std::size_t k = 0; k < 3; ++k) {
      oracle[k] = 0.9997 * oracle[k] + (1 - 0.9997) * p.data()[k];
      ema_dev = std::max(ema_dev, std::abs(ema.shadow()[0][k] - oracle[k]));
    }
  }
  return {bitwise && hand && cycle && ema_dev <= 1e-12,
          std::string("SAM(0)==SGD bitwise: ") + (bitwise ? "yes" : "no") + "; quadratic 1 -> " + fmt(w.data()[0], 17) +
              "; OneCycle boundaries: " + (cycle ? "exact" : "off") + "; EMA deviation " + fmt(ema_dev)};
}

// ---------------------------------------------------------------- 5, 6, 8
RunConfig reference_config(const std::string& head, std::uint64_t seed) {
  return RunConfig::from_json({{"model.head", head},
                               {"optim.lr", 0.2},
                               {"ema.decay", 0.99},
                               {"train.epochs", 30},
                               {"seed", seed}});
}

struct Reference {
  MultilabelDataset data;
  fs::path dir;
};

Reference& reference() {
  static Reference ref = [] {
    Reference r;
    auto spec = SynthSpec::reference(0);
    r.data = generate_synthetic(spec);
    r.dir = fs::temp_directory_path() / "mlc_acceptance";
    fs::create_directories(r.dir);
    save_embeddings(r.dir / "embeddings.txt", synthetic_embeddings(spec, r.data.class_names));
    return r;
  }();
  return ref;
}

double val_map(const Model& m, const RunConfig& cfg) {
  const auto& d = reference().data;
  const auto rows = d.indices(Split::kVal);
  return mean_average_precision(predict(m, d, rows, cfg), d.batch_labels(rows));
}

std::map<std::pair<std::string, std::uint64_t>, double>& trained() {
  static std::map<std::pair<std::string, std::uint64_t>, double> cache;
  return cache;
}

double train_reference(const std::string& head, std::uint64_t seed) {
  auto key = std::make_pair(head, seed);
  if (auto it = trained().find(key); it != trained().end()) return it->second;
  auto cfg = reference_config(head, seed);
  Model model = build_model(cfg, reference().data, reference().dir);
  auto result = train(model, reference().data, cfg);
  return trained()[key] = result.best_ema_map;
}

Outcome end_to_end() {
  auto cfg = reference_config("decoder", 0);
  Model untrained = build_model(cfg, reference().data, reference().dir);
  const double base = val_map(untrained, cfg);
  const double dec = train_reference("decoder", 0);
  const double plain = train_reference("plain", 0);
  const bool ok = dec >= 0.95 && std::abs(plain - dec) <= 0.05 && dec - base >= 0.4 && plain - base >= 0.4;
  return {ok, "decoder " + fmt(dec) + ", plain " + fmt(plain) + ", untrained " + fmt(base) +
                  " (need decoder >= 0.95, |plain - decoder| <= 0.05, both >= untrained + 0.4)"};
}

Outcome gat_equivalence() {
  auto cfg = reference_config("decoder+gat", 0);
  Model model = build_model(cfg, reference().data, reference().dir);
  Rng rng(7);
  std::normal_distribution<double> n;
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> xv(2 * 3 * 16 * 16);
    for (auto& v : xv) v = n(rng);
    Tensor x = Tensor::from({2, 3, 16, 16}, xv);
    model.unfreeze();
    Tensor live = model.forward(x);
    model.freeze();
    Tensor frozen = model.forward(x);
    for (std::size_t i = 0; i < live.numel(); ++i) worst = std::max(worst, std::abs(live.data()[i] - frozen.data()[i]));
  }

  // Frozen gated head against the ungated head: same ops plus one channel product.
  auto plain_cfg = reference_config("decoder", 0);
  Model ungated = build_model(plain_cfg, reference().data, reference().dir);
  Tensor x = reference().data.batch_features({0, 1, 2, 3});
  OpAudit gated_audit;
  model.forward(x);
  const auto gated = gated_audit.counts();
  OpAudit base_audit;
  ungated.forward(x);
  const auto base = base_audit.counts();
  std::uint64_t graph_ops = 0;
  for (const char* op : {"leaky_relu", "masked_softmax", "elu", "concat", "max_axis"}) {
    auto it = gated.find(op);
    auto bt = base.find(op);
    if (it != gated.end()) graph_ops += it->second.calls - (bt == base.end() ? 0 : bt->second.calls);
  }
  std::int64_t extra_calls = 0, extra_mults = 0, extra_mul_mults = 0;
  for (const auto& [op, c] : gated) {
    auto it = base.find(op);
    const auto bc = it == base.end() ? OpCount{} : it->second;
    extra_calls += static_cast<std::int64_t>(c.calls - bc.calls);
    extra_mults += static_cast<std::int64_t>(c.multiplies - bc.multiplies);
    if (op == "mul") extra_mul_mults = static_cast<std::int64_t>(c.multiplies - bc.multiplies);
  }
  const std::int64_t expected = 4 * 32 * 2 * 2;  // B * S * h * w
  const bool ok = worst == 0.0 && graph_ops == 0 && extra_calls == 1 && extra_mults == expected &&
                  extra_mul_mults == expected;
  return {ok, "max |live - frozen| = " + fmt(worst) + "; graph ops beyond the ungated head " + std::to_string(graph_ops) +
                  "; overhead " + std::to_string(extra_calls) + " op, " + std::to_string(extra_mults) +
                  " multiplies (B*S*h*w = " + std::to_string(expected) + ")"};
}

// ---------------------------------------------------------------- 7
Outcome calibration() {
  Rng rng(8);
  std::bernoulli_distribution coin(0.3);
  std::normal_distribution<double> n(0, 0.2);
  const std::size_t b = 400, k = 10;
  std::vector<double> y(b * k), s(b * k);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = i < k ? 1.0 : coin(rng);
    s[i] = std::clamp(0.35 + 0.3 * y[i] + n(rng), 0.0, 1.0);
  }
  auto st = Tensor::from({b, k}, s), yt = Tensor::from({b, k}, y);
  auto cal = calibrate_thresholds(st, yt, default_grid());
  std::vector<double> half(k, 0.5);
  auto before = overall_and_per_class(st, yt, half), after = overall_and_per_class(st, yt, cal.thresholds);
  bool weak = true;
  for (std::size_t j = 0; j < k; ++j) weak = weak && after.f1[j] >= before.f1[j];

  std::vector<double> ys(200 * 4), ss(200 * 4);
  for (std::size_t i = 0; i < ys.size(); ++i) {
    ys[i] = i < 4 ? 1.0 : coin(rng);
    ss[i] = ys[i] * 0.4 + 0.05;
  }
  auto sst = Tensor::from({200, 4}, ss), yst = Tensor::from({200, 4}, ys);
  auto shifted = calibrate_thresholds(sst, yst, default_grid());
  std::vector<double> half4(4, 0.5);
  const double gain = overall_and_per_class(sst, yst, shifted.thresholds).cf1 - overall_and_per_class(sst, yst, half4).cf1;
  return {weak && gain >= 0.2, std::string("per-class F1 never below the 0.5 baseline: ") + (weak ? "yes" : "no") +
                                   "; shifted fixture CF1 gain " + fmt(gain) + " (need >= 0.2)"};
}

// ---------------------------------------------------------------- 8
Outcome ablation() {
  double dec = 0, plain = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    dec += train_reference("decoder", seed) / 5;
    plain += train_reference("plain", seed) / 5;
  }
  return {dec >= plain, "mean val mAP over 5 seeds: decoder " + fmt(dec) + ", plain " + fmt(plain)};
}

// ---------------------------------------------------------------- 9
Outcome curve_properties() {
  AamConfig base{.s = 23, .m = 0, .k = 0.7, .gamma_pos = 0, .gamma_neg = 1};
  AamConfig margin = base;
  margin.m = 0.3;
  std::vector<double> grid{0.0, 0.5};
  const double neg0 = aam_part_curves(base, grid)[0].neg_part;
  const double neg_m = aam_part_curves(margin, grid)[0].neg_part;
  // Steepness: how far each part has moved between cos = 0 and cos = 0.5,
  // relative to its value at cos = 0.
  bool steeper = true;
  double prev_pos = -1, prev_neg = -1;
  std::string ratios;
  for (double s : {5.0, 17.0, 23.0}) {
    AamConfig c = base;
    c.s = s;
    auto pts = aam_part_curves(c, grid);
    const double pos_drop = 1.0 - pts[1].pos_part / pts[0].pos_part;
    const double neg_rise = pts[1].neg_part / pts[0].neg_part;
    steeper = steeper && pos_drop > prev_pos && neg_rise > prev_neg;
    prev_pos = pos_drop, prev_neg = neg_rise;
    ratios += fmt(neg_rise, 4) + " ";
  }
  return {neg_m > neg0 && steeper, "neg part at cos=0: m=0.3 " + fmt(neg_m) + " vs m=0 " + fmt(neg0) +
                                       "; neg(0.5)/neg(0) for s=5,17,23: " + ratios};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0 means no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "loss identities", 1, loss_identities},
      {2, "gradient suite", 60, gradient_suite},
      {3, "metric oracle", 10, metric_oracle},
      {4, "optimizer contracts", 5, optimizer_contracts},
      {5, "end-to-end learning", 600, end_to_end},
      {6, "graph branch equivalence and economy", 0, gat_equivalence},
      {7, "calibration", 5, calibration},
      {8, "ablation ordering", 0, ablation},
      {9, "loss curve properties", 1, curve_properties},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s == 0 || secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << "criterion " << c.id << " [" << c.name << "]: " << (pass ? "PASS" : "FAIL") << " - " << o.detail
              << " (" << fmt(secs, 3) << " s";
    if (c.budget_s > 0) std::cout << ", budget " << c.budget_s << " s";
    std::cout << ")" << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
