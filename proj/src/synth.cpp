#include "mlc/synth.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mlc {

std::vector<double> SynthSpec::prior_vector() const {
  return priors.empty() ? std::vector<double>(classes, 0.2) : priors;
}

std::vector<double> SynthSpec::correlation_matrix() const {
  if (!correlation.empty()) return correlation;
  std::vector<double> eye(classes * classes, 0.0);
  for (std::size_t i = 0; i < classes; ++i) eye[i * classes + i] = 1.0;
  return eye;
}

void SynthSpec::validate() const {
  if (classes < 2) throw std::invalid_argument("synth: need at least two classes");
  if (samples == 0 || channels == 0 || height == 0 || width == 0) throw std::invalid_argument("synth: zero extent");
  auto p = prior_vector();
  if (p.size() != classes) throw std::invalid_argument("synth: prior vector needs K entries");
  for (double v : p) {
    if (!(v > 0 && v < 1)) throw std::invalid_argument("synth: priors must lie in (0, 1)");
  }
  auto c = correlation_matrix();
  if (c.size() != classes * classes) throw std::invalid_argument("synth: correlation target must be K x K");
  for (std::size_t i = 0; i < classes; ++i) {
    if (c[i * classes + i] != 1.0) throw std::invalid_argument("synth: correlation diagonal must be 1");
    for (std::size_t j = 0; j < classes; ++j) {
      if (c[i * classes + j] != c[j * classes + i]) throw std::invalid_argument("synth: correlation must be symmetric");
      if (!(std::abs(c[i * classes + j]) <= 1)) throw std::invalid_argument("synth: correlations must lie in [-1, 1]");
    }
  }
  if (!(noise >= 0) || !(blob_sigma > 0)) throw std::invalid_argument("synth: noise >= 0 and blob_sigma > 0");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw std::invalid_argument("synth: val_fraction in [0, 1)");
  if (embedding_dim == 0) throw std::invalid_argument("synth: embedding_dim must be positive");
}

nlohmann::json SynthSpec::to_json() const {
  return {{"classes", classes},       {"samples", samples},         {"channels", channels},
          {"height", height},         {"width", width},             {"priors", prior_vector()},
          {"correlation", correlation_matrix()}, {"noise", noise}, {"blob_sigma", blob_sigma},
          {"val_fraction", val_fraction}, {"embedding_dim", embedding_dim}, {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{"classes", "samples", "channels", "height", "width", "priors",
                                              "correlation", "noise", "blob_sigma", "val_fraction",
                                              "embedding_dim", "seed", "reference"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("synth spec: unknown key '" + key + "'");
    }
  }
  SynthSpec s = j.value("reference", false) ? reference(j.value("seed", std::uint64_t{0})) : SynthSpec{};
  try {
    s.classes = j.value("classes", s.classes);
    s.samples = j.value("samples", s.samples);
    s.channels = j.value("channels", s.channels);
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.priors = j.value("priors", s.priors);
    s.correlation = j.value("correlation", s.correlation);
    s.noise = j.value("noise", s.noise);
    s.blob_sigma = j.value("blob_sigma", s.blob_sigma);
    s.val_fraction = j.value("val_fraction", s.val_fraction);
    s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("synth spec: " + std::string(e.what()));
  }
  s.validate();
  return s;
}

SynthSpec SynthSpec::reference(std::uint64_t seed) {
  SynthSpec s;
  s.seed = seed;
  s.correlation = s.correlation_matrix();
  for (auto [a, b] : {std::pair{0, 1}, std::pair{2, 3}}) {
    s.correlation[a * s.classes + b] = s.correlation[b * s.classes + a] = 0.8;
  }
  return s;
}

namespace {

double quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

// P(X < a, Y < b) for standard normals with correlation rho, via the
// derivative of the bivariate CDF in rho.
double bivariate_cdf(double a, double b, double rho) {
  auto density = [&](double r) {
    const double q = 1.0 - r * r;
    return std::exp(-(a * a - 2.0 * r * a * b + b * b) / (2.0 * q)) / (2.0 * std::numbers::pi * std::sqrt(q));
  };
  boost::math::normal_distribution<double> n;
  const double base = boost::math::cdf(n, a) * boost::math::cdf(n, b);
  if (rho == 0.0) return base;
  return base + boost::math::quadrature::gauss_kronrod<double, 31>::integrate(density, 0.0, rho, 15, 1e-13);
}

constexpr double kMaxLatent = 0.9999;

}  // namespace

double label_correlation(double rho, double prior_a, double prior_b) {
  const double joint = bivariate_cdf(quantile(prior_a), quantile(prior_b), rho);
  return (joint - prior_a * prior_b) / std::sqrt(prior_a * (1 - prior_a) * prior_b * (1 - prior_b));
}

double latent_correlation(double target, double prior_a, double prior_b) {
  if (target == 0.0) return 0.0;
  double lo = -kMaxLatent, hi = kMaxLatent;
  if (target > label_correlation(hi, prior_a, prior_b) || target < label_correlation(lo, prior_a, prior_b)) {
    throw InfeasibleSpecError("label correlation " + std::to_string(target) + " is unreachable for priors " +
                              std::to_string(prior_a) + " and " + std::to_string(prior_b));
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (label_correlation(mid, prior_a, prior_b) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

MultilabelDataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const std::size_t K = spec.classes;
  const auto priors = spec.prior_vector();
  const auto target = spec.correlation_matrix();

  Eigen::MatrixXd latent = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = i + 1; j < K; ++j) {
      const double r = latent_correlation(target[i * K + j], priors[i], priors[j]);
      latent(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r;
      latent(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = r;
    }
  Eigen::LLT<Eigen::MatrixXd> llt(latent);
  if (llt.info() != Eigen::Success) {
    throw InfeasibleSpecError("correlation target needs a latent covariance that is not positive definite");
  }
  const Eigen::MatrixXd chol = llt.matrixL();
  std::vector<double> cut(K);
  for (std::size_t j = 0; j < K; ++j) cut[j] = quantile(priors[j]);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Class prototypes: a blob at a random center with a random unit color.
  const std::size_t C = spec.channels, H = spec.height, W = spec.width, HW = H * W;
  std::vector<double> prototypes(K * C * HW);
  for (std::size_t j = 0; j < K; ++j) {
    const double cy = unit(rng) * static_cast<double>(H - 1), cx = unit(rng) * static_cast<double>(W - 1);
    std::vector<double> color(C);
    double norm = 0;
    for (auto& c : color) norm += (c = normal(rng)) * c;
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          const double g = std::exp(-(dy * dy + dx * dx) / (2 * spec.blob_sigma * spec.blob_sigma));
          prototypes[((j * C + c) * H + y) * W + x] = color[c] / norm * g;
        }
  }

  MultilabelDataset ds;
  ds.channels = C, ds.height = H, ds.width = W;
  ds.class_count = K;
  for (std::size_t j = 0; j < K; ++j) ds.class_names.push_back("label" + std::to_string(j));
  ds.features.resize(spec.samples * C * HW);
  ds.labels.resize(spec.samples * K);
  Eigen::VectorXd z(static_cast<Eigen::Index>(K));
  for (std::size_t n = 0; n < spec.samples; ++n) {
    for (std::size_t j = 0; j < K; ++j) z(static_cast<Eigen::Index>(j)) = normal(rng);
    Eigen::VectorXd corr = chol * z;
    double* img = ds.features.data() + n * C * HW;
    for (std::size_t j = 0; j < K; ++j) {
      const bool on = corr(static_cast<Eigen::Index>(j)) < cut[j];
      ds.labels[n * K + j] = on ? 1 : 0;
      if (!on) continue;
      const double* proto = prototypes.data() + j * C * HW;
      for (std::size_t i = 0; i < C * HW; ++i) img[i] += proto[i];
    }
    for (std::size_t i = 0; i < C * HW; ++i) img[i] += spec.noise * normal(rng);
  }
  const auto val_count = static_cast<std::size_t>(std::lround(spec.val_fraction * static_cast<double>(spec.samples)));
  ds.split.assign(spec.samples, Split::kTrain);
  std::fill(ds.split.end() - static_cast<std::ptrdiff_t>(val_count), ds.split.end(), Split::kVal);
  ds.validate();
  return ds;
}

WordEmbeddings synthetic_embeddings(const SynthSpec& spec, const std::vector<std::string>& names) {
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(names.size() * spec.embedding_dim);
  for (auto& v : values) v = normal(rng);
  return {names, Tensor::from({names.size(), spec.embedding_dim}, std::move(values))};
}

}  // namespace mlc
