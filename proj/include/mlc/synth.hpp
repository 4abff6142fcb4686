#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "mlc/dataset.hpp"
#include "mlc/label_graph.hpp"

namespace mlc {

/// Thrown when no latent Gaussian realizes the requested label correlations.
class InfeasibleSpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthSpec {
  std::size_t classes = 10;
  std::size_t samples = 2000;
  std::size_t channels = 3, height = 16, width = 16;
  std::vector<double> priors;       // [K]; empty means 0.2 everywhere
  std::vector<double> correlation;  // [K * K] label correlation target; empty means identity
  double noise = 0.5;
  double blob_sigma = 2.0;  // prototype radius in pixels
  double val_fraction = 0.2;
  std::size_t embedding_dim = 16;
  std::uint64_t seed = 0;

  std::vector<double> prior_vector() const;
  std::vector<double> correlation_matrix() const;
  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
  /// K = 10, 2000 samples, classes 0-1 and 2-3 strongly co-occurring.
  static SynthSpec reference(std::uint64_t seed = 0);
};

/// Label correlation of two thresholded standard normals with latent correlation rho.
double label_correlation(double rho, double prior_a, double prior_b);
/// Inverse of label_correlation in rho, by bisection.
double latent_correlation(double target, double prior_a, double prior_b);

/// Labels from a thresholded correlated Gaussian; each positive class adds
/// its spatial prototype (a colored Gaussian blob) to the image, plus noise.
MultilabelDataset generate_synthetic(const SynthSpec& spec);

/// Random word vectors for the class names, seeded from the spec.
WordEmbeddings synthetic_embeddings(const SynthSpec& spec, const std::vector<std::string>& names);

}  // namespace mlc
