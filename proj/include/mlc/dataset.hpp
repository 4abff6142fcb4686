#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlc/tensor.hpp"

namespace mlc {

enum class Split : std::uint8_t { kTrain, kVal };

struct MultilabelDataset {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<std::string> class_names;  // may be empty
  std::vector<double> features;          // [N, C, H, W]
  std::vector<std::uint8_t> labels;      // [N, K]
  std::vector<Split> split;              // [N]
  std::size_t class_count = 0;

  std::size_t size() const { return split.size(); }
  std::size_t classes() const { return class_count; }
  std::size_t image_numel() const { return channels * height * width; }
  /// Mean number of positive labels per image.
  double avg_labels_per_image() const;
  std::vector<std::size_t> indices(Split s) const;

  Tensor batch_features(const std::vector<std::size_t>& rows) const;  // [n, C, H, W]
  Tensor batch_labels(const std::vector<std::size_t>& rows) const;    // [n, K]
  /// Positive class indices of each listed row.
  std::vector<std::vector<std::size_t>> label_sets(const std::vector<std::size_t>& rows) const;

  void validate() const;
  bool operator==(const MultilabelDataset&) const = default;
};

/// Writes manifest.json, features.bin (little-endian float64) and labels.csv.
void save_dataset(const std::filesystem::path& dir, const MultilabelDataset& ds);
MultilabelDataset load_dataset(const std::filesystem::path& dir);

}  // namespace mlc
