#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mlc/tensor.hpp"

namespace mlc {

/// Single-file container: 8-byte magic, u64 header length, JSON header
/// (config, tensor names/shapes/offsets, checksum), raw float64 blob.
struct Checkpoint {
  nlohmann::json config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mlc
