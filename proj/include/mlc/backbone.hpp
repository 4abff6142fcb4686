#pragma once

#include <string>
#include <vector>

#include "mlc/params.hpp"
#include "mlc/tensor.hpp"

namespace mlc {

/// Stack of stride-2 convolution + ReLU stages. Each stage halves the
/// spatial extents, so the downscale factor is 2^stages.
struct BackboneConfig {
  std::size_t in_channels = 3;
  std::size_t height = 16;
  std::size_t width = 16;
  std::vector<std::size_t> stage_widths{8, 16, 32};
  std::size_t kernel = 3;

  std::size_t downscale() const { return std::size_t{1} << stage_widths.size(); }
  std::size_t out_channels() const { return stage_widths.back(); }
  std::size_t out_height() const { return height / downscale(); }
  std::size_t out_width() const { return width / downscale(); }
  void validate() const;
};

struct Backbone {
  BackboneConfig config;
  std::vector<Tensor> weights;  // per stage [out, in, k, k]
  std::vector<Tensor> biases;   // per stage [out]

  static Backbone init(const BackboneConfig& cfg, Rng& rng, ParamStore& store, const std::string& prefix = "backbone");

  /// x: [C, H, W] or [B, C, H, W] -> [S, H/d, W/d] or [B, S, H/d, W/d].
  Tensor extract(const Tensor& x) const;
};

}  // namespace mlc
