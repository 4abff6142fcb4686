#include "mlc/backbone.hpp"

#include "mlc/ops.hpp"

namespace mlc {

void BackboneConfig::validate() const {
  if (stage_widths.empty()) throw DimensionError("backbone: at least one stage is required");
  if (in_channels == 0 || kernel == 0 || kernel % 2 == 0) {
    throw DimensionError("backbone: channels must be positive and the kernel odd");
  }
  for (auto w : stage_widths) {
    if (w == 0) throw DimensionError("backbone: stage widths must be positive");
  }
  const std::size_t d = downscale();
  if (height % d != 0 || width % d != 0) {
    throw DimensionError("backbone: input " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible by the downscale factor " + std::to_string(d));
  }
}

Backbone Backbone::init(const BackboneConfig& cfg, Rng& rng, ParamStore& store, const std::string& prefix) {
  cfg.validate();
  Backbone b;
  b.config = cfg;
  std::size_t in = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.stage_widths.size(); ++i) {
    const std::size_t out = cfg.stage_widths[i];
    const std::string p = prefix + ".stage" + std::to_string(i);
    b.weights.push_back(
        store.add(p + ".weight", he_uniform(rng, {out, in, cfg.kernel, cfg.kernel}, in * cfg.kernel * cfg.kernel)));
    b.biases.push_back(store.add(p + ".bias", Tensor::zeros({out})));
    in = out;
  }
  return b;
}

Tensor Backbone::extract(const Tensor& x) const {
  const bool single = x.rank() == 3;
  if (!single && x.rank() != 4) throw DimensionError("backbone: expected [C,H,W] or [B,C,H,W], got " + shape_str(x.shape()));
  const auto& s = x.shape();
  const std::size_t c = s[s.size() - 3], h = s[s.size() - 2], w = s[s.size() - 1];
  const std::size_t d = config.downscale();
  if (c != config.in_channels) throw DimensionError("backbone: expected " + std::to_string(config.in_channels) + " channels");
  if (h % d != 0 || w % d != 0) {
    throw DimensionError("backbone: extents " + shape_str(s) + " not divisible by " + std::to_string(d));
  }
  Tensor y = single ? reshape(x, {1, c, h, w}) : x;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    y = relu(conv2d(y, weights[i], biases[i], {.stride = 2, .padding = config.kernel / 2}));
  }
  if (single) {
    const auto& ys = y.shape();
    y = reshape(y, {ys[1], ys[2], ys[3]});
  }
  return y;
}

}  // namespace mlc
