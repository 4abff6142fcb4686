#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "mlc/tensor.hpp"

namespace mlc {

/// Asymmetric angular margin loss settings.
struct AamConfig {
  double s = 23.0;  // scale
  double m = 0.0;   // angular margin
  double k = 0.7;   // positive/negative balance
  double gamma_pos = 0.0;
  double gamma_neg = 1.0;
  /// true: gamma_neg weights the positive term through p_-, gamma_pos the
  /// negative term through p_+ (the published form). false swaps them to the
  /// ASL pairing.
  bool exponents_as_printed = true;

  void validate() const;
};

/// Asymmetric loss on raw logits.
struct AslConfig {
  double gamma_pos = 0.0;
  double gamma_neg = 4.0;
  double clip = 0.05;  // probability shift for negatives

  void validate() const;
};

/// Cosine inputs are clamped to [-1 + kCosClamp, 1 - kCosClamp].
inline constexpr double kCosClamp = 1e-7;

/// cos, targets: [B, K]. Sum over classes, mean over the batch.
Tensor aam_loss(const Tensor& cos, const Tensor& targets, const AamConfig& cfg);

/// logits, targets: [B, K]. Sum over classes, mean over the batch.
Tensor asl_loss(const Tensor& logits, const Tensor& targets, const AslConfig& cfg);

/// Loss paid by one class term at a given cosine; both parts are >= 0.
struct AamParts {
  double pos_part;  // loss paid by a positive sample at this cosine
  double neg_part;  // loss paid by a negative sample at this cosine
};
AamParts aam_parts(double cos, const AamConfig& cfg);

struct AamCurvePoint {
  double cos;
  double pos_part;
  double neg_part;
};
std::vector<AamCurvePoint> aam_part_curves(const AamConfig& cfg, std::span<const double> grid);
/// Writes `cos,pos_part,neg_part` CSV with a header row.
void write_curves_csv(std::ostream& os, std::span<const AamCurvePoint> points);

}  // namespace mlc
