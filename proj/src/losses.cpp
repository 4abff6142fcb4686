#include "mlc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "mlc/op_audit.hpp"

namespace mlc {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  if (z >= 0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

void check_pair(const Tensor& x, const Tensor& targets, const char* name) {
  if (x.rank() != 2 || x.shape() != targets.shape()) {
    throw DimensionError(std::string(name) + ": expected matching [B, K] inputs, got " + shape_str(x.shape()) +
                         " and " + shape_str(targets.shape()));
  }
  for (double y : targets.data()) {
    if (y != 0.0 && y != 1.0) throw DomainError(std::string(name) + ": targets must be 0 or 1");
  }
}

struct AamTerm {
  double loss;   // -L_j
  double dloss;  // d(-L_j)/dcos, before the clamp mask
};

AamTerm aam_term(double cos, double y, const AamConfig& cfg) {
  const double c = std::clamp(cos, -1.0 + kCosClamp, 1.0 - kCosClamp);
  const double s = cfg.s;
  const double zp = s * (c - cfg.m);
  const double zn = -s * (c + cfg.m);
  const double pp = sigmoid(zp), pn = sigmoid(zn);
  const double lpp = log_sigmoid(zp), lpn = log_sigmoid(zn);
  const double e_pos = cfg.exponents_as_printed ? cfg.gamma_neg : cfg.gamma_pos;
  const double e_neg = cfg.exponents_as_printed ? cfg.gamma_pos : cfg.gamma_neg;
  const double w_pos = std::pow(pn, e_pos);
  const double w_neg = std::pow(pp, e_neg);
  const double a = cfg.k / s;
  const double b = (1.0 - cfg.k) / s;

  // d log p+/dc = s(1-p+), d log p-/dc = -s(1-p-)
  const double dlpp = s * (1.0 - pp);
  const double dlpn = -s * (1.0 - pn);
  const double dw_pos = e_pos * w_pos * dlpn;
  const double dw_neg = e_neg * w_neg * dlpp;

  const double l = a * y * w_pos * lpp + b * (1.0 - y) * w_neg * lpn;
  const double dl = a * y * (dw_pos * lpp + w_pos * dlpp) + b * (1.0 - y) * (dw_neg * lpn + w_neg * dlpn);
  return {-l, -dl};
}

}  // namespace

void AamConfig::validate() const {
  if (!(s > 0)) throw DomainError("aam: scale s must be positive");
  if (!(k >= 0 && k <= 1)) throw DomainError("aam: k must lie in [0, 1]");
  if (!(gamma_pos >= 0 && gamma_neg >= 0)) throw DomainError("aam: gammas must be nonnegative");
  if (!std::isfinite(m)) throw DomainError("aam: margin must be finite");
}

void AslConfig::validate() const {
  if (!(gamma_pos >= 0 && gamma_neg >= 0)) throw DomainError("asl: gammas must be nonnegative");
  if (!(clip >= 0 && clip < 1)) throw DomainError("asl: clip must lie in [0, 1)");
}

Tensor aam_loss(const Tensor& cos, const Tensor& targets, const AamConfig& cfg) {
  cfg.validate();
  check_pair(cos, targets, "aam_loss");
  const auto cd = cos.data();
  const auto yd = targets.data();
  const double batch = static_cast<double>(cos.dim(0));
  double total = 0.0;
  std::vector<double> dcos(cd.size());
  for (std::size_t i = 0; i < cd.size(); ++i) {
    auto t = aam_term(cd[i], yd[i], cfg);
    total += t.loss;
    const bool inside = cd[i] > -1.0 + kCosClamp && cd[i] < 1.0 - kCosClamp;
    dcos[i] = inside ? t.dloss / batch : 0.0;
  }
  OpAudit::record("aam_loss", cd.size());
  return Tensor::make_result("aam_loss", {1}, {total / batch}, {cos}, [dcos = std::move(dcos)](detail::Node& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * dcos[i];
  });
}

Tensor asl_loss(const Tensor& logits, const Tensor& targets, const AslConfig& cfg) {
  cfg.validate();
  check_pair(logits, targets, "asl_loss");
  const auto xd = logits.data();
  const auto yd = targets.data();
  const double batch = static_cast<double>(logits.dim(0));
  double total = 0.0;
  std::vector<double> dx(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double x = xd[i];
    const double p = sigmoid(x);
    if (yd[i] == 1.0) {
      const double q = sigmoid(-x);  // 1 - p
      const double w = std::pow(q, cfg.gamma_pos);
      const double lp = log_sigmoid(x);
      total -= w * lp;
      dx[i] = -w * (-cfg.gamma_pos * p * lp + q);
    } else if (cfg.clip == 0.0) {
      const double w = std::pow(p, cfg.gamma_neg);
      const double lq = log_sigmoid(-x);
      total -= w * lq;
      dx[i] = -w * (cfg.gamma_neg * (1.0 - p) * lq - p);
    } else {
      const double pc = p - cfg.clip;
      if (pc <= 0.0) {
        dx[i] = 0.0;
        continue;
      }
      const double w = std::pow(pc, cfg.gamma_neg);
      const double lq = std::log1p(-pc);
      total -= w * lq;
      const double dpc = p * (1.0 - p);
      const double dw = cfg.gamma_neg == 0.0 ? 0.0 : cfg.gamma_neg * std::pow(pc, cfg.gamma_neg - 1.0);
      dx[i] = -dpc * (dw * lq - w / (1.0 - pc));
    }
  }
  for (auto& d : dx) d /= batch;
  OpAudit::record("asl_loss", xd.size());
  return Tensor::make_result("asl_loss", {1}, {total / batch}, {logits}, [dx = std::move(dx)](detail::Node& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * dx[i];
  });
}

AamParts aam_parts(double cos, const AamConfig& cfg) {
  cfg.validate();
  return {aam_term(cos, 1.0, cfg).loss, aam_term(cos, 0.0, cfg).loss};
}

std::vector<AamCurvePoint> aam_part_curves(const AamConfig& cfg, std::span<const double> grid) {
  std::vector<AamCurvePoint> out;
  out.reserve(grid.size());
  for (double c : grid) {
    if (c < -1.0 || c > 1.0) throw DomainError("aam_part_curves: grid point outside [-1, 1]");
    auto parts = aam_parts(c, cfg);
    out.push_back({c, parts.pos_part, parts.neg_part});
  }
  return out;
}

void write_curves_csv(std::ostream& os, std::span<const AamCurvePoint> points) {
  os << "cos,pos_part,neg_part\n";
  os << std::setprecision(17);
  for (const auto& p : points) os << p.cos << ',' << p.pos_part << ',' << p.neg_part << '\n';
}

}  // namespace mlc
