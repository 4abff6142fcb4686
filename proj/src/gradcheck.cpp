#include "mlc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mlc {

GradcheckReport gradcheck(const ScalarFn& fn, const std::vector<Tensor>& inputs, GradcheckOptions opts) {
  GradcheckReport report;
  std::vector<Tensor> xs;
  xs.reserve(inputs.size());
  for (const auto& t : inputs) xs.push_back(t.clone(true));

  Tensor out = fn(xs);
  if (out.numel() != 1) {
    report.failure = "function is not scalar-valued: " + shape_str(out.shape());
    return report;
  }
  if (!std::isfinite(out.item())) {
    report.failure = "non-finite function value at the inputs";
    return report;
  }
  try {
    out.backward();
  } catch (const DomainError& e) {
    report.failure = e.what();
    return report;
  }

  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<double> analytic = xs[i].has_grad()
                                       ? std::vector<double>(xs[i].grad().begin(), xs[i].grad().end())
                                       : std::vector<double>(xs[i].numel(), 0.0);
    auto data = xs[i].mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + opts.step;
      const double fp = fn(xs).item();
      data[j] = saved - opts.step;
      const double fm = fn(xs).item();
      data[j] = saved;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      if (!std::isfinite(numeric) || !std::isfinite(analytic[j])) {
        report.failure = "non-finite gradient at input " + std::to_string(i) + " index " + std::to_string(j);
        report.worst_input = i;
        report.worst_index = j;
        return report;
      }
      const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), opts.floor});
      const double rel = std::abs(analytic[j] - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = i;
        report.worst_index = j;
      }
    }
  }
  report.passed = report.max_rel_error < opts.tolerance;
  return report;
}

}  // namespace mlc
