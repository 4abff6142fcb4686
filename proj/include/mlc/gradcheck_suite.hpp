#pragma once

#include <string>
#include <vector>

#include "mlc/gradcheck.hpp"

namespace mlc {

struct SuiteResult {
  std::string name;
  std::size_t seeds = 0;
  double worst = 0.0;
  double tolerance = 0.0;
  std::string failure;  // first non-finite report, if any

  bool passed() const { return failure.empty() && worst < tolerance; }
};

/// Finite-difference checks on randomized small instances. Names:
/// aam_loss, asl_loss, gat_forward, decode, extract (tolerance 1e-5) and
/// head, the full backbone + graph + decoder + loss composition (1e-4).
SuiteResult run_gradcheck_suite(const std::string& name, std::size_t seeds = 100);
std::vector<std::string> gradcheck_suite_names();
/// Suites grouped by module: losses, label-graph, decoder-head, backbone, all.
std::vector<std::string> gradcheck_module_suites(const std::string& module);

}  // namespace mlc
