#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace mlc {

struct OpCount {
  std::uint64_t calls = 0;
  // Scalar multiplies (or multiply-adds) performed by the forward pass.
  std::uint64_t multiplies = 0;
};

/// Records every forward op executed on this thread while in scope.
/// Scopes nest; only the innermost one records.
class OpAudit {
 public:
  OpAudit();
  ~OpAudit();
  OpAudit(const OpAudit&) = delete;
  OpAudit& operator=(const OpAudit&) = delete;

  const std::map<std::string, OpCount>& counts() const { return counts_; }
  std::uint64_t calls(const std::string& op) const;
  std::uint64_t multiplies(const std::string& op) const;
  std::uint64_t total_calls() const;
  std::uint64_t total_multiplies() const;

  static void record(const char* op, std::uint64_t multiplies);

 private:
  std::map<std::string, OpCount> counts_;
  OpAudit* previous_;
};

}  // namespace mlc
