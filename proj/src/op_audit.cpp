#include "mlc/op_audit.hpp"

namespace mlc {

namespace {
thread_local OpAudit* current_audit = nullptr;
}

OpAudit::OpAudit() : previous_(current_audit) { current_audit = this; }

OpAudit::~OpAudit() { current_audit = previous_; }

void OpAudit::record(const char* op, std::uint64_t multiplies) {
  if (current_audit == nullptr) return;
  auto& c = current_audit->counts_[op];
  ++c.calls;
  c.multiplies += multiplies;
}

std::uint64_t OpAudit::calls(const std::string& op) const {
  auto it = counts_.find(op);
  return it == counts_.end() ? 0 : it->second.calls;
}

std::uint64_t OpAudit::multiplies(const std::string& op) const {
  auto it = counts_.find(op);
  return it == counts_.end() ? 0 : it->second.multiplies;
}

std::uint64_t OpAudit::total_calls() const {
  std::uint64_t n = 0;
  for (const auto& [_, c] : counts_) n += c.calls;
  return n;
}

std::uint64_t OpAudit::total_multiplies() const {
  std::uint64_t n = 0;
  for (const auto& [_, c] : counts_) n += c.multiplies;
  return n;
}

}  // namespace mlc
