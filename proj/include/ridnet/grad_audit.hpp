#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ridnet {

enum class AuditScope { ops, blocks, model };

AuditScope parse_audit_scope(const std::string& s);
std::string to_string(AuditScope s);

/// Worst finite-difference result of one differentiable unit over several seeds.
struct AuditEntry {
    std::string scope;
    std::string name;
    std::size_t seeds = 0;
    std::size_t coordinates = 0;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    /// Non-empty when a non-finite value was met.
    std::string failure;

    bool passed() const { return failure.empty() && max_rel_error < tolerance; }
};

inline constexpr double kOpTolerance = 1e-5;
inline constexpr double kEndToEndTolerance = 1e-4;

/// Finite-difference audit (double precision, epsilon 1e-4). `seeds` == 0
/// picks the default per scope: 20 for ops, 5 for blocks, 3 for the model.
std::vector<AuditEntry> grad_audit(AuditScope scope, std::size_t seeds = 0, std::uint64_t base_seed = 1);

}  // namespace ridnet
