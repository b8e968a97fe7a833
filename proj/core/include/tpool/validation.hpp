#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tpool {

struct GradCheckResult {
    std::string component;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Finite-difference sweeps over every differentiable primitive (tolerance
// 1e-6), every pooling head (1e-4), and the backbone + bert composite
// (1e-4). All run in double precision, 10 seeds per component for ops and
// heads.
std::vector<GradCheckResult> gradcheck_ops(std::uint64_t seed_base = 1);
std::vector<GradCheckResult> gradcheck_heads(std::uint64_t seed_base = 1);
std::vector<GradCheckResult> gradcheck_end2end(std::uint64_t seed_base = 1);

bool all_pass(const std::vector<GradCheckResult>& results);
std::string gradcheck_report(const std::vector<GradCheckResult>& results);

}  // namespace tpool
