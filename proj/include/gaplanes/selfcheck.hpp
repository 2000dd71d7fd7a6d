#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gaplanes {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Central finite differences (step 1e-6) against the analytic adjoints for
/// grids, each combiner, each decoder, and the full concatenative and
/// multiplicative models. Cases whose ReLU or gate inputs sit within 1e-4 of
/// zero are redrawn. One result per composition.
std::vector<CheckResult> gradient_suite(std::size_t cases = 100, double tol = 1e-5);

/// Rank of the assembled matrix against rank_bound for add / concat / mul with
/// linear and MLP decoders (m = n = 24, k = 3, r1 = 8, h = 16, nearest).
std::vector<CheckResult> rank_suite(std::size_t seeds = 20);

/// Partition of unity, node reproduction, and exactness on affine functions.
std::vector<CheckResult> interpolation_suite(std::size_t cases = 100);

/// Fused-model output is linear in the trainable parameters.
CheckResult convexity_check(std::size_t cases = 20);

std::vector<CheckResult> self_check(std::size_t gradient_cases = 100);

}  // namespace gaplanes
