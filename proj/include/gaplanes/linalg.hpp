#pragma once

#include <vector>

#include "gaplanes/tensor.hpp"

namespace gaplanes {

/// Thin SVD, M = U diag(S) V^T with r = min(m, n) columns in U and V.
struct Svd {
    Tensor u;               // m x r
    std::vector<double> s;  // r values, nonincreasing, nonnegative
    Tensor v;               // n x r
};

struct SvdOptions {
    double tolerance = 1e-12;
    int max_sweeps = 60;
};

inline constexpr double kDefaultRankTolerance = 1e-8;
inline constexpr double kPsnrCap = 200.0;

Tensor matmul(const Tensor& a, const Tensor& b);

/// One-sided (Hestenes) Jacobi SVD. Throws Error when the sweep cap is hit.
/// A previous factorization of a nearby matrix of the same shape may be
/// passed as a starting rotation; the result is still an exact SVD.
Svd svd(const Tensor& m, SvdOptions options = {}, const Svd* warm = nullptr);
std::vector<double> singular_values(const Tensor& m, SvdOptions options = {});

/// U_k diag(S_k) V_k^T from an existing factorization.
Tensor reconstruct(const Svd& f, std::size_t k);

/// Number of singular values above rel_tol * sigma_1; 0 for the zero matrix.
int numeric_rank(const Tensor& m, double rel_tol = kDefaultRankTolerance);

/// sqrt(sum_{i >= k} s_i^2), the Eckart-Young error of the best rank-k fit.
double tail_norm(const std::vector<double>& s, std::size_t k);

double frobenius_norm(const Tensor& m);
double mse(const Tensor& pred, const Tensor& target);

/// 10 log10(peak^2 / MSE), capped at kPsnrCap for a perfect match.
double psnr(const Tensor& pred, const Tensor& target, double peak = 1.0);

}  // namespace gaplanes
