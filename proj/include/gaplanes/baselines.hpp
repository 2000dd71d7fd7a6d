#pragma once

#include <string>
#include <vector>

#include "gaplanes/linalg.hpp"

namespace gaplanes {

/// Best rank-k approximation by SVD truncation.
Tensor lowrank_k(const Tensor& m, std::size_t k);

// Resampling operators as explicit matrices. Pixel k covers [k, k+1).
/// r x m area average over r equal cells (fractional overlaps weighted).
Tensor box_matrix(std::size_t m, std::size_t r);
/// m x r linear interpolation from cell centers, extrapolating linearly past
/// the outer centers; composes with box_matrix to preserve affine signals.
Tensor linear_up_matrix(std::size_t m, std::size_t r);
/// m x r linear interpolation with node j at row j(m-1)/(r-1); the feature-grid
/// convention (row k queries coordinate k/(m-1)).
Tensor node_interp_matrix(std::size_t m, std::size_t r);

/// r_low x r_low box average of M.
Tensor downsample(const Tensor& m, std::size_t r_low);
Tensor downsample(const Tensor& m, std::size_t r_rows, std::size_t r_cols);
/// phi(L): linear upsampling to rows x cols.
Tensor upsample(const Tensor& low, std::size_t rows, std::size_t cols);

struct LowRankLowRes {
    Tensor low;       // r_low x r_low
    Tensor lowrank;   // rank-k part of M - phi(low)
    Tensor approx;    // phi(low) + lowrank
    std::size_t k = 0;
    std::size_t r_low = 0;
};

/// Greedy: L = downsample(M), then the rank-k SVD of M - phi(L). r_low = 0
/// means no low-resolution part.
LowRankLowRes lowrank_plus_lowres(const Tensor& m, std::size_t k, std::size_t r_low);

struct LowRankSparse {
    Tensor lowrank;
    Tensor sparse;
    Tensor approx;
    std::size_t k = 0;
    std::size_t s = 0;
    int rounds = 0;
    std::vector<double> objective;  // squared Frobenius error after each round
};

/// Alternating minimization starting from sparse = 0: low rank <- rank-k SVD of
/// (M - sparse); sparse <- the s largest-magnitude entries of (M - low rank).
/// Stops after iters rounds or when a round gains less than min_gain_db PSNR.
LowRankSparse lowrank_plus_sparse(const Tensor& m, std::size_t k, std::size_t s, int iters = 10,
                                  double min_gain_db = 0.01);

enum class SparseCounting { value_only, value_and_index };

std::size_t lowres_param_count(std::size_t m, std::size_t n, std::size_t k, std::size_t r_low);
/// 1 per kept entry (value only) or 3 (value plus row and column index).
std::size_t sparse_param_count(std::size_t m, std::size_t n, std::size_t k, std::size_t s, SparseCounting counting);

struct DecompRow {
    double budget_frac = 0.0;
    std::string method;  // "lowrank_lowres", "lowrank_sparse" or "lowrank"
    std::size_t k = 0;
    std::size_t r_low_or_s = 0;
    double psnr = 0.0;
    std::size_t params = 0;
};

struct DecompOptions {
    std::vector<double> budgets{0.10, 0.1875, 0.25, 0.40};
    std::vector<std::size_t> r_lows;           // empty: multiples of 16 up to min(m, n)
    std::vector<double> sparse_rank_fracs{0.25, 0.5, 0.625, 0.75, 0.875, 1.0};  // of the budget's max rank
    int sparse_iters = 10;
    SparseCounting counting = SparseCounting::value_only;
    double peak = 1.0;
};

/// Every evaluated split, for both methods and the plain SVD, per budget.
std::vector<DecompRow> decomp_sweep(const Tensor& m, const DecompOptions& opt);
/// Best row per (budget, method).
std::vector<DecompRow> pareto_front(const std::vector<DecompRow>& rows);

std::string decomp_csv(const std::vector<DecompRow>& rows);

}  // namespace gaplanes
