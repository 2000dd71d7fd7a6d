#pragma once

#include <string>

#include "gaplanes/model.hpp"
#include "gaplanes/training.hpp"

namespace gaplanes {

/// 2D feature combiners over the line grids e1 (rows) and e2 (columns).
/// mul_plane adds a plane grid e12: g1 * g2 + g12.
enum class Combiner2D { add, concat, mul, mul_plane };

std::string to_string(Combiner2D c);
Combiner2D parse_combiner(const std::string& s);
/// Expression text, e.g. "mul(e1,e2)".
std::string combiner_expr(Combiner2D c);

struct Model2DOptions {
    Combiner2D combiner = Combiner2D::mul;
    DecoderKind decoder = DecoderKind::linear;
    std::size_t k = 4;        // line feature dim
    std::size_t r1 = 16;      // line resolution
    std::size_t r_plane = 8;  // plane side (mul_plane only)
    std::size_t hidden = 16;
    Interp interp = Interp::nearest;
    bool bias = false;
    double grid_init = 0.1;
    std::uint64_t seed = 0;
};

ModelSpec model_spec_2d(const Model2DOptions& opt);

/// Largest rank the assembled matrix can reach: 2 for add/concat with a
/// linear decoder, k for mul, k + r_plane for mul_plane, and the line
/// resolution r1 once a nonlinear decoder is used (nearest interpolation).
std::size_t rank_bound(const Model2DOptions& opt);

/// Mul + linear model whose node values reproduce the rank-k truncation of M:
/// g1 = U_k sqrt(S_k), g2 = V_k sqrt(S_k), alpha = 1. Grid resolutions match M.
Model svd_model(const Tensor& m, std::size_t k);

/// One sample per matrix entry at (k/(rows-1), l/(cols-1)).
PointDataset matrix_dataset(const Tensor& m);

/// s[i] (0-based, 0 past the end).
double sigma_at(const Tensor& m, std::size_t i);

/// phi(L) part of a trained mul_plane + linear model: the assembled matrix with
/// the line grids zeroed.
Tensor plane_part(const Model& m, std::size_t rows, std::size_t cols);

/// Eckart-Young bound on ||M - M_hat|| for any M_hat = rank-k + A L B^T, where
/// A, B linearly interpolate from an r_plane node grid: max of the rank-k tails of
/// (I - P_A) M and M (I - P_B).
double plane_projection_bound(const Tensor& m, std::size_t k, std::size_t r_plane);

}  // namespace gaplanes
