#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gaplanes/tensor.hpp"

namespace gaplanes {

enum class Interp { nearest, multilinear };

std::string to_string(Interp interp);
Interp parse_interp(const std::string& s);

/// Geometric-algebra basis element: the sorted set of axes a grid spans.
/// {1} is the line e1, {1,3} the plane e13, {1,2,3} the volume e123.
class BasisLabel {
public:
    BasisLabel() = default;
    explicit BasisLabel(std::vector<int> axes);

    /// Accepts "e1", "e13", "e123" (any order of digits).
    static BasisLabel parse(const std::string& name);

    const std::vector<int>& axes() const { return axes_; }
    std::size_t size() const { return axes_.size(); }
    std::string name() const;
    bool disjoint(const BasisLabel& other) const;

    friend bool operator==(const BasisLabel&, const BasisLabel&) = default;
    friend auto operator<=>(const BasisLabel&, const BasisLabel&) = default;

private:
    std::vector<int> axes_;
};

/// Normalized query point in [0,1]^D, D in {2,3}. Out-of-range components are
/// clamped on construction and the `clamped` flag is raised.
struct Coord {
    std::array<double, 3> x{};
    int dims = 3;
    bool clamped = false;

    Coord() = default;
    Coord(double a, double b);
    Coord(double a, double b, double c);
    static Coord from_span(std::span<const double> v);
};

/// Coordinates of q on the axes of a basis element, order preserved.
struct GridPoint {
    std::array<double, 3> x{};
    int dims = 0;
};

GridPoint project(const Coord& q, const BasisLabel& label);

/// Up to 2^3 contributing nodes with their partition-of-unity weights.
struct Stencil {
    int count = 0;
    std::array<std::size_t, 8> node{};
    std::array<double, 8> weight{};
};

/// Learnable feature vectors on a regular grid over the axes of `label`.
/// params has shape resolution[0] x ... x resolution[D-1] x feature_dim.
class FeatureGrid {
public:
    FeatureGrid() = default;
    FeatureGrid(BasisLabel label, std::vector<std::size_t> resolution, std::size_t feature_dim,
                Interp interp = Interp::multilinear);

    const BasisLabel& label() const { return label_; }
    const std::vector<std::size_t>& resolution() const { return resolution_; }
    std::size_t feature_dim() const { return feature_dim_; }
    Interp interp() const { return interp_; }
    void set_interp(Interp interp);
    std::size_t node_count() const { return params_.size() / feature_dim_; }
    std::size_t param_count() const { return params_.size(); }

    Tensor& params() { return params_; }
    const Tensor& params() const { return params_; }

    /// Multiresolution tag; copies of one basis element differ only here and in resolution.
    int scale() const { return scale_; }
    void set_scale(int s) { scale_ = s; }

    Stencil stencil(const GridPoint& p) const;

    /// Weighted sum of stencil nodes, written to out (length feature_dim).
    void gather(const Stencil& s, std::span<double> out) const;
    /// Adjoint of gather: grad[node] += weight * upstream.
    void scatter(const Stencil& s, std::span<const double> upstream, std::span<double> grad) const;

    void init_uniform(SeededRng& rng, double lo, double hi);

private:
    BasisLabel label_;
    std::vector<std::size_t> resolution_;
    std::size_t feature_dim_ = 0;
    Interp interp_ = Interp::multilinear;
    int scale_ = 1;
    Tensor params_;
};

/// Feature vector at p: linear (1D), bilinear (2D) or trilinear (3D) blend,
/// or the nearest node. Coordinates map to index space as x * (r - 1).
std::vector<double> interpolate(const FeatureGrid& grid, const GridPoint& p);

/// Parameter gradient of <upstream, interpolate(grid, p)>, accumulated into
/// grad (same length as grid.params()).
void interpolate_grad(const FeatureGrid& grid, const GridPoint& p, std::span<const double> upstream,
                      std::span<double> grad);

}  // namespace gaplanes
