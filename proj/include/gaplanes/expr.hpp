#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gaplanes/grid.hpp"

namespace gaplanes {

/// Ordered collection of feature grids. Multiresolution copies of one basis
/// element share label and feature_dim and differ in resolution and scale.
class GridSet {
public:
    GridSet() = default;
    explicit GridSet(std::vector<FeatureGrid> grids);

    void add(FeatureGrid grid);
    std::size_t size() const { return grids_.size(); }
    bool empty() const { return grids_.empty(); }
    FeatureGrid& operator[](std::size_t i) { return grids_[i]; }
    const FeatureGrid& operator[](std::size_t i) const { return grids_[i]; }
    auto begin() { return grids_.begin(); }
    auto end() { return grids_.end(); }
    auto begin() const { return grids_.begin(); }
    auto end() const { return grids_.end(); }

    std::string id(std::size_t i) const;
    std::size_t total_params() const;

    /// Indices of the grids carrying `label`, in ascending resolution order.
    std::vector<std::size_t> copies_of(const BasisLabel& label) const;

private:
    std::vector<FeatureGrid> grids_;
};

/// Feature-combination expression over basis elements.
struct GaExpr {
    enum class Kind { leaf, mul, add, concat };

    Kind kind = Kind::leaf;
    BasisLabel label;  // leaf only
    std::vector<GaExpr> children;

    static GaExpr leaf(BasisLabel l);
    static GaExpr leaf(const std::string& name) { return leaf(BasisLabel::parse(name)); }
    static GaExpr mul(std::vector<GaExpr> c);
    static GaExpr add(std::vector<GaExpr> c);
    static GaExpr concat(std::vector<GaExpr> c);

    /// Prefix notation, e.g. "concat(mul(e1,e2),e12)".
    static GaExpr parse(const std::string& text);
    std::string to_string() const;

    bool contains_mul() const;
    /// Union of axes over all leaves.
    std::vector<int> axes() const;
    /// Distinct basis elements referenced, sorted.
    std::vector<BasisLabel> labels() const;
};

namespace presets {
inline constexpr const char* kConcat = "concat(e1,e2,e3,e12,e13,e23,e123)";
inline constexpr const char* kMult = "concat(mul(e1,e2,e3),mul(e1,e23),mul(e2,e13),mul(e3,e12),e123)";
inline constexpr const char* kTriplaneAdd = "add(e12,e13,e23)";
inline constexpr const char* kTriplaneMul = "mul(e12,e13,e23)";
}  // namespace presets

/// Resolves a preset name (CONCAT, MULT, TRIPLANE_ADD, TRIPLANE_MUL) or parses
/// the text as an expression.
GaExpr expr_from_name(const std::string& name_or_expr);

struct ExprCheck {
    int dims = 3;
    /// Allow Mul children that share axes or do not cover all modeled axes.
    bool relax_mul = false;
};

/// Throws Error on dimension mismatch, missing grids, or a geometric-algebra
/// violation at Mul. Returns the output feature dimension.
std::size_t validate(const GaExpr& expr, const GridSet& grids, ExprCheck check = {});

/// Flattened expression with a reusable scratch area; the fast path used by
/// models during training.
class CompiledExpr {
public:
    CompiledExpr() = default;
    CompiledExpr(const GaExpr& expr, const GridSet& grids, ExprCheck check = {});

    std::size_t output_dim() const { return output_dim_; }

    struct Workspace {
        std::vector<double> value;
        std::vector<double> grad;
        std::vector<Stencil> stencils;
    };
    Workspace make_workspace() const;

    /// Evaluates at q; the returned span points into ws.
    std::span<const double> forward(const GridSet& grids, const Coord& q, Workspace& ws) const;

    /// Backpropagates upstream (length output_dim) after forward() on the same ws.
    /// grid_grads[i] receives the parameter gradient of grid i; empty spans are skipped.
    void backward(const GridSet& grids, std::span<const double> upstream, Workspace& ws,
                  std::span<const std::span<double>> grid_grads) const;

    /// Re-evaluates the expression on another grid set with identical shapes,
    /// reusing the stencils from the last forward() (frozen gate grids).
    std::span<const double> forward_shared(const GridSet& twin, Workspace& ws, std::vector<double>& scratch) const;

private:
    struct Node {
        GaExpr::Kind kind;
        std::size_t offset = 0;
        std::size_t dim = 0;
        std::vector<std::size_t> children;
        std::vector<std::size_t> grids;  // leaf only, ascending resolution
    };

    void run_nodes(std::vector<double>& value) const;

    std::vector<Node> nodes_;  // post-order; root is last
    std::vector<std::size_t> grid_offset_;
    std::vector<std::size_t> grid_dim_;
    std::vector<std::size_t> used_;  // grids referenced by some leaf
    std::size_t grid_area_ = 0;
    std::size_t total_ = 0;
    std::size_t output_dim_ = 0;
};

/// Feature vector f(q) for an expression (allocating convenience wrapper).
std::vector<double> eval_expr(const GaExpr& expr, const GridSet& grids, const Coord& q, ExprCheck check = {});

/// Per-grid parameter gradients of <upstream, eval_expr(...)>.
std::vector<Tensor> eval_expr_grad(const GaExpr& expr, const GridSet& grids, const Coord& q,
                                   std::span<const double> upstream, ExprCheck check = {});

}  // namespace gaplanes
