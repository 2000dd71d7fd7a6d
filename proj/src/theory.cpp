#include "gaplanes/theory.hpp"

#include <cmath>

#include "gaplanes/baselines.hpp"

namespace gaplanes {

std::string to_string(Combiner2D c) {
    switch (c) {
        case Combiner2D::add: return "add";
        case Combiner2D::concat: return "concat";
        case Combiner2D::mul: return "mul";
        case Combiner2D::mul_plane: return "mul_plane";
    }
    return "?";
}

Combiner2D parse_combiner(const std::string& s) {
    if (s == "add") return Combiner2D::add;
    if (s == "concat") return Combiner2D::concat;
    if (s == "mul") return Combiner2D::mul;
    if (s == "mul_plane") return Combiner2D::mul_plane;
    throw Error("unknown combiner '" + s + "' (expected add, concat, mul or mul_plane)");
}

std::string combiner_expr(Combiner2D c) {
    switch (c) {
        case Combiner2D::add: return "add(e1,e2)";
        case Combiner2D::concat: return "concat(e1,e2)";
        case Combiner2D::mul: return "mul(e1,e2)";
        case Combiner2D::mul_plane: return "add(mul(e1,e2),e12)";
    }
    return "";
}

ModelSpec model_spec_2d(const Model2DOptions& opt) {
    if (opt.k == 0 || opt.r1 == 0) throw Error("2D model needs k >= 1 and r1 >= 1");
    ModelSpec s;
    s.dims = 2;
    s.expr = combiner_expr(opt.combiner);
    s.grids = {GridSpec{"e1", {opt.r1}, opt.k, 1}, GridSpec{"e2", {opt.r1}, opt.k, 1}};
    if (opt.combiner == Combiner2D::mul_plane) s.grids.push_back(GridSpec{"e12", {opt.r_plane, opt.r_plane}, opt.k, 1});
    s.interp = opt.interp;
    s.decoder = opt.decoder;
    s.mode = Mode::nonconvex;
    if (opt.decoder == DecoderKind::fused) s.mode = Mode::convex;
    s.hidden = opt.hidden;
    s.bias = opt.bias;
    s.grid_init = opt.grid_init;
    s.seed = opt.seed;
    return s;
}

std::size_t rank_bound(const Model2DOptions& opt) {
    if (opt.decoder == DecoderKind::linear) {
        switch (opt.combiner) {
            case Combiner2D::add:
            case Combiner2D::concat: return 2;
            case Combiner2D::mul: return opt.k + (opt.bias ? 1 : 0);
            case Combiner2D::mul_plane: return opt.k + opt.r_plane + (opt.bias ? 1 : 0);
        }
    }
    if (opt.combiner == Combiner2D::mul_plane) throw Error("no resolution rank bound for mul_plane with a nonlinear decoder");
    if (opt.interp != Interp::nearest) throw Error("the r1 rank bound needs nearest interpolation");
    return opt.r1;
}

Model svd_model(const Tensor& m, std::size_t k) {
    if (m.rank() != 2) throw Error("svd_model needs a matrix");
    if (k == 0 || k > std::min(m.rows(), m.cols())) throw Error("svd_model rank out of range");
    const Svd f = svd(m);
    ModelSpec s;
    s.dims = 2;
    s.expr = combiner_expr(Combiner2D::mul);
    s.grids = {GridSpec{"e1", {m.rows()}, k, 1}, GridSpec{"e2", {m.cols()}, k, 1}};
    s.interp = Interp::multilinear;
    s.decoder = DecoderKind::linear;
    s.bias = false;
    Model model(s);
    Tensor& g1 = model.grids()[0].params();
    Tensor& g2 = model.grids()[1].params();
    for (std::size_t j = 0; j < k; ++j) {
        const double w = std::sqrt(f.s[j]);
        for (std::size_t i = 0; i < m.rows(); ++i) g1(i, j) = f.u(i, j) * w;
        for (std::size_t i = 0; i < m.cols(); ++i) g2(i, j) = f.v(i, j) * w;
    }
    std::get<LinearDecoder>(model.decoder()).alpha.assign(k, 1.0);
    return model;
}

PointDataset matrix_dataset(const Tensor& m) {
    if (m.rank() != 2 || m.rows() < 2 || m.cols() < 2) throw Error("matrix_dataset needs at least a 2x2 matrix");
    PointDataset d;
    d.coords.reserve(m.size());
    d.targets.reserve(m.size());
    for (std::size_t k = 0; k < m.rows(); ++k) {
        for (std::size_t l = 0; l < m.cols(); ++l) {
            d.add(Coord(static_cast<double>(k) / static_cast<double>(m.rows() - 1),
                        static_cast<double>(l) / static_cast<double>(m.cols() - 1)),
                  m(k, l));
        }
    }
    return d;
}

double sigma_at(const Tensor& m, std::size_t i) {
    const auto s = singular_values(m);
    return i < s.size() ? s[i] : 0.0;
}

Tensor plane_part(const Model& m, std::size_t rows, std::size_t cols) {
    Model copy = m;
    for (auto& g : copy.grids()) {
        if (g.label().size() == 1) g.params().fill(0.0);
    }
    return assemble_matrix(copy, rows, cols);
}

namespace {

// Rows minus their projection onto range(a).
Tensor project_out(const Tensor& m, const Tensor& a) {
    const Svd f = svd(a);
    const std::size_t r = numeric_rank(a, kDefaultRankTolerance);
    Tensor ut = Tensor::matrix(r, a.rows());
    for (std::size_t j = 0; j < r; ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) ut(j, i) = f.u(i, j);
    return m - matmul(ut.transposed(), matmul(ut, m));
}

}  // namespace

double plane_projection_bound(const Tensor& m, std::size_t k, std::size_t r_plane) {
    const Tensor a = node_interp_matrix(m.rows(), r_plane);
    const Tensor b = node_interp_matrix(m.cols(), r_plane);
    const double rows_out = tail_norm(singular_values(project_out(m, a)), k);
    const double cols_out = tail_norm(singular_values(project_out(m.transposed(), b)), k);
    return std::max(rows_out, cols_out);
}

}  // namespace gaplanes
