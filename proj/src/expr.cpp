#include "gaplanes/expr.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace gaplanes {

GridSet::GridSet(std::vector<FeatureGrid> grids) {
    for (auto& g : grids) add(std::move(g));
}

void GridSet::add(FeatureGrid grid) {
    for (const auto& g : grids_) {
        if (g.label() == grid.label()) {
            if (g.feature_dim() != grid.feature_dim()) {
                throw Error("multiresolution copies of " + grid.label().name() + " must share feature_dim");
            }
            if (g.scale() == grid.scale()) {
                throw Error("duplicate grid id " + grid.label().name() + "@" + std::to_string(grid.scale()));
            }
        }
    }
    grids_.push_back(std::move(grid));
}

std::string GridSet::id(std::size_t i) const {
    return grids_.at(i).label().name() + "@" + std::to_string(grids_[i].scale());
}

std::size_t GridSet::total_params() const {
    std::size_t n = 0;
    for (const auto& g : grids_) n += g.param_count();
    return n;
}

std::vector<std::size_t> GridSet::copies_of(const BasisLabel& label) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < grids_.size(); ++i)
        if (grids_[i].label() == label) idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto na = grids_[a].node_count(), nb = grids_[b].node_count();
        return na != nb ? na < nb : grids_[a].scale() < grids_[b].scale();
    });
    return idx;
}

GaExpr GaExpr::leaf(BasisLabel l) {
    GaExpr e;
    e.kind = Kind::leaf;
    e.label = std::move(l);
    return e;
}

namespace {

GaExpr make_node(GaExpr::Kind k, std::vector<GaExpr> c) {
    if (c.empty()) throw Error("expression node needs at least one child");
    GaExpr e;
    e.kind = k;
    e.children = std::move(c);
    return e;
}

const char* kind_name(GaExpr::Kind k) {
    switch (k) {
        case GaExpr::Kind::mul: return "mul";
        case GaExpr::Kind::add: return "add";
        case GaExpr::Kind::concat: return "concat";
        default: return "leaf";
    }
}

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    GaExpr parse_all() {
        GaExpr e = parse_expr();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing characters");
        return e;
    }

private:
    GaExpr parse_expr() {
        skip_ws();
        std::string word;
        while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) word += s_[pos_++];
        if (word.empty()) fail("expected a name");
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == '(') {
            ++pos_;
            std::vector<GaExpr> children;
            for (;;) {
                children.push_back(parse_expr());
                skip_ws();
                if (pos_ >= s_.size()) fail("unterminated argument list");
                if (s_[pos_] == ',') {
                    ++pos_;
                    continue;
                }
                if (s_[pos_] == ')') {
                    ++pos_;
                    break;
                }
                fail("expected ',' or ')'");
            }
            if (word == "mul") return GaExpr::mul(std::move(children));
            if (word == "add") return GaExpr::add(std::move(children));
            if (word == "concat" || word == "cat") return GaExpr::concat(std::move(children));
            fail("unknown operator '" + word + "'");
        }
        return GaExpr::leaf(BasisLabel::parse(word));
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw Error("cannot parse expression '" + s_ + "' at offset " + std::to_string(pos_) + ": " + what);
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

void collect_axes(const GaExpr& e, std::set<int>& out) {
    if (e.kind == GaExpr::Kind::leaf) {
        out.insert(e.label.axes().begin(), e.label.axes().end());
        return;
    }
    for (const auto& c : e.children) collect_axes(c, out);
}

void collect_labels(const GaExpr& e, std::set<BasisLabel>& out) {
    if (e.kind == GaExpr::Kind::leaf) {
        out.insert(e.label);
        return;
    }
    for (const auto& c : e.children) collect_labels(c, out);
}

std::size_t check_node(const GaExpr& e, const GridSet& grids, const ExprCheck& check) {
    if (e.kind == GaExpr::Kind::leaf) {
        for (int a : e.label.axes()) {
            if (a > check.dims) {
                throw Error("basis element " + e.label.name() + " is outside a " + std::to_string(check.dims) + "D model");
            }
        }
        const auto copies = grids.copies_of(e.label);
        if (copies.empty()) throw Error("no feature grid for basis element " + e.label.name());
        std::size_t dim = 0;
        for (auto i : copies) dim += grids[i].feature_dim();
        return dim;
    }
    std::vector<std::size_t> dims;
    for (const auto& c : e.children) dims.push_back(check_node(c, grids, check));
    if (e.kind == GaExpr::Kind::concat) {
        std::size_t s = 0;
        for (auto d : dims) s += d;
        return s;
    }
    for (auto d : dims) {
        if (d != dims[0]) {
            throw Error(std::string(kind_name(e.kind)) + " children have mismatched feature dims in " + e.to_string());
        }
    }
    if (e.kind == GaExpr::Kind::mul && !check.relax_mul) {
        std::set<int> seen;
        for (const auto& c : e.children) {
            std::set<int> ax;
            collect_axes(c, ax);
            for (int a : ax) {
                if (!seen.insert(a).second) {
                    throw Error("mul children share axis " + std::to_string(a) + " in " + e.to_string() +
                                " (geometric product must compose disjoint elements)");
                }
            }
        }
        if (static_cast<int>(seen.size()) != check.dims) {
            throw Error("mul in " + e.to_string() + " does not compose the full " + std::to_string(check.dims) +
                        "-vector");
        }
    }
    return dims[0];
}

}  // namespace

GaExpr GaExpr::mul(std::vector<GaExpr> c) { return make_node(Kind::mul, std::move(c)); }
GaExpr GaExpr::add(std::vector<GaExpr> c) { return make_node(Kind::add, std::move(c)); }
GaExpr GaExpr::concat(std::vector<GaExpr> c) { return make_node(Kind::concat, std::move(c)); }

GaExpr GaExpr::parse(const std::string& text) { return Parser(text).parse_all(); }

std::string GaExpr::to_string() const {
    if (kind == Kind::leaf) return label.name();
    std::string s = kind_name(kind);
    s += '(';
    for (std::size_t i = 0; i < children.size(); ++i) {
        if (i) s += ',';
        s += children[i].to_string();
    }
    return s + ')';
}

bool GaExpr::contains_mul() const {
    if (kind == Kind::mul) return true;
    return std::any_of(children.begin(), children.end(), [](const GaExpr& c) { return c.contains_mul(); });
}

std::vector<int> GaExpr::axes() const {
    std::set<int> s;
    collect_axes(*this, s);
    return {s.begin(), s.end()};
}

std::vector<BasisLabel> GaExpr::labels() const {
    std::set<BasisLabel> s;
    collect_labels(*this, s);
    return {s.begin(), s.end()};
}

GaExpr expr_from_name(const std::string& name) {
    if (name == "CONCAT") return GaExpr::parse(presets::kConcat);
    if (name == "MULT") return GaExpr::parse(presets::kMult);
    if (name == "TRIPLANE_ADD") return GaExpr::parse(presets::kTriplaneAdd);
    if (name == "TRIPLANE_MUL") return GaExpr::parse(presets::kTriplaneMul);
    return GaExpr::parse(name);
}

std::size_t validate(const GaExpr& expr, const GridSet& grids, ExprCheck check) {
    if (check.dims != 2 && check.dims != 3) throw Error("models are 2D or 3D");
    return check_node(expr, grids, check);
}

CompiledExpr::CompiledExpr(const GaExpr& expr, const GridSet& grids, ExprCheck check) {
    output_dim_ = validate(expr, grids, check);
    grid_offset_.assign(grids.size(), 0);
    grid_dim_.assign(grids.size(), 0);
    std::size_t off = 0;
    for (std::size_t g = 0; g < grids.size(); ++g) {
        grid_offset_[g] = off;
        grid_dim_[g] = grids[g].feature_dim();
        off += grid_dim_[g];
    }
    grid_area_ = off;

    // Post-order flattening.
    auto build = [&](auto&& self, const GaExpr& e) -> std::size_t {
        Node n;
        n.kind = e.kind;
        if (e.kind == GaExpr::Kind::leaf) {
            n.grids = grids.copies_of(e.label);
            for (auto g : n.grids) n.dim += grid_dim_[g];
        } else {
            for (const auto& c : e.children) n.children.push_back(self(self, c));
            if (e.kind == GaExpr::Kind::concat) {
                for (auto c : n.children) n.dim += nodes_[c].dim;
            } else {
                n.dim = nodes_[n.children[0]].dim;
            }
        }
        n.offset = off;
        off += n.dim;
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    };
    build(build, expr);
    total_ = off;
    std::set<std::size_t> used;
    for (const auto& n : nodes_) used.insert(n.grids.begin(), n.grids.end());
    used_.assign(used.begin(), used.end());
}

CompiledExpr::Workspace CompiledExpr::make_workspace() const {
    Workspace ws;
    ws.value.assign(total_, 0.0);
    ws.grad.assign(total_, 0.0);
    ws.stencils.assign(grid_offset_.size(), Stencil{});
    return ws;
}

void CompiledExpr::run_nodes(std::vector<double>& value) const {
    double* v = value.data();
    for (const auto& n : nodes_) {
        double* out = v + n.offset;
        switch (n.kind) {
            case GaExpr::Kind::leaf: {
                std::size_t o = 0;
                for (auto g : n.grids) {
                    std::copy_n(v + grid_offset_[g], grid_dim_[g], out + o);
                    o += grid_dim_[g];
                }
                break;
            }
            case GaExpr::Kind::concat: {
                std::size_t o = 0;
                for (auto c : n.children) {
                    std::copy_n(v + nodes_[c].offset, nodes_[c].dim, out + o);
                    o += nodes_[c].dim;
                }
                break;
            }
            case GaExpr::Kind::add:
            case GaExpr::Kind::mul: {
                const bool is_mul = n.kind == GaExpr::Kind::mul;
                std::copy_n(v + nodes_[n.children[0]].offset, n.dim, out);
                for (std::size_t k = 1; k < n.children.size(); ++k) {
                    const double* in = v + nodes_[n.children[k]].offset;
                    if (is_mul) {
                        for (std::size_t i = 0; i < n.dim; ++i) out[i] *= in[i];
                    } else {
                        for (std::size_t i = 0; i < n.dim; ++i) out[i] += in[i];
                    }
                }
                break;
            }
        }
    }
}

std::span<const double> CompiledExpr::forward(const GridSet& grids, const Coord& q, Workspace& ws) const {
    for (auto g : used_) {
        const auto& grid = grids[g];
        ws.stencils[g] = grid.stencil(project(q, grid.label()));
        grid.gather(ws.stencils[g], std::span<double>(ws.value).subspan(grid_offset_[g], grid_dim_[g]));
    }
    run_nodes(ws.value);
    const auto& root = nodes_.back();
    return std::span<const double>(ws.value).subspan(root.offset, root.dim);
}

std::span<const double> CompiledExpr::forward_shared(const GridSet& twin, Workspace& ws,
                                                     std::vector<double>& scratch) const {
    scratch.resize(total_);
    for (auto g : used_) {
        twin[g].gather(ws.stencils[g], std::span<double>(scratch).subspan(grid_offset_[g], grid_dim_[g]));
    }
    run_nodes(scratch);
    const auto& root = nodes_.back();
    return std::span<const double>(scratch).subspan(root.offset, root.dim);
}

void CompiledExpr::backward(const GridSet& grids, std::span<const double> upstream, Workspace& ws,
                            std::span<const std::span<double>> grid_grads) const {
    std::fill(ws.grad.begin(), ws.grad.end(), 0.0);
    double* gr = ws.grad.data();
    const double* v = ws.value.data();
    const auto& root = nodes_.back();
    std::copy_n(upstream.data(), root.dim, gr + root.offset);

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        const Node& n = *it;
        const double* g = gr + n.offset;
        switch (n.kind) {
            case GaExpr::Kind::leaf: {
                std::size_t o = 0;
                for (auto gi : n.grids) {
                    double* dst = gr + grid_offset_[gi];
                    for (std::size_t i = 0; i < grid_dim_[gi]; ++i) dst[i] += g[o + i];
                    o += grid_dim_[gi];
                }
                break;
            }
            case GaExpr::Kind::concat: {
                std::size_t o = 0;
                for (auto c : n.children) {
                    double* dst = gr + nodes_[c].offset;
                    for (std::size_t i = 0; i < nodes_[c].dim; ++i) dst[i] += g[o + i];
                    o += nodes_[c].dim;
                }
                break;
            }
            case GaExpr::Kind::add:
                for (auto c : n.children) {
                    double* dst = gr + nodes_[c].offset;
                    for (std::size_t i = 0; i < n.dim; ++i) dst[i] += g[i];
                }
                break;
            case GaExpr::Kind::mul:
                // Product rule: each child gets upstream times the product of its siblings.
                for (std::size_t k = 0; k < n.children.size(); ++k) {
                    double* dst = gr + nodes_[n.children[k]].offset;
                    for (std::size_t i = 0; i < n.dim; ++i) {
                        double p = g[i];
                        for (std::size_t o = 0; o < n.children.size(); ++o) {
                            if (o != k) p *= v[nodes_[n.children[o]].offset + i];
                        }
                        dst[i] += p;
                    }
                }
                break;
        }
    }

    for (auto gi : used_) {
        if (gi >= grid_grads.size() || grid_grads[gi].empty()) continue;
        grids[gi].scatter(ws.stencils[gi], std::span<const double>(gr + grid_offset_[gi], grid_dim_[gi]),
                          grid_grads[gi]);
    }
}

std::vector<double> eval_expr(const GaExpr& expr, const GridSet& grids, const Coord& q, ExprCheck check) {
    CompiledExpr c(expr, grids, check);
    auto ws = c.make_workspace();
    auto f = c.forward(grids, q, ws);
    return {f.begin(), f.end()};
}

std::vector<Tensor> eval_expr_grad(const GaExpr& expr, const GridSet& grids, const Coord& q,
                                   std::span<const double> upstream, ExprCheck check) {
    CompiledExpr c(expr, grids, check);
    if (upstream.size() != c.output_dim()) throw Error("upstream gradient length mismatch");
    auto ws = c.make_workspace();
    c.forward(grids, q, ws);
    std::vector<Tensor> out;
    std::vector<std::span<double>> spans;
    out.reserve(grids.size());
    for (const auto& g : grids) out.emplace_back(g.params().shape());
    for (auto& t : out) spans.push_back(t.data());
    c.backward(grids, upstream, ws, spans);
    return out;
}

}  // namespace gaplanes
