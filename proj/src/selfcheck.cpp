#include "gaplanes/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "gaplanes/linalg.hpp"
#include "gaplanes/theory.hpp"
#include "gaplanes/training.hpp"

namespace gaplanes {

namespace {

constexpr double kStep = 1e-6;
constexpr double kKinkMargin = 1e-4;

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4}); }

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

// Worst relative error between central differences of f and grad over every
// coordinate of params.
double fd_worst(const std::function<double()>& f, std::span<double> params, std::span<const double> grad) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + kStep;
        const double up = f();
        params[i] = keep - kStep;
        const double down = f();
        params[i] = keep;
        worst = std::max(worst, rel_err((up - down) / (2 * kStep), grad[i]));
    }
    return worst;
}

std::vector<double> normals(std::size_t n, SeededRng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

Coord random_coord(SeededRng& rng, int dims) {
    return dims == 2 ? Coord(rng.uniform(), rng.uniform()) : Coord(rng.uniform(), rng.uniform(), rng.uniform());
}

CheckResult summarize(const std::string& name, double worst, std::size_t cases, double tol) {
    return {name, worst < tol, "worst rel err " + sci(worst) + " over " + std::to_string(cases) + " cases"};
}

CheckResult check_grids(std::size_t cases, double tol) {
    const char* labels[] = {"e1", "e23", "e123"};
    double worst = 0.0;
    for (std::size_t c = 0; c < cases; ++c) {
        SeededRng rng(SeededRng::derive(0x6d1d, c));
        const BasisLabel label = BasisLabel::parse(labels[c % 3]);
        std::vector<std::size_t> res(label.size());
        for (auto& r : res) r = 2 + rng.below(4);
        FeatureGrid g(label, res, 1 + rng.below(3), c % 2 ? Interp::nearest : Interp::multilinear);
        g.init_uniform(rng, -1, 1);
        const GridPoint p = project(random_coord(rng, 3), label);
        const auto up = normals(g.feature_dim(), rng);
        std::vector<double> grad(g.param_count(), 0.0);
        interpolate_grad(g, p, up, grad);
        auto f = [&] {
            const auto v = interpolate(g, p);
            double s = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) s += up[i] * v[i];
            return s;
        };
        worst = std::max(worst, fd_worst(f, g.params().data(), grad));
    }
    return summarize("gradient/grids", worst, cases, tol);
}

CheckResult check_combiner(const std::string& name, const std::vector<std::string>& exprs, std::size_t cases,
                           double tol) {
    double worst = 0.0;
    for (std::size_t c = 0; c < cases; ++c) {
        SeededRng rng(SeededRng::derive(0xc0b1, c * 31 + exprs.size()));
        const GaExpr expr = GaExpr::parse(exprs[c % exprs.size()]);
        const ExprCheck check{3, true};
        // Every leaf shares one feature dim so mul and add type-check.
        const std::size_t d = 1 + rng.below(3);
        GridSet grids;
        for (const char* l : {"e1", "e2", "e3", "e12", "e13", "e23", "e123"}) {
            const BasisLabel label = BasisLabel::parse(l);
            std::vector<std::size_t> res(label.size());
            for (auto& r : res) r = 2 + rng.below(3);
            FeatureGrid g(label, res, d, Interp::multilinear);
            g.init_uniform(rng, -1, 1);
            grids.add(std::move(g));
        }
        const Coord q = random_coord(rng, 3);
        const std::size_t out = eval_expr(expr, grids, q, check).size();
        const auto up = normals(out, rng);
        const auto grads = eval_expr_grad(expr, grids, q, up, check);
        auto f = [&] {
            const auto v = eval_expr(expr, grids, q, check);
            double s = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) s += up[i] * v[i];
            return s;
        };
        for (std::size_t i = 0; i < grids.size(); ++i)
            worst = std::max(worst, fd_worst(f, grids[i].params().data(), grads[i].data()));
    }
    return summarize("gradient/combiner/" + name, worst, cases, tol);
}

bool near_zero(std::span<const double> v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return std::abs(x) < kKinkMargin; });
}

std::vector<double> matvec(const Tensor& w, std::span<const double> f) {
    std::vector<double> out(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) out[i] += w(i, j) * f[j];
    return out;
}

CheckResult check_decoder(DecoderKind kind, std::size_t cases, double tol) {
    double worst = 0.0;
    std::size_t done = 0;
    for (std::uint64_t c = 0; done < cases; ++c) {
        SeededRng rng(SeededRng::derive(0xdec0, c * 7 + static_cast<std::uint64_t>(kind)));
        const std::size_t in = 2 + rng.below(6), h = 2 + rng.below(6);
        auto f = normals(in, rng);
        const double up = rng.normal();
        auto random_matrix = [&](std::size_t r, std::size_t cc) {
            Tensor t = Tensor::matrix(r, cc);
            for (auto& v : t.vec()) v = rng.normal();
            return t;
        };
        std::vector<double> df(in);
        if (kind == DecoderKind::linear) {
            LinearDecoder d{normals(in, rng), rng.normal()};
            LinearDecoder g;
            decode_linear_grad(d, f, up, g, df);
            auto val = [&] { return up * decode_linear(d, f); };
            worst = std::max({worst, fd_worst(val, d.alpha, g.alpha), fd_worst(val, {&d.bias, 1}, {&g.bias, 1}),
                              fd_worst(val, f, df)});
        } else if (kind == DecoderKind::mlp) {
            MlpDecoder d{random_matrix(h, in), normals(h, rng), rng.normal()};
            std::vector<double> pre(h);
            decode_mlp(d, f, pre);
            if (near_zero(pre)) continue;
            MlpDecoder g;
            decode_mlp_grad(d, f, pre, up, g, df);
            auto val = [&] { return up * decode_mlp(d, f); };
            worst = std::max({worst, fd_worst(val, d.w.data(), g.w.data()), fd_worst(val, d.alpha, g.alpha),
                              fd_worst(val, {&d.bias, 1}, {&g.bias, 1}), fd_worst(val, f, df)});
        } else if (kind == DecoderKind::gated) {
            GatedMlpDecoder d{random_matrix(h, in), random_matrix(h, in), rng.normal()};
            if (near_zero(matvec(d.w_frozen, f))) continue;
            std::vector<double> gate(h);
            decode_gated(d, f, gate);
            GatedMlpDecoder g;
            decode_gated_grad(d, f, gate, up, g, df);
            auto val = [&] { return up * decode_gated(d, f); };
            worst = std::max({worst, fd_worst(val, d.w.data(), g.w.data()), fd_worst(val, {&d.bias, 1}, {&g.bias, 1}),
                              fd_worst(val, f, df)});
        } else {
            // Fused: the gates are frozen grids, so only the trainable twin moves.
            ModelSpec s;
            s.expr = presets::kConcat;
            s.grids = grids_for(expr_from_name(s.expr), {1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(2)},
                                {2 + rng.below(4), 2 + rng.below(3), 2 + rng.below(2)});
            s.mode = Mode::convex;
            s.decoder = DecoderKind::fused;
            s.seed = c;
            Model m(s);
            const Coord q = random_coord(rng, 3);
            std::vector<double> grad(m.trainable_count(), 0.0);
            auto cache = m.make_cache();
            m.forward(q, cache);
            m.backward(cache, up, grad);
            auto params = m.flat_params();
            auto val = [&] {
                m.set_flat_params(params);
                return up * m.predict(q);
            };
            worst = std::max(worst, fd_worst(val, params, grad));
        }
        ++done;
    }
    return summarize("gradient/decoder/" + to_string(kind), worst, cases, tol);
}

// Kink test for model-level checks: MLP pre-activations and gated gate inputs.
bool model_near_kink(const Model& m, const std::vector<Coord>& pts) {
    for (const auto& q : pts) {
        if (m.decoder_kind() == DecoderKind::mlp) {
            auto c = m.make_cache();
            m.forward(q, c);
            if (near_zero(c.hidden)) return true;
        } else if (m.decoder_kind() == DecoderKind::gated) {
            const auto f = eval_expr(m.expr(), m.grids(), q, ExprCheck{m.dims(), m.spec().relax_mul});
            if (near_zero(matvec(std::get<GatedMlpDecoder>(m.decoder()).w_frozen, f))) return true;
        }
    }
    return false;
}

CheckResult check_model(const std::string& name, const std::string& expr, DecoderKind dec, Mode mode,
                        std::size_t cases, double tol) {
    double worst = 0.0;
    std::size_t done = 0;
    for (std::uint64_t c = 0; done < cases; ++c) {
        SeededRng rng(SeededRng::derive(0x3de1, c * 13 + name.size()));
        ModelSpec s;
        s.expr = expr;
        const std::size_t dl = 1 + rng.below(3);
        s.grids = grids_for(expr_from_name(expr), {dl, dl, 1 + rng.below(2)},
                            {2 + rng.below(4), 2 + rng.below(3), 2 + rng.below(2)}, c % 2 ? std::vector<int>{1, 2}
                                                                                              : std::vector<int>{1});
        s.mode = mode;
        s.decoder = dec;
        s.hidden = 2 + rng.below(5);
        s.grid_init = 0.5;
        s.seed = c;
        Model m(s);
        PointDataset data;
        for (int i = 0; i < 4; ++i) data.add(random_coord(rng, 3), rng.normal());
        if (model_near_kink(m, data.coords)) continue;
        const PointObjective obj(data);
        std::vector<double> grad(m.trainable_count());
        loss_and_grad(m, obj, {}, grad);
        auto params = m.flat_params();
        auto val = [&] {
            m.set_flat_params(params);
            return loss_and_grad(m, obj, {}, {});
        };
        worst = std::max(worst, fd_worst(val, params, grad));
        ++done;
    }
    return summarize("gradient/model/" + name, worst, cases, tol);
}

}  // namespace

std::vector<CheckResult> gradient_suite(std::size_t cases, double tol) {
    return {check_grids(cases, tol),
            check_combiner("mul", {"mul(e1,e2,e3)", "mul(e1,e23)", "mul(e3,e12)", "mul(e12,e13,e23)"}, cases, tol),
            check_combiner("add", {"add(e12,e13,e23)", "add(e1,e2,e3)", "add(mul(e1,e2),e12)"}, cases, tol),
            check_combiner("concat", {presets::kConcat, presets::kMult, "concat(mul(e1,e2),e12)"}, cases, tol),
            check_decoder(DecoderKind::linear, cases, tol),
            check_decoder(DecoderKind::mlp, cases, tol),
            check_decoder(DecoderKind::gated, cases, tol),
            check_decoder(DecoderKind::fused, cases, tol),
            check_model("concat_mlp", presets::kConcat, DecoderKind::mlp, Mode::nonconvex, cases, tol),
            check_model("concat_gated", presets::kConcat, DecoderKind::gated, Mode::semiconvex, cases, tol),
            check_model("concat_fused", presets::kConcat, DecoderKind::fused, Mode::convex, cases, tol),
            check_model("mult_mlp", presets::kMult, DecoderKind::mlp, Mode::nonconvex, cases, tol),
            check_model("mult_linear", presets::kMult, DecoderKind::linear, Mode::nonconvex, cases, tol)};
}

std::vector<CheckResult> rank_suite(std::size_t seeds) {
    std::vector<CheckResult> out;
    for (auto comb : {Combiner2D::add, Combiner2D::concat, Combiner2D::mul}) {
        for (auto dec : {DecoderKind::linear, DecoderKind::mlp}) {
            Model2DOptions o;
            o.combiner = comb;
            o.decoder = dec;
            o.k = 3;
            o.r1 = 8;
            o.hidden = 16;
            o.interp = Interp::nearest;
            o.bias = dec != DecoderKind::linear;
            o.grid_init = 1.0;
            const std::size_t bound = rank_bound(o);
            int violations = 0, max_rank = 0;
            for (std::size_t seed = 0; seed < seeds; ++seed) {
                o.seed = seed;
                const int r = numeric_rank(assemble_matrix(Model(model_spec_2d(o)), 24, 24), kDefaultRankTolerance);
                max_rank = std::max(max_rank, r);
                violations += r > static_cast<int>(bound);
            }
            out.push_back({"rank/" + to_string(comb) + "+" + to_string(dec), violations == 0,
                           "max rank " + std::to_string(max_rank) + ", bound " + std::to_string(bound) + ", " +
                               std::to_string(violations) + " violations over " + std::to_string(seeds) + " seeds"});
        }
    }
    return out;
}

std::vector<CheckResult> interpolation_suite(std::size_t cases) {
    double unity = 0.0, node = 0.0, affine = 0.0;
    for (std::size_t c = 0; c < cases; ++c) {
        SeededRng rng(SeededRng::derive(0x1e7, c));
        const char* labels[] = {"e2", "e13", "e123"};
        const BasisLabel label = BasisLabel::parse(labels[c % 3]);
        std::vector<std::size_t> res(label.size());
        for (auto& r : res) r = 2 + rng.below(6);
        for (Interp interp : {Interp::nearest, Interp::multilinear}) {
            FeatureGrid g(label, res, 1, interp);
            const GridPoint p = project(random_coord(rng, 3), label);
            const Stencil s = g.stencil(p);
            double w = 0.0;
            for (int i = 0; i < s.count; ++i) w += s.weight[i];
            unity = std::max(unity, std::abs(w - 1.0));

            // Node reproduction: at a node coordinate every mode returns that node.
            g.init_uniform(rng, -1, 1);
            GridPoint at;
            at.dims = p.dims;
            std::size_t flat = 0;
            for (int a = 0; a < p.dims; ++a) {
                const std::size_t idx = rng.below(res[a]);
                at.x[a] = static_cast<double>(idx) / static_cast<double>(res[a] - 1);
                flat = flat * res[a] + idx;
            }
            node = std::max(node, std::abs(interpolate(g, at)[0] - g.params()[flat]));
        }
        // Multilinear interpolation reproduces affine functions of the coordinates.
        FeatureGrid g(label, res, 1, Interp::multilinear);
        std::vector<double> coef = normals(label.size() + 1, rng);
        const std::size_t n = g.node_count();
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t rem = k;
            double v = coef.back();
            for (int a = static_cast<int>(res.size()) - 1; a >= 0; --a) {
                const std::size_t idx = rem % res[a];
                rem /= res[a];
                v += coef[a] * static_cast<double>(idx) / static_cast<double>(res[a] - 1);
            }
            g.params()[k] = v;
        }
        const GridPoint p = project(random_coord(rng, 3), label);
        double expect = coef.back();
        for (int a = 0; a < p.dims; ++a) expect += coef[a] * p.x[a];
        affine = std::max(affine, std::abs(interpolate(g, p)[0] - expect));
    }
    return {{"interp/partition_of_unity", unity < 1e-12, "max deviation " + sci(unity)},
            {"interp/node_reproduction", node < 1e-12, "max deviation " + sci(node)},
            {"interp/affine_exact", affine < 1e-12, "max deviation " + sci(affine)}};
}

CheckResult convexity_check(std::size_t cases) {
    double worst = 0.0;
    for (std::size_t c = 0; c < cases; ++c) {
        SeededRng rng(SeededRng::derive(0xc0c0, c));
        ModelSpec s;
        s.grids = grids_for(expr_from_name(presets::kConcat), {2, 2, 1}, {4, 3, 2});
        s.mode = Mode::convex;
        s.decoder = DecoderKind::fused;
        s.gate_seed = 5;
        s.seed = c;
        Model a(s);
        s.seed = c + 1000;
        Model b(s);
        Model mix = a;
        const double t = rng.uniform();
        const auto pa = a.flat_params(), pb = b.flat_params();
        std::vector<double> pm(pa.size());
        for (std::size_t i = 0; i < pa.size(); ++i) pm[i] = t * pa[i] + (1 - t) * pb[i];
        mix.set_flat_params(pm);
        const Coord q = random_coord(rng, 3);
        worst = std::max(worst, std::abs(mix.predict(q) - (t * a.predict(q) + (1 - t) * b.predict(q))));
    }
    return {"convexity/fused_linear_in_params", worst < 1e-12, "max deviation " + sci(worst)};
}

std::vector<CheckResult> self_check(std::size_t gradient_cases) {
    std::vector<CheckResult> out = interpolation_suite();
    for (auto& r : gradient_suite(gradient_cases)) out.push_back(std::move(r));
    for (auto& r : rank_suite()) out.push_back(std::move(r));
    out.push_back(convexity_check());
    return out;
}

}  // namespace gaplanes
