#include <gtest/gtest.h>

#include "gaplanes/expr.hpp"
#include "test_util.hpp"

using namespace gaplanes;

namespace {

GridSet make_grids(const std::vector<std::pair<std::string, std::size_t>>& labels, std::size_t res,
                   std::uint64_t seed, Interp interp = Interp::multilinear) {
    GridSet set;
    std::uint64_t k = 0;
    for (const auto& [name, fd] : labels) {
        const auto label = BasisLabel::parse(name);
        FeatureGrid g(label, std::vector<std::size_t>(label.size(), res), fd, interp);
        SeededRng rng(SeededRng::derive(seed, ++k));
        g.init_uniform(rng, -1.0, 1.0);
        set.add(std::move(g));
    }
    return set;
}

std::vector<double> leaf(const GridSet& s, const std::string& name, const Coord& q) {
    std::vector<double> out;
    for (auto i : s.copies_of(BasisLabel::parse(name))) {
        const auto f = interpolate(s[i], project(q, s[i].label()));
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

std::vector<double> hadamard(std::vector<double> a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
    return a;
}

void append(std::vector<double>& a, const std::vector<double>& b) { a.insert(a.end(), b.begin(), b.end()); }

const std::vector<std::pair<std::string, std::size_t>> kAllSeven = {
    {"e1", 3}, {"e2", 3}, {"e3", 3}, {"e12", 3}, {"e13", 3}, {"e23", 3}, {"e123", 2}};

}  // namespace

TEST(GaExpr, ParseAndPrintRoundTrip) {
    for (const char* s : {presets::kConcat, presets::kMult, presets::kTriplaneAdd, presets::kTriplaneMul,
                          "concat(mul(e1,e2),e12)"}) {
        EXPECT_EQ(GaExpr::parse(s).to_string(), s);
    }
    EXPECT_EQ(GaExpr::parse(" cat( e1 , e2 ) ").to_string(), "concat(e1,e2)");
    EXPECT_THROW(GaExpr::parse("mul(e1,"), Error);
    EXPECT_THROW(GaExpr::parse("pow(e1)"), Error);
    EXPECT_THROW(GaExpr::parse("e1 e2"), Error);
    EXPECT_EQ(expr_from_name("MULT").to_string(), presets::kMult);
}

TEST(GaExpr, ValidationRules) {
    const GridSet g3 = make_grids(kAllSeven, 4, 1);
    EXPECT_EQ(validate(GaExpr::parse(presets::kConcat), g3), 3u * 6 + 2);
    // mul children share an axis: rejected unless relaxed
    const GridSet planes = make_grids({{"e12", 4}, {"e13", 4}, {"e23", 4}}, 4, 2);
    EXPECT_THROW(validate(GaExpr::parse(presets::kTriplaneMul), planes), Error);
    EXPECT_EQ(validate(GaExpr::parse(presets::kTriplaneMul), planes, {3, true}), 4u);
    // mul must produce the full trivector
    EXPECT_THROW(validate(GaExpr::parse("mul(e1,e2)"), g3), Error);
    // feature dimension mismatch at mul
    EXPECT_THROW(validate(GaExpr::parse("mul(e1,e23)"), make_grids({{"e1", 2}, {"e23", 3}}, 4, 3)), Error);
    // missing grid and out-of-model axis
    EXPECT_THROW(validate(GaExpr::parse("e13"), make_grids({{"e1", 2}}, 4, 4)), Error);
    EXPECT_THROW(validate(GaExpr::parse("e3"), make_grids({{"e3", 2}}, 4, 4), {2, false}), Error);
}

TEST(GridSet, MultiresolutionRules) {
    GridSet s;
    FeatureGrid a(BasisLabel::parse("e1"), {8}, 2), b(BasisLabel::parse("e1"), {16}, 2), c(BasisLabel::parse("e1"), {4}, 3);
    a.set_scale(2);
    b.set_scale(4);
    s.add(b);
    s.add(a);
    EXPECT_THROW(s.add(c), Error);  // feature dims differ
    FeatureGrid dup = a;
    EXPECT_THROW(s.add(dup), Error);  // same id
    const auto copies = s.copies_of(BasisLabel::parse("e1"));
    ASSERT_EQ(copies.size(), 2u);
    EXPECT_EQ(s[copies[0]].resolution()[0], 8u);
    EXPECT_EQ(s.total_params(), 48u);
    EXPECT_EQ(s.id(copies[1]), "e1@4");
}

TEST(EvalExpr, ZeroGridsGiveZero) {
    GridSet s = make_grids(kAllSeven, 4, 5);
    for (auto& g : s) g.params().fill(0.0);
    for (double v : eval_expr(GaExpr::parse(presets::kConcat), s, Coord(0.3, 0.6, 0.9))) EXPECT_EQ(v, 0.0);
}

TEST(EvalExpr, MulOfLinesAtNodesIsHadamard) {
    GridSet s = make_grids({{"e1", 3}, {"e2", 3}}, 5, 6);
    const std::size_t i = 3, j = 1;
    const auto f = eval_expr(GaExpr::parse("mul(e1,e2)"), s, Coord(i / 4.0, j / 4.0), {2, false});
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(f[c], s[0].params()[i * 3 + c] * s[1].params()[j * 3 + c]);
}

TEST(EvalExpr, ConcatPresetMatchesHandComposition) {
    const GridSet s = make_grids(kAllSeven, 5, 7);
    SeededRng rng(8);
    for (int t = 0; t < 20; ++t) {
        const Coord q(rng.uniform(), rng.uniform(), rng.uniform());
        std::vector<double> ref;
        for (const char* n : {"e1", "e2", "e3", "e12", "e13", "e23", "e123"}) append(ref, leaf(s, n, q));
        const auto f = eval_expr(GaExpr::parse(presets::kConcat), s, q);
        ASSERT_EQ(f.size(), ref.size());
        for (std::size_t c = 0; c < f.size(); ++c) EXPECT_NEAR(f[c], ref[c], 1e-12);
    }
}

TEST(EvalExpr, MultPresetMatchesHandComposition) {
    const GridSet s = make_grids({{"e1", 3}, {"e2", 3}, {"e3", 3}, {"e12", 3}, {"e13", 3}, {"e23", 3}, {"e123", 2}}, 4, 9);
    SeededRng rng(10);
    for (int t = 0; t < 20; ++t) {
        const Coord q(rng.uniform(), rng.uniform(), rng.uniform());
        std::vector<double> ref = hadamard(hadamard(leaf(s, "e1", q), leaf(s, "e2", q)), leaf(s, "e3", q));
        append(ref, hadamard(leaf(s, "e1", q), leaf(s, "e23", q)));
        append(ref, hadamard(leaf(s, "e2", q), leaf(s, "e13", q)));
        append(ref, hadamard(leaf(s, "e3", q), leaf(s, "e12", q)));
        append(ref, leaf(s, "e123", q));
        const auto f = eval_expr(GaExpr::parse(presets::kMult), s, q);
        ASSERT_EQ(f.size(), ref.size());
        for (std::size_t c = 0; c < f.size(); ++c) EXPECT_NEAR(f[c], ref[c], 1e-12);
    }
}

TEST(EvalExpr, MultiresolutionCopiesConcatenateAscending) {
    GridSet s;
    for (std::size_t r : {16u, 4u, 8u}) {
        FeatureGrid g(BasisLabel::parse("e1"), {r}, 2);
        g.set_scale(static_cast<int>(r / 4));
        SeededRng rng(r);
        g.init_uniform(rng, -1, 1);
        s.add(std::move(g));
    }
    const Coord q(0.37, 0.5);
    const auto f = eval_expr(GaExpr::parse("e1"), s, q, {2, false});
    ASSERT_EQ(f.size(), 6u);
    std::vector<double> ref;
    for (std::size_t idx : {1u, 2u, 0u}) append(ref, interpolate(s[idx], project(q, s[idx].label())));
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(f[c], ref[c]);
}

TEST(EvalExpr, PermutingConcatChildrenPermutesSlices) {
    const GridSet s = make_grids({{"e1", 2}, {"e2", 3}, {"e12", 1}}, 4, 11);
    const Coord q(0.2, 0.9);
    const auto a = eval_expr(GaExpr::parse("concat(e1,e2,e12)"), s, q, {2, false});
    const auto b = eval_expr(GaExpr::parse("concat(e12,e1,e2)"), s, q, {2, false});
    EXPECT_EQ(b[0], a[5]);
    EXPECT_EQ(b[1], a[0]);
    EXPECT_EQ(b[2], a[1]);
    EXPECT_EQ(b[5], a[4]);
}

TEST(EvalExprGrad, AddPassesUpstreamToBothLeaves) {
    const GridSet s = make_grids({{"e1", 2}, {"e2", 2}}, 3, 12);
    const std::vector<double> up{0.5, -1.0};
    const auto g = eval_expr_grad(GaExpr::parse("add(e1,e2)"), s, Coord(0.5, 1.0), up, {2, false});
    EXPECT_EQ(g[0][1 * 2 + 0], 0.5);
    EXPECT_EQ(g[0][1 * 2 + 1], -1.0);
    EXPECT_EQ(g[1][2 * 2 + 0], 0.5);
    EXPECT_EQ(g[1][2 * 2 + 1], -1.0);
}

TEST(EvalExprGrad, MulWithOnesSiblingPassesUpstream) {
    GridSet s = make_grids({{"e1", 2}, {"e2", 2}}, 3, 13);
    s[1].params().fill(1.0);
    const std::vector<double> up{0.25, 2.0};
    const auto g = eval_expr_grad(GaExpr::parse("mul(e1,e2)"), s, Coord(0.0, 0.3), up, {2, false});
    EXPECT_EQ(g[0][0], 0.25);
    EXPECT_EQ(g[0][1], 2.0);
}

TEST(EvalExpr, JointlyLinearWithoutMul) {
    const GridSet s1 = make_grids(kAllSeven, 4, 14), s2 = make_grids(kAllSeven, 4, 15);
    GridSet mix = s1;
    for (std::size_t g = 0; g < mix.size(); ++g)
        for (std::size_t i = 0; i < mix[g].param_count(); ++i)
            mix[g].params()[i] = 0.3 * s1[g].params()[i] + 0.7 * s2[g].params()[i];
    const Coord q(0.11, 0.52, 0.93);
    const auto e = GaExpr::parse(presets::kConcat);
    const auto a = eval_expr(e, s1, q), b = eval_expr(e, s2, q), m = eval_expr(e, mix, q);
    for (std::size_t c = 0; c < m.size(); ++c) EXPECT_NEAR(m[c], 0.3 * a[c] + 0.7 * b[c], 1e-12);
}

TEST(EvalExpr, MultilinearInEachGrid) {
    const GridSet base = make_grids(kAllSeven, 4, 16), other = make_grids(kAllSeven, 4, 17);
    const auto e = GaExpr::parse(presets::kMult);
    const Coord q(0.4, 0.15, 0.8);
    for (std::size_t g = 0; g < base.size(); ++g) {
        GridSet a = base, b = base, mix = base;
        b[g] = other[g];
        for (std::size_t i = 0; i < mix[g].param_count(); ++i)
            mix[g].params()[i] = -2.0 * a[g].params()[i] + 3.0 * b[g].params()[i];
        const auto fa = eval_expr(e, a, q), fb = eval_expr(e, b, q), fm = eval_expr(e, mix, q);
        for (std::size_t c = 0; c < fm.size(); ++c) EXPECT_NEAR(fm[c], -2.0 * fa[c] + 3.0 * fb[c], 1e-12);
    }
}

TEST(EvalExprGrad, MatchesFiniteDifferences) {
    // Loss <w, f(q)> for a fixed random w, over the Eq. 5 and Eq. 4 presets.
    SeededRng rng(18);
    for (int trial = 0; trial < 100; ++trial) {
        const bool mult = trial % 2 == 0;
        GridSet s = make_grids(kAllSeven, 3, 200 + static_cast<std::uint64_t>(trial));
        const auto e = GaExpr::parse(mult ? presets::kMult : presets::kConcat);
        const Coord q(rng.uniform(), rng.uniform(), rng.uniform());
        const std::size_t dim = validate(e, s);
        std::vector<double> w(dim);
        for (auto& x : w) x = rng.normal();
        const auto grads = eval_expr_grad(e, s, q, w);
        auto loss = [&] {
            const auto f = eval_expr(e, s, q);
            double v = 0.0;
            for (std::size_t c = 0; c < dim; ++c) v += w[c] * f[c];
            return v;
        };
        // Every parameter in the stencils plus a few random ones (whose gradient should vanish).
        for (std::size_t g = 0; g < s.size(); ++g) {
            std::vector<std::size_t> check;
            for (std::size_t i = 0; i < s[g].param_count(); ++i)
                if (grads[g][i] != 0.0) check.push_back(i);
            for (int k = 0; k < 2; ++k) check.push_back(rng.below(s[g].param_count()));
            for (auto i : check) {
                const double keep = s[g].params()[i];
                s[g].params()[i] = keep + 1e-6;
                const double lp = loss();
                s[g].params()[i] = keep - 1e-6;
                const double lm = loss();
                s[g].params()[i] = keep;
                const double fd = (lp - lm) / 2e-6;
                if (std::abs(fd) < 1e-9 && std::abs(grads[g][i]) < 1e-9) continue;
                EXPECT_LT(testutil::rel_err(fd, grads[g][i]), 1e-5) << "trial " << trial << " grid " << g;
            }
        }
    }
}
