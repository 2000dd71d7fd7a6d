#include "gaplanes/model.hpp"

#include <algorithm>
#include <cmath>

namespace gaplanes {

std::string to_string(Mode m) {
    switch (m) {
        case Mode::nonconvex: return "nonconvex";
        case Mode::semiconvex: return "semiconvex";
        case Mode::convex: return "convex";
    }
    return "?";
}

Mode parse_mode(const std::string& s) {
    if (s == "nonconvex") return Mode::nonconvex;
    if (s == "semiconvex") return Mode::semiconvex;
    if (s == "convex") return Mode::convex;
    throw Error("unknown mode '" + s + "' (expected nonconvex, semiconvex or convex)");
}

DecoderKind default_decoder(Mode m) {
    switch (m) {
        case Mode::convex: return DecoderKind::fused;
        case Mode::semiconvex: return DecoderKind::gated;
        default: return DecoderKind::mlp;
    }
}

std::vector<GridSpec> grids_for(const GaExpr& expr, std::array<std::size_t, 3> d, std::array<std::size_t, 3> r,
                                const std::vector<int>& scales) {
    if (scales.empty()) throw Error("at least one resolution scale is needed");
    std::vector<GridSpec> out;
    for (const auto& label : expr.labels()) {
        const std::size_t kind = label.size() - 1;
        const std::vector<int> use = kind == 2 ? std::vector<int>{1} : scales;
        for (int s : use) {
            if (s < 1) throw Error("resolution scales must be positive");
            GridSpec g;
            g.label = label.name();
            g.resolution.assign(label.size(), r[kind] * static_cast<std::size_t>(s));
            g.feature_dim = d[kind];
            g.scale = s;
            out.push_back(std::move(g));
        }
    }
    return out;
}

void check_model_spec(const ModelSpec& spec) {
    if (spec.dims != 2 && spec.dims != 3) throw Error("dims must be 2 or 3, got " + std::to_string(spec.dims));
    const GaExpr expr = expr_from_name(spec.expr);
    const bool has_mul = expr.contains_mul();
    switch (spec.mode) {
        case Mode::convex:
            if (spec.decoder != DecoderKind::fused) throw Error("convex mode needs the fused decoder");
            if (has_mul) throw Error("convex mode cannot use an expression with mul: " + expr.to_string());
            break;
        case Mode::semiconvex:
            if (spec.decoder != DecoderKind::gated) throw Error("semiconvex mode needs the gated decoder");
            if (has_mul) throw Error("semiconvex mode cannot use an expression with mul: " + expr.to_string());
            break;
        case Mode::nonconvex:
            if (spec.decoder == DecoderKind::fused) throw Error("the fused decoder is only valid in convex mode");
            break;
    }
    if ((spec.decoder == DecoderKind::mlp || spec.decoder == DecoderKind::gated) && spec.hidden == 0) {
        throw Error("hidden dimension must be at least 1");
    }
    if (spec.grids.empty()) throw Error("model has no grids");
    if (!(spec.grid_init >= 0.0)) throw Error("grid_init must be nonnegative");
}

namespace {

GridSet build_grids(const ModelSpec& spec, std::uint64_t seed) {
    GridSet set;
    std::size_t index = 0;
    for (const auto& g : spec.grids) {
        FeatureGrid grid(BasisLabel::parse(g.label), g.resolution, g.feature_dim, spec.interp);
        grid.set_scale(g.scale);
        SeededRng rng(SeededRng::derive(seed, ++index));
        grid.init_uniform(rng, -spec.grid_init, spec.grid_init);
        set.add(std::move(grid));
    }
    return set;
}

constexpr std::uint64_t kDecoderStream = 0x1000;
constexpr std::uint64_t kGateStream = 0x9a7e;

Tensor normal_matrix(std::size_t rows, std::size_t cols, double sd, SeededRng& rng) {
    Tensor t = Tensor::matrix(rows, cols);
    for (auto& v : t.vec()) v = rng.normal(0.0, sd);
    return t;
}

}  // namespace

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
    check_model_spec(spec_);
    expr_ = expr_from_name(spec_.expr);
    grids_ = build_grids(spec_, spec_.seed);
    compiled_ = CompiledExpr(expr_, grids_, ExprCheck{spec_.dims, spec_.relax_mul});

    const std::size_t in = compiled_.output_dim();
    const std::size_t h = spec_.hidden;
    const std::uint64_t gate_seed = spec_.gate_seed.value_or(SeededRng::derive(spec_.seed, kGateStream));
    SeededRng rng(SeededRng::derive(spec_.seed, kDecoderStream));
    SeededRng gate_rng(SeededRng::derive(gate_seed, kDecoderStream));
    const double sd_hidden = std::sqrt(2.0 / static_cast<double>(in));

    switch (spec_.decoder) {
        case DecoderKind::linear: {
            LinearDecoder d;
            d.alpha.resize(in);
            for (auto& a : d.alpha) a = rng.normal(0.0, std::sqrt(1.0 / static_cast<double>(in)));
            decoder_ = std::move(d);
            break;
        }
        case DecoderKind::mlp: {
            MlpDecoder d;
            d.w = normal_matrix(h, in, sd_hidden, rng);
            d.alpha.resize(h);
            for (auto& a : d.alpha) a = rng.normal(0.0, std::sqrt(1.0 / static_cast<double>(h)));
            decoder_ = std::move(d);
            break;
        }
        case DecoderKind::gated: {
            GatedMlpDecoder d;
            d.w = normal_matrix(h, in, sd_hidden, rng);
            d.w_frozen = normal_matrix(h, in, sd_hidden, gate_rng);
            decoder_ = std::move(d);
            break;
        }
        case DecoderKind::fused: {
            FusedDecoder d;
            d.gates = build_grids(spec_, gate_seed);
            decoder_ = std::move(d);
            break;
        }
    }
    rebuild_layout();
}

const GridSet& Model::gate_grids() const {
    static const GridSet empty;
    if (const auto* f = std::get_if<FusedDecoder>(&decoder_)) return f->gates;
    return empty;
}

namespace {

double& bias_of(Decoder& d) {
    return std::visit([](auto& x) -> double& { return x.bias; }, d);
}

}  // namespace

std::vector<ParamBlock> Model::blocks() {
    std::vector<ParamBlock> out;
    std::size_t off = 0;
    auto push = [&](std::string name, Group g, std::span<double> v) {
        out.push_back(ParamBlock{std::move(name), g, v, off});
        off += v.size();
    };
    for (std::size_t i = 0; i < grids_.size(); ++i) push(grids_.id(i), Group::grids, grids_[i].params().data());
    std::visit(
        [&](auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, LinearDecoder>) {
                push("alpha", Group::decoder, d.alpha);
            } else if constexpr (std::is_same_v<T, MlpDecoder>) {
                push("W", Group::decoder, d.w.data());
                push("alpha", Group::decoder, d.alpha);
            } else if constexpr (std::is_same_v<T, GatedMlpDecoder>) {
                push("W", Group::decoder, d.w.data());
            }
        },
        decoder_);
    if (spec_.bias) push("bias", Group::decoder, std::span<double>(&bias_of(decoder_), 1));
    return out;
}

void Model::rebuild_layout() {
    const auto b = blocks();
    grid_offset_.clear();
    for (std::size_t i = 0; i < grids_.size(); ++i) grid_offset_.push_back(b[i].offset);
    decoder_offset_ = b.size() > grids_.size() ? b[grids_.size()].offset : 0;
    trainable_ = b.empty() ? 0 : b.back().offset + b.back().values.size();
}

std::size_t Model::param_count(bool include_frozen) const {
    std::size_t n = trainable_;
    if (include_frozen) {
        if (const auto* g = std::get_if<GatedMlpDecoder>(&decoder_)) n += g->w_frozen.size();
        if (const auto* f = std::get_if<FusedDecoder>(&decoder_)) n += f->gates.total_params();
    }
    return n;
}

std::vector<double> Model::flat_params() const {
    std::vector<double> out;
    out.reserve(trainable_);
    for (const auto& b : const_cast<Model*>(this)->blocks()) out.insert(out.end(), b.values.begin(), b.values.end());
    return out;
}

void Model::set_flat_params(std::span<const double> values) {
    if (values.size() != trainable_) {
        throw Error("expected " + std::to_string(trainable_) + " parameters, got " + std::to_string(values.size()));
    }
    for (auto& b : blocks()) std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(b.offset), b.values.size(), b.values.begin());
}

void Model::zero_trainable() {
    for (auto& b : blocks()) std::fill(b.values.begin(), b.values.end(), 0.0);
}

Model::Cache Model::make_cache() const {
    Cache c;
    c.ws = compiled_.make_workspace();
    c.hidden.assign(spec_.decoder == DecoderKind::fused ? feature_dim() : spec_.hidden, 0.0);
    c.df.assign(feature_dim(), 0.0);
    c.grid_grads.resize(grids_.size());
    return c;
}

double Model::predict(const Coord& q) const {
    Cache c = make_cache();
    return forward(q, c);
}

double Model::forward(const Coord& q, Cache& c) const {
    if (q.dims != spec_.dims) {
        throw Error("a " + std::to_string(spec_.dims) + "D model got a " + std::to_string(q.dims) + "D coordinate");
    }
    const auto f = compiled_.forward(grids_, q, c.ws);
    return std::visit(
        [&](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, LinearDecoder>) {
                return decode_linear(d, f);
            } else if constexpr (std::is_same_v<T, MlpDecoder>) {
                return decode_mlp(d, f, c.hidden);
            } else if constexpr (std::is_same_v<T, GatedMlpDecoder>) {
                return decode_gated(d, f, c.hidden);
            } else {
                const auto fbar = compiled_.forward_shared(d.gates, c.ws, c.gate_value);
                double s = d.bias;
                for (std::size_t j = 0; j < f.size(); ++j) {
                    const bool open = fbar[j] >= 0.0;
                    c.hidden[j] = open ? 1.0 : 0.0;
                    if (open) s += f[j];
                }
                return s;
            }
        },
        decoder_);
}

void Model::backward(Cache& c, double upstream, std::span<double> grad) const {
    if (grad.size() != trainable_) throw Error("gradient buffer has the wrong length");
    const std::size_t in = feature_dim();
    const auto f = std::span<const double>(c.ws.value).subspan(c.ws.value.size() - in, in);
    std::span<double> dec = grad.subspan(decoder_offset_);
    std::visit(
        [&](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, LinearDecoder>) {
                for (std::size_t i = 0; i < in; ++i) {
                    dec[i] += upstream * f[i];
                    c.df[i] = upstream * d.alpha[i];
                }
            } else if constexpr (std::is_same_v<T, MlpDecoder>) {
                const std::size_t h = d.hidden();
                mlp_backward(d, f, c.hidden, upstream, dec.subspan(0, h * in), dec.subspan(h * in, h), c.df);
            } else if constexpr (std::is_same_v<T, GatedMlpDecoder>) {
                gated_backward(d, f, c.hidden, upstream, dec.subspan(0, d.hidden() * in), c.df);
            } else {
                for (std::size_t j = 0; j < in; ++j) c.df[j] = upstream * c.hidden[j];
            }
        },
        decoder_);
    if (spec_.bias) grad[trainable_ - 1] += upstream;
    for (std::size_t g = 0; g < grids_.size(); ++g) {
        c.grid_grads[g] = grad.subspan(grid_offset_[g], grids_[g].param_count());
    }
    compiled_.backward(grids_, c.df, c.ws, c.grid_grads);
}

Tensor assemble_matrix(const Model& m, std::size_t rows, std::size_t cols) {
    if (m.dims() != 2) throw Error("assemble_matrix needs a 2D model");
    if (rows < 2 || cols < 2) throw Error("assembled matrix needs at least 2 rows and 2 columns");
    Tensor out = Tensor::matrix(rows, cols);
    auto cache = m.make_cache();
    for (std::size_t k = 0; k < rows; ++k) {
        for (std::size_t l = 0; l < cols; ++l) {
            const Coord q(static_cast<double>(k) / static_cast<double>(rows - 1),
                          static_cast<double>(l) / static_cast<double>(cols - 1));
            out(k, l) = m.forward(q, cache);
        }
    }
    return out;
}

}  // namespace gaplanes
