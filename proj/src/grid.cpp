#include "gaplanes/grid.hpp"

#include <algorithm>
#include <cmath>

namespace gaplanes {

std::string to_string(Interp interp) { return interp == Interp::nearest ? "nearest" : "multilinear"; }

Interp parse_interp(const std::string& s) {
    if (s == "nearest") return Interp::nearest;
    if (s == "multilinear" || s == "linear" || s == "bilinear" || s == "trilinear") return Interp::multilinear;
    throw Error("unknown interpolation mode '" + s + "' (expected nearest or multilinear)");
}

BasisLabel::BasisLabel(std::vector<int> axes) : axes_(std::move(axes)) {
    std::sort(axes_.begin(), axes_.end());
    axes_.erase(std::unique(axes_.begin(), axes_.end()), axes_.end());
    if (axes_.empty() || axes_.size() > 3) throw Error("basis label needs 1 to 3 axes");
    for (int a : axes_) {
        if (a < 1 || a > 3) throw Error("basis label axes must be in {1,2,3}");
    }
}

BasisLabel BasisLabel::parse(const std::string& name) {
    if (name.size() < 2 || name[0] != 'e') throw Error("bad basis element '" + name + "'");
    std::vector<int> axes;
    for (std::size_t i = 1; i < name.size(); ++i) {
        if (name[i] < '1' || name[i] > '3') throw Error("bad basis element '" + name + "'");
        axes.push_back(name[i] - '0');
    }
    const std::size_t n = axes.size();
    BasisLabel l(std::move(axes));
    if (l.size() != n) throw Error("repeated axis in basis element '" + name + "'");
    return l;
}

std::string BasisLabel::name() const {
    std::string s = "e";
    for (int a : axes_) s += static_cast<char>('0' + a);
    return s;
}

bool BasisLabel::disjoint(const BasisLabel& other) const {
    for (int a : axes_)
        if (std::find(other.axes_.begin(), other.axes_.end(), a) != other.axes_.end()) return false;
    return true;
}

namespace {

double clamp_unit(double v, bool& flagged) {
    if (v < 0.0) {
        flagged = true;
        return 0.0;
    }
    if (v > 1.0) {
        flagged = true;
        return 1.0;
    }
    if (std::isnan(v)) throw Error("NaN coordinate");
    return v;
}

}  // namespace

Coord::Coord(double a, double b) : dims(2) {
    x = {clamp_unit(a, clamped), clamp_unit(b, clamped), 0.0};
}

Coord::Coord(double a, double b, double c) : dims(3) {
    x = {clamp_unit(a, clamped), clamp_unit(b, clamped), clamp_unit(c, clamped)};
}

Coord Coord::from_span(std::span<const double> v) {
    if (v.size() == 2) return Coord(v[0], v[1]);
    if (v.size() == 3) return Coord(v[0], v[1], v[2]);
    throw Error("coordinates must have 2 or 3 components");
}

GridPoint project(const Coord& q, const BasisLabel& label) {
    GridPoint p;
    for (int a : label.axes()) {
        if (a > q.dims) throw Error("basis element " + label.name() + " exceeds a " + std::to_string(q.dims) + "D coordinate");
        p.x[p.dims++] = q.x[a - 1];
    }
    return p;
}

FeatureGrid::FeatureGrid(BasisLabel label, std::vector<std::size_t> resolution, std::size_t feature_dim, Interp interp)
    : label_(std::move(label)), resolution_(std::move(resolution)), feature_dim_(feature_dim), interp_(interp) {
    if (resolution_.size() != label_.size()) {
        throw Error("grid " + label_.name() + " needs " + std::to_string(label_.size()) + " resolutions");
    }
    if (feature_dim_ == 0) throw Error("feature_dim must be positive");
    std::vector<std::size_t> shape = resolution_;
    shape.push_back(feature_dim_);
    params_ = Tensor(shape);
    set_interp(interp);
}

void FeatureGrid::set_interp(Interp interp) {
    if (interp == Interp::multilinear) {
        for (auto r : resolution_) {
            if (r < 2) throw Error("multilinear grid " + label_.name() + " needs every resolution >= 2");
        }
    }
    interp_ = interp;
}

Stencil FeatureGrid::stencil(const GridPoint& p) const {
    const int d = static_cast<int>(resolution_.size());
    if (p.dims != d) throw Error("point dimension does not match grid " + label_.name());

    std::array<std::size_t, 3> lo{};
    std::array<double, 3> frac{};
    for (int a = 0; a < d; ++a) {
        const double rmax = static_cast<double>(resolution_[a] - 1);
        double t = std::clamp(p.x[a], 0.0, 1.0) * rmax;
        // Snap rounding noise so j/(r-1) lands exactly on node j.
        const double nearest = std::round(t);
        if (std::abs(t - nearest) <= 1e-12 * std::max(1.0, rmax)) t = nearest;
        if (interp_ == Interp::nearest) {
            // floor(t + 0.5): ties go to the larger index.
            lo[a] = std::min(static_cast<std::size_t>(std::floor(t + 0.5)), resolution_[a] - 1);
        } else {
            const std::size_t i0 = std::min(static_cast<std::size_t>(std::floor(t)), resolution_[a] - 2);
            lo[a] = i0;
            frac[a] = t - static_cast<double>(i0);
        }
    }

    Stencil s;
    if (interp_ == Interp::nearest) {
        std::size_t flat = 0;
        for (int a = 0; a < d; ++a) flat = flat * resolution_[a] + lo[a];
        s.count = 1;
        s.node[0] = flat;
        s.weight[0] = 1.0;
        return s;
    }
    s.count = 1 << d;
    for (int corner = 0; corner < s.count; ++corner) {
        std::size_t flat = 0;
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            const int bit = (corner >> (d - 1 - a)) & 1;
            flat = flat * resolution_[a] + lo[a] + static_cast<std::size_t>(bit);
            w *= bit ? frac[a] : 1.0 - frac[a];
        }
        s.node[corner] = flat;
        s.weight[corner] = w;
    }
    return s;
}

void FeatureGrid::gather(const Stencil& s, std::span<double> out) const {
    const std::size_t fd = feature_dim_;
    const double* base = params_.data().data();
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(fd), 0.0);
    for (int k = 0; k < s.count; ++k) {
        const double w = s.weight[k];
        const double* node = base + s.node[k] * fd;
        for (std::size_t c = 0; c < fd; ++c) out[c] += w * node[c];
    }
}

void FeatureGrid::scatter(const Stencil& s, std::span<const double> upstream, std::span<double> grad) const {
    const std::size_t fd = feature_dim_;
    for (int k = 0; k < s.count; ++k) {
        const double w = s.weight[k];
        if (w == 0.0) continue;
        double* node = grad.data() + s.node[k] * fd;
        for (std::size_t c = 0; c < fd; ++c) node[c] += w * upstream[c];
    }
}

void FeatureGrid::init_uniform(SeededRng& rng, double lo, double hi) {
    for (auto& v : params_.vec()) v = rng.uniform(lo, hi);
}

std::vector<double> interpolate(const FeatureGrid& grid, const GridPoint& p) {
    std::vector<double> out(grid.feature_dim());
    grid.gather(grid.stencil(p), out);
    return out;
}

void interpolate_grad(const FeatureGrid& grid, const GridPoint& p, std::span<const double> upstream,
                      std::span<double> grad) {
    if (upstream.size() != grid.feature_dim()) throw Error("upstream gradient length mismatch");
    if (grad.size() != grid.param_count()) throw Error("gradient buffer length mismatch");
    grid.scatter(grid.stencil(p), upstream, grad);
}

}  // namespace gaplanes
