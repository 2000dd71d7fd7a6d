#include "gaplanes/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

namespace gaplanes {

Tensor lowrank_k(const Tensor& m, std::size_t k) {
    const std::size_t r = std::min(m.rows(), m.cols());
    if (k > r) throw Error("rank " + std::to_string(k) + " exceeds min(m, n) = " + std::to_string(r));
    return reconstruct(svd(m), k);
}

Tensor box_matrix(std::size_t m, std::size_t r) {
    if (r == 0 || r > m) throw Error("box average needs 1 <= r <= " + std::to_string(m));
    Tensor d = Tensor::matrix(r, m);
    const double cell = static_cast<double>(m) / static_cast<double>(r);
    for (std::size_t c = 0; c < r; ++c) {
        const double a = static_cast<double>(c) * cell, b = static_cast<double>(c + 1) * cell;
        for (auto k = static_cast<std::size_t>(std::floor(a)); k < m && static_cast<double>(k) < b; ++k) {
            const double overlap = std::min(b, static_cast<double>(k + 1)) - std::max(a, static_cast<double>(k));
            if (overlap > 0.0) d(c, k) = overlap / cell;
        }
    }
    return d;
}

Tensor linear_up_matrix(std::size_t m, std::size_t r) {
    if (r < 2) throw Error("linear upsampling needs at least 2 low-resolution samples");
    Tensor u = Tensor::matrix(m, r);
    for (std::size_t k = 0; k < m; ++k) {
        // Cell center c sits at pixel coordinate (c + 0.5) m / r - 0.5.
        const double t = (static_cast<double>(k) + 0.5) * static_cast<double>(r) / static_cast<double>(m) - 0.5;
        const double lo = std::clamp(std::floor(t), 0.0, static_cast<double>(r - 2));
        const auto i0 = static_cast<std::size_t>(lo);
        const double f = t - lo;
        u(k, i0) += 1.0 - f;
        u(k, i0 + 1) += f;
    }
    return u;
}

Tensor node_interp_matrix(std::size_t m, std::size_t r) {
    if (r < 2 || m < 2) throw Error("node interpolation needs m, r >= 2");
    Tensor u = Tensor::matrix(m, r);
    for (std::size_t k = 0; k < m; ++k) {
        double t = static_cast<double>(k) * static_cast<double>(r - 1) / static_cast<double>(m - 1);
        const double near = std::round(t);
        if (std::abs(t - near) <= 1e-12 * static_cast<double>(r)) t = near;
        const auto i0 = std::min(static_cast<std::size_t>(std::floor(t)), r - 2);
        const double f = t - static_cast<double>(i0);
        u(k, i0) += 1.0 - f;
        u(k, i0 + 1) += f;
    }
    return u;
}

Tensor downsample(const Tensor& m, std::size_t r_low) { return downsample(m, r_low, r_low); }

Tensor downsample(const Tensor& m, std::size_t r_rows, std::size_t r_cols) {
    if (m.rank() != 2) throw Error("downsample needs a matrix");
    if (r_rows < 1 || r_cols < 1 || r_rows > m.rows() || r_cols > m.cols()) {
        throw Error("downsample target " + std::to_string(r_rows) + "x" + std::to_string(r_cols) + " does not fit " +
                    m.shape_string());
    }
    return matmul(matmul(box_matrix(m.rows(), r_rows), m), box_matrix(m.cols(), r_cols).transposed());
}

Tensor upsample(const Tensor& low, std::size_t rows, std::size_t cols) {
    if (low.rank() != 2) throw Error("upsample needs a matrix");
    return matmul(matmul(linear_up_matrix(rows, low.rows()), low), linear_up_matrix(cols, low.cols()).transposed());
}

LowRankLowRes lowrank_plus_lowres(const Tensor& m, std::size_t k, std::size_t r_low) {
    if (m.rank() != 2) throw Error("lowrank_plus_lowres needs a matrix");
    LowRankLowRes out;
    out.k = k;
    out.r_low = r_low;
    Tensor residual = m;
    Tensor smooth = Tensor::matrix(m.rows(), m.cols());
    if (r_low > 0) {
        if (r_low < 2 || r_low > std::min(m.rows(), m.cols())) {
            throw Error("r_low must lie in [2, min(m, n)], got " + std::to_string(r_low));
        }
        out.low = downsample(m, r_low);
        smooth = upsample(out.low, m.rows(), m.cols());
        residual = m - smooth;
    }
    out.lowrank = k > 0 ? lowrank_k(residual, k) : Tensor::matrix(m.rows(), m.cols());
    out.approx = smooth + out.lowrank;
    return out;
}

namespace {

double squared_error(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

double psnr_from_sse(double sse, std::size_t count, double peak) {
    if (sse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak * static_cast<double>(count) / sse));
}

// Keeps the s largest |r| entries (ties: lower flat index first).
Tensor top_entries(const Tensor& r, std::size_t s) {
    Tensor out(r.shape());
    if (s == 0) return out;
    s = std::min(s, r.size());
    std::vector<std::size_t> idx(r.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto larger = [&](std::size_t a, std::size_t b) {
        const double x = std::abs(r[a]), y = std::abs(r[b]);
        return x != y ? x > y : a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(s - 1), idx.end(), larger);
    for (std::size_t i = 0; i < s; ++i) out[idx[i]] = r[idx[i]];
    return out;
}

}  // namespace

LowRankSparse lowrank_plus_sparse(const Tensor& m, std::size_t k, std::size_t s, int iters, double min_gain_db) {
    if (m.rank() != 2) throw Error("lowrank_plus_sparse needs a matrix");
    if (iters < 1) throw Error("lowrank_plus_sparse needs at least one round");
    if (s > m.size()) throw Error("sparse count exceeds the number of entries");
    if (k > std::min(m.rows(), m.cols())) throw Error("rank exceeds min(m, n)");
    LowRankSparse out;
    out.k = k;
    out.s = s;
    out.sparse = Tensor(m.shape());
    Svd prev;
    bool have_prev = false;
    double last_psnr = -1e300;
    for (int round = 0; round < iters; ++round) {
        const Tensor target = m - out.sparse;
        if (k > 0) {
            Svd f = svd(target, {}, have_prev ? &prev : nullptr);
            out.lowrank = reconstruct(f, k);
            prev = std::move(f);
            have_prev = true;
        } else {
            out.lowrank = Tensor(m.shape());
        }
        out.sparse = top_entries(m - out.lowrank, s);
        out.approx = out.lowrank + out.sparse;
        const double sse = squared_error(out.approx, m);
        out.objective.push_back(sse);
        out.rounds = round + 1;
        const double p = psnr_from_sse(sse, m.size(), 1.0);
        if (p - last_psnr < min_gain_db) break;
        last_psnr = p;
    }
    return out;
}

std::size_t lowres_param_count(std::size_t m, std::size_t n, std::size_t k, std::size_t r_low) {
    return k * (m + n) + r_low * r_low;
}

std::size_t sparse_param_count(std::size_t m, std::size_t n, std::size_t k, std::size_t s, SparseCounting counting) {
    return k * (m + n) + s * (counting == SparseCounting::value_only ? 1 : 3);
}

std::vector<DecompRow> decomp_sweep(const Tensor& m, const DecompOptions& opt) {
    if (m.rank() != 2) throw Error("decomp_sweep needs a matrix");
    const std::size_t rows = m.rows(), cols = m.cols(), full = std::min(rows, cols);
    const double total = static_cast<double>(m.size());
    std::vector<std::size_t> r_lows = opt.r_lows;
    if (r_lows.empty()) {
        for (std::size_t r = 16; r <= full; r += 16) r_lows.push_back(r);
    }
    std::vector<DecompRow> out;

    // Low rank + low resolution: one SVD per r_low; every budget reads its tail.
    // r_low = 0 gives the plain SVD curve.
    std::vector<std::size_t> with_plain = r_lows;
    with_plain.insert(with_plain.begin(), 0);
    for (std::size_t r : with_plain) {
        if (r == 1 || r > full) continue;
        const Tensor residual = r == 0 ? m : m - upsample(downsample(m, r), rows, cols);
        const auto s = singular_values(residual);
        for (double b : opt.budgets) {
            const auto budget = static_cast<std::size_t>(std::floor(b * total));
            if (r * r > budget) continue;
            const std::size_t k = std::min(full, (budget - r * r) / (rows + cols));
            if (r > 0 && k == 0 && r * r + rows + cols <= budget) continue;
            const double tail = tail_norm(s, k);
            out.push_back(DecompRow{b, r == 0 ? "lowrank" : "lowrank_lowres", k, r,
                                    psnr_from_sse(tail * tail, m.size(), opt.peak), lowres_param_count(rows, cols, k, r)});
        }
    }

    // Low rank + sparse: a few rank fractions per budget.
    const std::size_t per = opt.counting == SparseCounting::value_only ? 1 : 3;
    for (double b : opt.budgets) {
        const auto budget = static_cast<std::size_t>(std::floor(b * total));
        const std::size_t kmax = std::min(full, budget / (rows + cols));
        std::set<std::size_t> ks;
        for (double f : opt.sparse_rank_fracs) ks.insert(static_cast<std::size_t>(std::lround(f * static_cast<double>(kmax))));
        for (std::size_t k : ks) {
            const std::size_t s = std::min(m.size(), (budget - k * (rows + cols)) / per);
            const auto res = lowrank_plus_sparse(m, k, s, opt.sparse_iters);
            out.push_back(DecompRow{b, "lowrank_sparse", k, s,
                                    psnr_from_sse(res.objective.back(), m.size(), opt.peak),
                                    sparse_param_count(rows, cols, k, s, opt.counting)});
        }
    }
    return out;
}

std::vector<DecompRow> pareto_front(const std::vector<DecompRow>& rows) {
    std::map<std::pair<double, std::string>, DecompRow> best;
    for (const auto& r : rows) {
        auto key = std::make_pair(r.budget_frac, r.method);
        auto it = best.find(key);
        if (it == best.end() || r.psnr > it->second.psnr) best[key] = r;
    }
    std::vector<DecompRow> out;
    for (auto& [key, row] : best) out.push_back(row);
    return out;
}

std::string decomp_csv(const std::vector<DecompRow>& rows) {
    std::string s = "budget_frac,method,k,r_low_or_s,psnr,params\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6g,%s,%zu,%zu,%.6f,%zu\n", r.budget_frac, r.method.c_str(), r.k,
                      r.r_low_or_s, r.psnr, r.params);
        s += buf;
    }
    return s;
}

}  // namespace gaplanes
