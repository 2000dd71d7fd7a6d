#include "gaplanes/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gaplanes {

namespace {

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw Error(std::string(what) + " needs a 2D tensor, got " + t.shape_string());
}

// Four partial sums so the loop vectorizes without reassociation flags.
double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

// Columns of `cols` (stored contiguously, n columns of length m) that are
// numerically zero get replaced by unit vectors orthogonal to the others.
void complete_basis(std::vector<double>& cols, std::size_t m, std::size_t n, const std::vector<bool>& missing) {
    std::size_t candidate = 0;
    for (std::size_t j = 0; j < n; ++j) {
        if (!missing[j]) continue;
        double* c = &cols[j * m];
        for (;; ++candidate) {
            if (candidate >= m) throw Error("svd: cannot complete orthonormal basis");
            std::fill(c, c + m, 0.0);
            c[candidate] = 1.0;
            // Two passes of Gram-Schmidt against every valid column.
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t o = 0; o < n; ++o) {
                    if (o == j || (missing[o] && o > j)) continue;
                    const double* q = &cols[o * m];
                    const double p = dot(c, q, m);
                    for (std::size_t i = 0; i < m; ++i) c[i] -= p * q[i];
                }
            }
            const double nrm = std::sqrt(dot(c, c, m));
            if (nrm > 0.5) {
                for (std::size_t i = 0; i < m; ++i) c[i] /= nrm;
                ++candidate;
                break;
            }
        }
    }
}

// Tall case (m >= n). Columns of a are rotated in place until pairwise orthogonal.
Svd jacobi_tall(const Tensor& a, const SvdOptions& opt, const Tensor* start) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    std::vector<double> w(m * n);  // column-major
    std::vector<double> v(n * n, 0.0);
    if (start) {
        // W = A V0, V = V0
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t r = 0; r < n; ++r) v[j * n + r] = (*start)(r, j);
            double* wj = &w[j * m];
            for (std::size_t r = 0; r < n; ++r) {
                const double c = (*start)(r, j);
                if (c == 0.0) continue;
                for (std::size_t i = 0; i < m; ++i) wj[i] += a(i, r) * c;
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) w[j * m + i] = a(i, j);
        for (std::size_t j = 0; j < n; ++j) v[j * n + j] = 1.0;
    }

    std::vector<double> norms(n);
    bool converged = false;
    for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
        double max_norm = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            norms[j] = dot(&w[j * m], &w[j * m], m);
            max_norm = std::max(max_norm, norms[j]);
        }
        // Columns at rounding level carry no information; rotating them never settles.
        const double eps_m = 2.220446049250313e-16 * static_cast<double>(m);
        const double negligible = max_norm * eps_m * eps_m;
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            double* wp = &w[p * m];
            double* vp = &v[p * n];
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = norms[p];
                const double beta = norms[q];
                if (alpha <= negligible || beta <= negligible) continue;
                double* wq = &w[q * m];
                const double gamma = dot(wp, wq, m);
                if (std::abs(gamma) <= opt.tolerance * std::sqrt(alpha * beta)) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = wp[i];
                    const double y = wq[i];
                    wp[i] = c * x - s * y;
                    wq[i] = s * x + c * y;
                }
                double* vq = &v[q * n];
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i];
                    const double y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
    }
    if (!converged) {
        throw Error("svd: one-sided Jacobi did not converge within " + std::to_string(opt.max_sweeps) + " sweeps");
    }

    std::vector<double> sv(n);
    for (std::size_t j = 0; j < n; ++j) sv[j] = std::sqrt(dot(&w[j * m], &w[j * m], m));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sv[x] > sv[y]; });

    const double smax = n ? sv[order[0]] : 0.0;
    const double zero_tol = smax * 1e-14 * static_cast<double>(m);
    std::vector<double> ucols(m * n, 0.0);
    std::vector<double> vcols(n * n);
    std::vector<bool> missing(n, false);
    Svd out;
    out.s.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.s[k] = sv[j];
        std::copy(&v[j * n], &v[j * n] + n, &vcols[k * n]);
        if (sv[j] > zero_tol && sv[j] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) ucols[k * m + i] = w[j * m + i] / sv[j];
        } else {
            missing[k] = true;
        }
    }
    complete_basis(ucols, m, n, missing);

    out.u = Tensor::matrix(m, n);
    out.v = Tensor::matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < m; ++i) out.u(i, k) = ucols[k * m + i];
        for (std::size_t i = 0; i < n; ++i) out.v(i, k) = vcols[k * n + i];
    }
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.cols() != b.rows()) {
        throw Error("matmul shape mismatch: " + a.shape_string() + " x " + b.shape_string());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c = Tensor::matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = &c.vec()[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            if (aip == 0.0) continue;
            const double* bp = &b.vec()[p * n];
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

Svd svd(const Tensor& m, SvdOptions options, const Svd* warm) {
    require_matrix(m, "svd");
    if (!m.all_finite()) throw Error("svd: non-finite entries");
    const bool tall = m.rows() >= m.cols();
    const Tensor* start = nullptr;
    if (warm) {
        start = tall ? &warm->v : &warm->u;
        const std::size_t r = std::min(m.rows(), m.cols());
        if (start->rank() != 2 || start->rows() != r || start->cols() != r) {
            throw Error("svd: warm start has the wrong shape");
        }
    }
    if (tall) return jacobi_tall(m, options, start);
    // Wide input: factor the transpose, whose right vectors are our left ones.
    Svd t = jacobi_tall(m.transposed(), options, start);
    std::swap(t.u, t.v);
    return t;
}

std::vector<double> singular_values(const Tensor& m, SvdOptions options) { return svd(m, options).s; }

Tensor reconstruct(const Svd& f, std::size_t k) {
    const std::size_t m = f.u.rows(), n = f.v.rows();
    k = std::min(k, f.s.size());
    Tensor out = Tensor::matrix(m, n);
    for (std::size_t r = 0; r < k; ++r) {
        const double s = f.s[r];
        if (s == 0.0) continue;
        for (std::size_t i = 0; i < m; ++i) {
            const double us = f.u(i, r) * s;
            double* row = &out.vec()[i * n];
            for (std::size_t j = 0; j < n; ++j) row[j] += us * f.v(j, r);
        }
    }
    return out;
}

int numeric_rank(const Tensor& m, double rel_tol) {
    const auto s = singular_values(m);
    if (s.empty() || s[0] == 0.0) return 0;
    const double cut = rel_tol * s[0];
    return static_cast<int>(std::count_if(s.begin(), s.end(), [&](double x) { return x > cut; }));
}

double tail_norm(const std::vector<double>& s, std::size_t k) {
    double acc = 0.0;
    for (std::size_t i = k; i < s.size(); ++i) acc += s[i] * s[i];
    return std::sqrt(acc);
}

double frobenius_norm(const Tensor& m) {
    double acc = 0.0;
    for (double v : m.vec()) acc += v * v;
    return std::sqrt(acc);
}

double mse(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw Error("shape mismatch " + pred.shape_string() + " vs " + target.shape_string());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

double psnr(const Tensor& pred, const Tensor& target, double peak) {
    if (peak <= 0.0) throw Error("psnr: peak must be positive");
    const double e = mse(pred, target);
    if (e == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / e));
}

}  // namespace gaplanes
