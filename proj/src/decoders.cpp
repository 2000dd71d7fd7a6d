#include "gaplanes/decoders.hpp"

#include <algorithm>

namespace gaplanes {

std::string to_string(DecoderKind k) {
    switch (k) {
        case DecoderKind::linear: return "linear";
        case DecoderKind::mlp: return "mlp";
        case DecoderKind::gated: return "gated";
        case DecoderKind::fused: return "fused";
    }
    return "?";
}

DecoderKind parse_decoder(const std::string& s) {
    if (s == "linear") return DecoderKind::linear;
    if (s == "mlp") return DecoderKind::mlp;
    if (s == "gated") return DecoderKind::gated;
    if (s == "fused" || s == "convex") return DecoderKind::fused;
    throw Error("unknown decoder '" + s + "' (expected linear, mlp, gated or fused)");
}

double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
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

namespace {

void check_in(std::size_t expected, std::size_t got, const char* what) {
    if (expected != got) {
        throw Error(std::string(what) + " expects a feature of length " + std::to_string(expected) + ", got " +
                    std::to_string(got));
    }
}

std::span<const double> row(const Tensor& w, std::size_t i) {
    return w.data().subspan(i * w.cols(), w.cols());
}

}  // namespace

double decode_linear(const LinearDecoder& d, std::span<const double> f) {
    check_in(d.alpha.size(), f.size(), "linear decoder");
    return dot(d.alpha, f) + d.bias;
}

double decode_mlp(const MlpDecoder& d, std::span<const double> f, std::span<double> pre) {
    check_in(d.w.cols(), f.size(), "mlp decoder");
    double out = d.bias;
    for (std::size_t i = 0; i < d.hidden(); ++i) {
        const double z = dot(row(d.w, i), f);
        if (!pre.empty()) pre[i] = z;
        if (z > 0.0) out += d.alpha[i] * z;
    }
    return out;
}

double decode_gated(const GatedMlpDecoder& d, std::span<const double> f, std::span<double> gate) {
    check_in(d.w.cols(), f.size(), "gated decoder");
    double out = d.bias;
    for (std::size_t i = 0; i < d.hidden(); ++i) {
        const bool open = dot(row(d.w_frozen, i), f) >= 0.0;
        if (!gate.empty()) gate[i] = open ? 1.0 : 0.0;
        if (open) out += dot(row(d.w, i), f);
    }
    return out;
}

double fused_sum(std::span<const double> f, std::span<const double> fbar) {
    double s = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j)
        if (fbar[j] >= 0.0) s += f[j];
    return s;
}

void mlp_backward(const MlpDecoder& d, std::span<const double> f, std::span<const double> pre, double upstream,
                  std::span<double> grad_w, std::span<double> grad_alpha, std::span<double> df) {
    const std::size_t in = f.size();
    if (!df.empty()) std::fill(df.begin(), df.end(), 0.0);
    for (std::size_t i = 0; i < d.hidden(); ++i) {
        if (!(pre[i] > 0.0)) continue;
        grad_alpha[i] += upstream * pre[i];
        const double g = upstream * d.alpha[i];
        double* gw = grad_w.data() + i * in;
        for (std::size_t c = 0; c < in; ++c) gw[c] += g * f[c];
        if (!df.empty()) {
            const double* w = d.w.data().data() + i * in;
            for (std::size_t c = 0; c < in; ++c) df[c] += g * w[c];
        }
    }
}

void gated_backward(const GatedMlpDecoder& d, std::span<const double> f, std::span<const double> gate,
                    double upstream, std::span<double> grad_w, std::span<double> df) {
    const std::size_t in = f.size();
    if (!df.empty()) std::fill(df.begin(), df.end(), 0.0);
    for (std::size_t i = 0; i < d.hidden(); ++i) {
        if (gate[i] == 0.0) continue;
        double* gw = grad_w.data() + i * in;
        for (std::size_t c = 0; c < in; ++c) gw[c] += upstream * f[c];
        if (!df.empty()) {
            const double* w = d.w.data().data() + i * in;
            for (std::size_t c = 0; c < in; ++c) df[c] += upstream * w[c];
        }
    }
}

void decode_linear_grad(const LinearDecoder& d, std::span<const double> f, double upstream, LinearDecoder& grad,
                        std::span<double> df) {
    check_in(d.alpha.size(), f.size(), "linear decoder");
    grad.alpha.resize(d.alpha.size(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) grad.alpha[i] += upstream * f[i];
    grad.bias += upstream;
    if (!df.empty()) {
        for (std::size_t i = 0; i < f.size(); ++i) df[i] = upstream * d.alpha[i];
    }
}

void decode_mlp_grad(const MlpDecoder& d, std::span<const double> f, std::span<const double> pre, double upstream,
                     MlpDecoder& grad, std::span<double> df) {
    check_in(d.w.cols(), f.size(), "mlp decoder");
    if (grad.w.shape() != d.w.shape()) grad.w = Tensor(d.w.shape());
    grad.alpha.resize(d.hidden(), 0.0);
    mlp_backward(d, f, pre, upstream, grad.w.data(), grad.alpha, df);
    grad.bias += upstream;
}

void decode_gated_grad(const GatedMlpDecoder& d, std::span<const double> f, std::span<const double> gate,
                       double upstream, GatedMlpDecoder& grad, std::span<double> df) {
    check_in(d.w.cols(), f.size(), "gated decoder");
    if (grad.w.shape() != d.w.shape()) grad.w = Tensor(d.w.shape());
    gated_backward(d, f, gate, upstream, grad.w.data(), df);
    grad.bias += upstream;
}

}  // namespace gaplanes
