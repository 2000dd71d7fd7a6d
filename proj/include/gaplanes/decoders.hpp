#pragma once

#include <span>
#include <string>
#include <vector>

#include "gaplanes/tensor.hpp"

namespace gaplanes {

enum class DecoderKind { linear, mlp, gated, fused };

std::string to_string(DecoderKind k);
DecoderKind parse_decoder(const std::string& s);

/// alpha^T f + bias.
struct LinearDecoder {
    std::vector<double> alpha;
    double bias = 0.0;
};

/// alpha^T relu(W f) + bias. No hidden bias.
struct MlpDecoder {
    Tensor w;  // h x in
    std::vector<double> alpha;
    double bias = 0.0;

    std::size_t hidden() const { return alpha.size(); }
};

/// sum_i (W_i f) 1[Wbar_i f >= 0] + bias, with Wbar frozen at construction.
struct GatedMlpDecoder {
    Tensor w;         // h x in, trainable
    Tensor w_frozen;  // h x in, never updated
    double bias = 0.0;

    std::size_t hidden() const { return w.rows(); }
};

double dot(std::span<const double> a, std::span<const double> b);

double decode_linear(const LinearDecoder& d, std::span<const double> f);

/// pre receives W f (length h) when non-empty.
double decode_mlp(const MlpDecoder& d, std::span<const double> f, std::span<double> pre = {});

/// gate receives the 0/1 indicators (length h) when non-empty.
double decode_gated(const GatedMlpDecoder& d, std::span<const double> f, std::span<double> gate = {});

/// Gated sum of channels: sum_j f_j 1[fbar_j >= 0]. The fused model adds its bias on top.
double fused_sum(std::span<const double> f, std::span<const double> fbar);

// Adjoints. Parameter gradients accumulate into the given decoder-shaped
// containers; df (when non-empty) is overwritten with d out / d f scaled by
// upstream.
void decode_linear_grad(const LinearDecoder& d, std::span<const double> f, double upstream, LinearDecoder& grad,
                        std::span<double> df = {});
void decode_mlp_grad(const MlpDecoder& d, std::span<const double> f, std::span<const double> pre, double upstream,
                     MlpDecoder& grad, std::span<double> df = {});
void decode_gated_grad(const GatedMlpDecoder& d, std::span<const double> f, std::span<const double> gate,
                       double upstream, GatedMlpDecoder& grad, std::span<double> df = {});

// Raw-buffer forms used by the model fast path: grad_w is h*in, grad_alpha h.
void mlp_backward(const MlpDecoder& d, std::span<const double> f, std::span<const double> pre, double upstream,
                  std::span<double> grad_w, std::span<double> grad_alpha, std::span<double> df);
void gated_backward(const GatedMlpDecoder& d, std::span<const double> f, std::span<const double> gate,
                    double upstream, std::span<double> grad_w, std::span<double> df);

}  // namespace gaplanes
