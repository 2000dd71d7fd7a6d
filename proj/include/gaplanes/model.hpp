#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gaplanes/decoders.hpp"
#include "gaplanes/expr.hpp"

namespace gaplanes {

enum class Mode { nonconvex, semiconvex, convex };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

/// Decoder family a mode trains with by default: convex -> fused,
/// semiconvex -> gated, nonconvex -> mlp.
DecoderKind default_decoder(Mode m);

struct GridSpec {
    std::string label;                   // "e1", "e23", ...
    std::vector<std::size_t> resolution;  // one entry per axis of label
    std::size_t feature_dim = 1;
    int scale = 1;
};

/// Line, plane and volume grids for every basis element the expression uses.
/// d and r hold (line, plane, volume) feature dims and base resolutions;
/// scales lists the multiresolution factors for lines and planes (the volume
/// keeps a single resolution).
std::vector<GridSpec> grids_for(const GaExpr& expr, std::array<std::size_t, 3> d, std::array<std::size_t, 3> r,
                                const std::vector<int>& scales = {1});

struct ModelSpec {
    int dims = 3;
    std::string expr = presets::kConcat;
    std::vector<GridSpec> grids;
    Interp interp = Interp::multilinear;
    Mode mode = Mode::nonconvex;
    DecoderKind decoder = DecoderKind::mlp;
    std::size_t hidden = 64;
    bool bias = true;
    bool relax_mul = false;
    double grid_init = 0.1;  // grids ~ U(-grid_init, grid_init)
    std::uint64_t seed = 0;  // trainable initialization
    std::optional<std::uint64_t> gate_seed;  // frozen gates; derived from seed when unset
};

/// Fused convex decoder state: frozen twin grids plus the always-on bias.
struct FusedDecoder {
    GridSet gates;
    double bias = 0.0;
};

using Decoder = std::variant<LinearDecoder, MlpDecoder, GatedMlpDecoder, FusedDecoder>;

enum class Group { grids, decoder };

/// A contiguous slice of trainable parameters; offset locates it in the flat
/// gradient vector.
struct ParamBlock {
    std::string name;
    Group group;
    std::span<double> values;
    std::size_t offset = 0;
};

class Model {
public:
    explicit Model(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }
    int dims() const { return spec_.dims; }
    Mode mode() const { return spec_.mode; }
    DecoderKind decoder_kind() const { return spec_.decoder; }
    const GaExpr& expr() const { return expr_; }
    std::size_t feature_dim() const { return compiled_.output_dim(); }

    GridSet& grids() { return grids_; }
    const GridSet& grids() const { return grids_; }
    Decoder& decoder() { return decoder_; }
    const Decoder& decoder() const { return decoder_; }
    /// Frozen gate grids of a fused model; empty otherwise.
    const GridSet& gate_grids() const;

    /// Trainable parameters in a fixed order: grids first, then decoder.
    std::vector<ParamBlock> blocks();
    std::size_t trainable_count() const { return trainable_; }
    /// Trainable total, plus frozen gate parameters when requested.
    std::size_t param_count(bool include_frozen = false) const;

    /// Copies of all trainable values (flat, block order) and back.
    std::vector<double> flat_params() const;
    void set_flat_params(std::span<const double> values);
    void zero_trainable();

    struct Cache {
        CompiledExpr::Workspace ws;
        std::vector<double> hidden;      // mlp pre-activations or gate indicators
        std::vector<double> gate_value;  // fused: frozen twin features
        std::vector<double> df;
        std::vector<std::span<double>> grid_grads;
    };
    Cache make_cache() const;

    double predict(const Coord& q) const;
    double forward(const Coord& q, Cache& c) const;
    /// Accumulates upstream * d predict / d theta into grad (length trainable_count)
    /// for the point of the last forward() on c.
    void backward(Cache& c, double upstream, std::span<double> grad) const;

private:
    void rebuild_layout();

    ModelSpec spec_;
    GaExpr expr_;
    GridSet grids_;
    CompiledExpr compiled_;
    Decoder decoder_;
    std::vector<std::size_t> grid_offset_;
    std::size_t decoder_offset_ = 0;
    std::size_t trainable_ = 0;
};

/// M_hat[k,l] = predict at (k/(rows-1), l/(cols-1)); axis 1 indexes rows.
Tensor assemble_matrix(const Model& m, std::size_t rows, std::size_t cols);

/// Validates the model invariants (mode vs decoder vs expression); throws Error.
void check_model_spec(const ModelSpec& spec);

}  // namespace gaplanes
