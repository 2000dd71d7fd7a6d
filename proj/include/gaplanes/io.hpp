#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gaplanes/model.hpp"
#include "gaplanes/tensor.hpp"

namespace gaplanes {

/// Binary PGM (P5), 8 or 16 bit. Values come back scaled to [0, 1].
Tensor read_pgm(const std::string& path);
/// Writes an 8-bit P5 image; values are clamped to [lo, hi] and rescaled.
void write_pgm(const std::string& path, const Tensor& image, double lo = 0.0, double hi = 1.0);

/// Raw little-endian float32 payload at `base`.f32 with a JSON sidecar at
/// `base`.json holding {"shape", "dtype": "f32", "order": "row-major"}.
void write_tensor(const std::string& base, const Tensor& t);
Tensor read_tensor(const std::string& base);

/// Values as stored: each entry rounded to float32.
Tensor to_f32_precision(const Tensor& t);

/// One payload file per grid plus a sidecar with label, resolution, feature
/// dim, interpolation and scale.
void write_grid(const std::string& base, const FeatureGrid& grid);
FeatureGrid read_grid(const std::string& base);

/// Model checkpoint: `base`.json manifest (spec and array table) and a
/// `base`.f32 payload with every grid, gate and decoder array.
void save_model(const std::string& base, const Model& m);
Model load_model(const std::string& base);

std::string model_spec_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

/// Declared configuration key with its default and a one-line help text.
struct ConfigKey {
    std::string key;
    std::string value;
    std::string help;
};

/// Flat key/value configuration with dotted keys ("train.steps"). Text form:
/// one "key = value" per line, '#' comments, and optional "[section]" lines
/// that prefix the keys below them.
class Config {
public:
    Config() = default;
    explicit Config(std::vector<ConfigKey> schema);

    /// Parses text and applies it over the defaults. Unknown keys throw Error
    /// listing the valid ones.
    void merge_text(const std::string& text, const std::string& origin = "config");
    void merge_file(const std::string& path);
    /// "key=value" override.
    void set_pair(const std::string& pair);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::string& get(const std::string& key) const;
    long long get_int(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const;
    std::vector<std::size_t> get_sizes(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;

    const std::vector<ConfigKey>& schema() const { return schema_; }
    const std::map<std::string, std::string>& values() const { return values_; }
    /// Sorted "key = value" lines.
    std::string canonical() const;
    /// FNV-1a of canonical(), as 16 hex digits.
    std::string hash() const;
    std::string help() const;

private:
    std::string valid_keys() const;

    std::vector<ConfigKey> schema_;
    std::map<std::string, std::string> values_;
};

std::string fnv1a_hex(const std::string& text);

/// Run record written next to every experiment's outputs.
struct Manifest {
    std::vector<std::string> argv;
    std::string command;
    std::map<std::string, std::string> config;
    std::string config_hash;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string started;
    std::string finished;
    std::map<std::string, std::size_t> param_counts;
    std::vector<std::string> outputs;

    std::string to_json() const;
};

std::string git_describe();
/// UTC timestamp, ISO 8601.
std::string utc_now();

}  // namespace gaplanes
