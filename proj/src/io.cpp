#include "gaplanes/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#ifndef GAPLANES_GIT_DESCRIBE
#define GAPLANES_GIT_DESCRIBE "unknown"
#endif

static_assert(std::endian::native == std::endian::little, "payloads are written in native little-endian order");

namespace gaplanes {

using nlohmann::json;

namespace {

std::string slurp(const std::string& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void dump(const std::string& path, const std::string& bytes, bool binary) {
    std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path);
}

void append_f32(std::string& out, std::span<const double> values) {
    const std::size_t at = out.size();
    out.resize(at + values.size() * sizeof(float));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float f = static_cast<float>(values[i]);
        std::memcpy(out.data() + at + i * sizeof(float), &f, sizeof(float));
    }
}

void read_f32(const std::string& bytes, std::size_t offset, std::span<double> out, const std::string& what) {
    if (offset + out.size() * sizeof(float) > bytes.size())
        throw Error(what + ": payload too short (" + std::to_string(bytes.size()) + " bytes)");
    for (std::size_t i = 0; i < out.size(); ++i) {
        float f;
        std::memcpy(&f, bytes.data() + offset + i * sizeof(float), sizeof(float));
        out[i] = f;
    }
}

std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

// Skips whitespace and '#' comment lines in a PGM header.
void skip_pgm_space(const std::string& s, std::size_t& i) {
    while (i < s.size()) {
        if (std::isspace(static_cast<unsigned char>(s[i]))) {
            ++i;
        } else if (s[i] == '#') {
            while (i < s.size() && s[i] != '\n') ++i;
        } else {
            break;
        }
    }
}

std::size_t pgm_number(const std::string& s, std::size_t& i, const std::string& path) {
    skip_pgm_space(s, i);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data() + i, s.data() + s.size(), v);
    if (ec != std::errc()) throw Error(path + ": malformed PGM header");
    i = static_cast<std::size_t>(p - s.data());
    return v;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

json grid_spec_json(const GridSpec& g) {
    return json{{"label", g.label}, {"resolution", g.resolution}, {"feature_dim", g.feature_dim}, {"scale", g.scale}};
}

}  // namespace

Tensor read_pgm(const std::string& path) {
    const std::string s = slurp(path, true);
    if (s.size() < 2 || s[0] != 'P' || s[1] != '5') throw Error(path + ": not a binary PGM (P5)");
    std::size_t i = 2;
    const std::size_t w = pgm_number(s, i, path);
    const std::size_t h = pgm_number(s, i, path);
    const std::size_t maxval = pgm_number(s, i, path);
    if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw Error(path + ": bad PGM dimensions or maxval");
    ++i;  // single whitespace before the raster
    const std::size_t bpp = maxval < 256 ? 1 : 2;
    if (s.size() < i + w * h * bpp) throw Error(path + ": truncated PGM raster");
    Tensor img = Tensor::matrix(h, w);
    for (std::size_t k = 0; k < w * h; ++k) {
        std::size_t v;
        if (bpp == 1) {
            v = static_cast<unsigned char>(s[i + k]);
        } else {
            v = (static_cast<std::size_t>(static_cast<unsigned char>(s[i + 2 * k])) << 8) |
                static_cast<unsigned char>(s[i + 2 * k + 1]);
        }
        img[k] = static_cast<double>(v) / static_cast<double>(maxval);
    }
    return img;
}

void write_pgm(const std::string& path, const Tensor& image, double lo, double hi) {
    if (image.rank() != 2) throw Error("write_pgm: expected a matrix, got " + image.shape_string());
    if (!(hi > lo)) throw Error("write_pgm: empty value range");
    std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
    const std::size_t at = out.size();
    out.resize(at + image.size());
    for (std::size_t k = 0; k < image.size(); ++k) {
        const double t = std::clamp((image[k] - lo) / (hi - lo), 0.0, 1.0);
        out[at + k] = static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0)));
    }
    dump(path, out, true);
}

Tensor to_f32_precision(const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.vec()) v = static_cast<float>(v);
    return out;
}

void write_tensor(const std::string& base, const Tensor& t) {
    std::string payload;
    append_f32(payload, t.data());
    dump(base + ".f32", payload, true);
    json side{{"shape", t.shape()}, {"dtype", "f32"}, {"order", "row-major"}};
    dump(base + ".json", side.dump(2) + "\n", false);
}

Tensor read_tensor(const std::string& base) {
    json side;
    try {
        side = json::parse(slurp(base + ".json", false));
    } catch (const json::exception& e) {
        throw Error(base + ".json: " + e.what());
    }
    if (side.value("dtype", "") != "f32") throw Error(base + ".json: dtype must be f32");
    if (side.value("order", "") != "row-major") throw Error(base + ".json: order must be row-major");
    const auto shape = side.at("shape").get<std::vector<std::size_t>>();
    const std::string bytes = slurp(base + ".f32", true);
    const std::size_t n = product(shape);
    if (bytes.size() != n * sizeof(float))
        throw Error(base + ".f32: expected " + std::to_string(n * sizeof(float)) + " bytes, found " +
                    std::to_string(bytes.size()));
    Tensor t(shape);
    read_f32(bytes, 0, t.data(), base);
    return t;
}

void write_grid(const std::string& base, const FeatureGrid& grid) {
    std::string payload;
    append_f32(payload, grid.params().data());
    dump(base + ".f32", payload, true);
    json side{{"shape", grid.params().shape()},
              {"dtype", "f32"},
              {"order", "row-major"},
              {"label", grid.label().name()},
              {"resolution", grid.resolution()},
              {"feature_dim", grid.feature_dim()},
              {"interp", to_string(grid.interp())},
              {"scale", grid.scale()}};
    dump(base + ".json", side.dump(2) + "\n", false);
}

FeatureGrid read_grid(const std::string& base) {
    json side;
    try {
        side = json::parse(slurp(base + ".json", false));
        FeatureGrid g(BasisLabel::parse(side.at("label").get<std::string>()),
                      side.at("resolution").get<std::vector<std::size_t>>(), side.at("feature_dim").get<std::size_t>(),
                      parse_interp(side.at("interp").get<std::string>()));
        g.set_scale(side.at("scale").get<int>());
        const std::string bytes = slurp(base + ".f32", true);
        if (bytes.size() != g.param_count() * sizeof(float)) throw Error(base + ".f32: size does not match sidecar");
        read_f32(bytes, 0, g.params().data(), base);
        return g;
    } catch (const json::exception& e) {
        throw Error(base + ".json: " + e.what());
    }
}

std::string model_spec_json(const ModelSpec& spec) {
    json grids = json::array();
    for (const auto& g : spec.grids) grids.push_back(grid_spec_json(g));
    json j{{"dims", spec.dims},
           {"expr", spec.expr},
           {"grids", grids},
           {"interp", to_string(spec.interp)},
           {"mode", to_string(spec.mode)},
           {"decoder", to_string(spec.decoder)},
           {"hidden", spec.hidden},
           {"bias", spec.bias},
           {"relax_mul", spec.relax_mul},
           {"grid_init", spec.grid_init},
           {"seed", spec.seed}};
    if (spec.gate_seed) j["gate_seed"] = *spec.gate_seed;
    return j.dump(2);
}

ModelSpec model_spec_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        ModelSpec s;
        s.dims = j.at("dims").get<int>();
        s.expr = j.at("expr").get<std::string>();
        for (const auto& g : j.at("grids")) {
            s.grids.push_back(GridSpec{g.at("label").get<std::string>(),
                                       g.at("resolution").get<std::vector<std::size_t>>(),
                                       g.at("feature_dim").get<std::size_t>(), g.at("scale").get<int>()});
        }
        s.interp = parse_interp(j.at("interp").get<std::string>());
        s.mode = parse_mode(j.at("mode").get<std::string>());
        s.decoder = parse_decoder(j.at("decoder").get<std::string>());
        s.hidden = j.at("hidden").get<std::size_t>();
        s.bias = j.at("bias").get<bool>();
        s.relax_mul = j.at("relax_mul").get<bool>();
        s.grid_init = j.at("grid_init").get<double>();
        s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("gate_seed")) s.gate_seed = j.at("gate_seed").get<std::uint64_t>();
        return s;
    } catch (const json::exception& e) {
        throw Error(std::string("model spec: ") + e.what());
    }
}

namespace {

// Every stored array of a model, in payload order.
struct NamedArray {
    std::string name;
    std::vector<std::size_t> shape;
    std::span<double> values;
};

std::vector<NamedArray> model_arrays(Model& m) {
    std::vector<NamedArray> out;
    for (std::size_t i = 0; i < m.grids().size(); ++i) {
        auto& g = m.grids()[i];
        out.push_back({"grid/" + m.grids().id(i), g.params().shape(), g.params().data()});
    }
    std::visit(
        [&](auto& d) {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, LinearDecoder>) {
                out.push_back({"decoder/alpha", {d.alpha.size()}, d.alpha});
            } else if constexpr (std::is_same_v<D, MlpDecoder>) {
                out.push_back({"decoder/w", d.w.shape(), d.w.data()});
                out.push_back({"decoder/alpha", {d.alpha.size()}, d.alpha});
            } else if constexpr (std::is_same_v<D, GatedMlpDecoder>) {
                out.push_back({"decoder/w", d.w.shape(), d.w.data()});
                out.push_back({"decoder/w_frozen", d.w_frozen.shape(), d.w_frozen.data()});
            } else {
                for (std::size_t i = 0; i < d.gates.size(); ++i) {
                    auto& g = d.gates[i];
                    out.push_back({"gate/" + d.gates.id(i), g.params().shape(), g.params().data()});
                }
            }
            out.push_back({"decoder/bias", {1}, std::span<double>(&d.bias, 1)});
        },
        m.decoder());
    return out;
}

}  // namespace

void save_model(const std::string& base, const Model& m) {
    Model copy = m;  // model_arrays needs mutable spans
    std::string payload;
    json table = json::array();
    for (const auto& a : model_arrays(copy)) {
        table.push_back(json{{"name", a.name}, {"shape", a.shape}, {"offset", payload.size()}});
        append_f32(payload, a.values);
    }
    dump(base + ".f32", payload, true);
    json manifest{{"format", "gaplanes-model"},
                  {"dtype", "f32"},
                  {"order", "row-major"},
                  {"spec", json::parse(model_spec_json(m.spec()))},
                  {"arrays", table},
                  {"trainable_params", m.trainable_count()},
                  {"total_params", m.param_count(true)}};
    dump(base + ".json", manifest.dump(2) + "\n", false);
}

Model load_model(const std::string& base) {
    json manifest;
    try {
        manifest = json::parse(slurp(base + ".json", false));
    } catch (const json::exception& e) {
        throw Error(base + ".json: " + e.what());
    }
    if (manifest.value("format", "") != "gaplanes-model") throw Error(base + ".json: not a model checkpoint");
    Model m(model_spec_from_json(manifest.at("spec").dump()));
    const std::string bytes = slurp(base + ".f32", true);
    auto arrays = model_arrays(m);
    const auto& table = manifest.at("arrays");
    if (table.size() != arrays.size()) throw Error(base + ".json: array table does not match the spec");
    std::size_t expected = 0;
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        const auto& e = table[i];
        if (e.at("name").get<std::string>() != arrays[i].name ||
            e.at("shape").get<std::vector<std::size_t>>() != arrays[i].shape)
            throw Error(base + ".json: array " + arrays[i].name + " does not match the spec");
        read_f32(bytes, e.at("offset").get<std::size_t>(), arrays[i].values, base);
        expected += arrays[i].values.size() * sizeof(float);
    }
    if (bytes.size() != expected) throw Error(base + ".f32: unexpected payload size");
    return m;
}

void write_text(const std::string& path, const std::string& text) { dump(path, text, false); }
std::string read_text(const std::string& path) { return slurp(path, false); }

Config::Config(std::vector<ConfigKey> schema) : schema_(std::move(schema)) {
    for (const auto& k : schema_) values_[k.key] = k.value;
}

std::string Config::valid_keys() const {
    std::string s;
    for (const auto& k : schema_) s += "\n  " + k.key;
    return s;
}

void Config::set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw Error("unknown config key '" + key + "'; valid keys:" + valid_keys());
    values_[key] = value;
}

void Config::set_pair(const std::string& pair) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) throw Error("config override '" + pair + "' is not key=value");
    set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
}

void Config::merge_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw Error(origin + ":" + std::to_string(lineno) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(origin + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        try {
            set(key, trim(line.substr(eq + 1)));
        } catch (const Error& e) {
            throw Error(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void Config::merge_file(const std::string& path) { merge_text(slurp(path, false), path); }

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error("unknown config key '" + key + "'");
    return it->second;
}

long long Config::get_int(const std::string& key) const {
    const auto& s = get(key);
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw Error("config key '" + key + "': not an integer: " + s);
    return v;
}

std::size_t Config::get_size(const std::string& key) const {
    const long long v = get_int(key);
    if (v < 0) throw Error("config key '" + key + "': must be non-negative");
    return static_cast<std::size_t>(v);
}

double Config::get_double(const std::string& key) const {
    const auto& s = get(key);
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error("config key '" + key + "': not a number: " + s);
    }
}

bool Config::get_bool(const std::string& key) const {
    const auto& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw Error("config key '" + key + "': not a boolean: " + s);
}

std::vector<std::string> Config::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(get(key));
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::size_t> Config::get_sizes(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& s : get_list(key)) {
        std::size_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw Error("config key '" + key + "': not a list of sizes: " + get(key));
        out.push_back(v);
    }
    return out;
}

std::vector<double> Config::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : get_list(key)) {
        try {
            out.push_back(std::stod(s));
        } catch (const std::exception&) {
            throw Error("config key '" + key + "': not a list of numbers: " + get(key));
        }
    }
    return out;
}

std::string Config::canonical() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
    return s;
}

std::string Config::hash() const { return fnv1a_hex(canonical()); }

std::string Config::help() const {
    std::string s;
    for (const auto& k : schema_) s += "  " + k.key + " = " + k.value + "    " + k.help + "\n";
    return s;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string Manifest::to_json() const {
    json j{{"command", command},
           {"argv", argv},
           {"config", config},
           {"config_hash", config_hash},
           {"seed", seed},
           {"threads", threads},
           {"git_describe", git_describe()},
           {"started", started},
           {"finished", finished},
           {"param_counts", param_counts},
           {"outputs", outputs}};
    return j.dump(2) + "\n";
}

std::string git_describe() { return GAPLANES_GIT_DESCRIBE; }

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace gaplanes
