#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "nvca/error.hpp"
#include "nvca/fxp.hpp"
#include "nvca/pruning.hpp"
#include "nvca/transforms.hpp"

namespace nvca {

enum class LayerKind { conv3x3s1, deconv4x4s2, boundary };
enum class Algorithm { fast_sparse, fast_dense, direct };
enum class Activation { none, relu };

inline const char* to_string(LayerKind k) noexcept {
    switch (k) {
    case LayerKind::conv3x3s1: return "conv3x3s1";
    case LayerKind::deconv4x4s2: return "deconv4x4s2";
    case LayerKind::boundary: return "boundary";
    }
    return "?";
}
inline const char* to_string(Algorithm a) noexcept {
    switch (a) {
    case Algorithm::fast_sparse: return "fast-sparse";
    case Algorithm::fast_dense: return "fast-dense";
    case Algorithm::direct: return "direct";
    }
    return "?";
}
inline const char* to_string(Activation a) noexcept { return a == Activation::relu ? "relu" : "none"; }

inline LayerKind parse_layer_kind(const std::string& s) {
    if (s == "conv3x3s1") return LayerKind::conv3x3s1;
    if (s == "deconv4x4s2") return LayerKind::deconv4x4s2;
    if (s == "boundary" || s == "boundary-opaque") return LayerKind::boundary;
    throw ConfigError("unknown layer kind '" + s + "'");
}
inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "fast-sparse") return Algorithm::fast_sparse;
    if (s == "fast-dense") return Algorithm::fast_dense;
    if (s == "direct") return Algorithm::direct;
    throw ConfigError("unknown algorithm '" + s + "'");
}
inline Activation parse_activation(const std::string& s) {
    if (s == "none") return Activation::none;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + s + "'");
}

/// Declarative description of one layer. The kind fixes kernel, stride and
/// padding: 3x3/1/1 for conv, 4x4/2/1 for deconv. Spatial sizes describe
/// the input; outputs follow from the kind (boundary layers declare theirs).
struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::conv3x3s1;
    std::size_t cin = 0;
    std::size_t cout = 0;
    std::size_t in_h = 0;
    std::size_t in_w = 0;
    std::size_t boundary_out_h = 0;
    std::size_t boundary_out_w = 0;
    Algorithm algorithm = Algorithm::fast_sparse;
    Activation activation = Activation::none;
    std::optional<Rho> rho; ///< falls back to the hardware configuration
    MaskPolicy policy = MaskPolicy::per_kernel;
    FxpFormat act_format = kActivationFormat;
    FxpFormat weight_format = kWeightFormat;
    std::uint64_t boundary_bytes = 0;
    std::uint64_t boundary_cycles = 0;
    std::string module;

    int k() const noexcept { return kind == LayerKind::deconv4x4s2 ? 4 : 3; }
    int stride() const noexcept { return kind == LayerKind::deconv4x4s2 ? 2 : 1; }
    int pad() const noexcept { return 1; }
    bool is_boundary() const noexcept { return kind == LayerKind::boundary; }
    bool is_fast() const noexcept { return !is_boundary() && algorithm != Algorithm::direct; }

    std::size_t out_h() const noexcept {
        if (kind == LayerKind::boundary) return boundary_out_h ? boundary_out_h : in_h;
        if (kind == LayerKind::deconv4x4s2) return (in_h - 1) * 2 + 4 - 2;
        return in_h;
    }
    std::size_t out_w() const noexcept {
        if (kind == LayerKind::boundary) return boundary_out_w ? boundary_out_w : in_w;
        if (kind == LayerKind::deconv4x4s2) return (in_w - 1) * 2 + 4 - 2;
        return in_w;
    }
    std::uint64_t in_elements() const noexcept { return std::uint64_t{cin} * in_h * in_w; }
    std::uint64_t out_elements() const noexcept { return std::uint64_t{cout} * out_h() * out_w(); }

    TransformSet transform_set() const {
        if (kind == LayerKind::conv3x3s1) return builtin_conv_f2x2_3x3();
        if (kind == LayerKind::deconv4x4s2) return builtin_deconv_t3_6x6_4x4();
        throw ConfigError("layer '" + name + "': boundary layers have no transform set");
    }

    void validate() const {
        auto fail = [&](const std::string& why) { throw ConfigError("layer '" + name + "': " + why); };
        if (cin == 0 || cout == 0) fail("channel counts must be positive");
        if (in_h == 0 || in_w == 0) fail("spatial size must be positive");
        act_format.validate();
        weight_format.validate();
        if (rho) rho->validate();
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Applies `key=value` fields to a layer; unknown keys are rejected.
inline void apply_layer_field(LayerSpec& spec, const std::string& key, const std::string& value) {
    auto num = [&]() -> std::uint64_t {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(value, &used);
            if (used != value.size()) throw ConfigError("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("layer '" + spec.name + "': field " + key + " expects an unsigned integer, got '" + value + "'");
        }
    };
    auto fmt_bits = [&](FxpFormat& f) {
        // "total/frac", e.g. 12/9
        const auto slash = value.find('/');
        if (slash == std::string::npos) throw ConfigError("field " + key + " expects total/fraction bits");
        f.total_bits = std::stoi(value.substr(0, slash));
        f.fraction_bits = std::stoi(value.substr(slash + 1));
    };
    if (key == "kind") spec.kind = parse_layer_kind(value);
    else if (key == "cin") spec.cin = num();
    else if (key == "cout") spec.cout = num();
    else if (key == "h") spec.in_h = num();
    else if (key == "w") spec.in_w = num();
    else if (key == "oh") spec.boundary_out_h = num();
    else if (key == "ow") spec.boundary_out_w = num();
    else if (key == "algorithm") spec.algorithm = parse_algorithm(value);
    else if (key == "activation") spec.activation = parse_activation(value);
    else if (key == "rho") spec.rho = parse_rho(value);
    else if (key == "policy") spec.policy = parse_mask_policy(value);
    else if (key == "act_fxp") fmt_bits(spec.act_format);
    else if (key == "weight_fxp") fmt_bits(spec.weight_format);
    else if (key == "boundary_bytes") spec.boundary_bytes = num();
    else if (key == "boundary_cycles") spec.boundary_cycles = num();
    else if (key == "module") spec.module = value;
    else if (key == "name") spec.name = value;
    else throw ConfigError("layer '" + spec.name + "': unknown field '" + key + "'");
}

/// Canonical `key=value` rendering; omits fields at their defaults.
inline std::string format_layer_fields(const LayerSpec& spec) {
    std::ostringstream out;
    out << "kind=" << to_string(spec.kind) << " cin=" << spec.cin << " cout=" << spec.cout << " h=" << spec.in_h
        << " w=" << spec.in_w;
    if (spec.boundary_out_h) out << " oh=" << spec.boundary_out_h;
    if (spec.boundary_out_w) out << " ow=" << spec.boundary_out_w;
    if (spec.algorithm != Algorithm::fast_sparse) out << " algorithm=" << to_string(spec.algorithm);
    if (spec.activation != Activation::none) out << " activation=" << to_string(spec.activation);
    if (spec.rho) out << " rho=" << spec.rho->num << "/" << spec.rho->den;
    if (spec.policy != MaskPolicy::per_kernel) out << " policy=" << to_string(spec.policy);
    if (spec.act_format != kActivationFormat)
        out << " act_fxp=" << spec.act_format.total_bits << "/" << spec.act_format.fraction_bits;
    if (spec.weight_format != kWeightFormat)
        out << " weight_fxp=" << spec.weight_format.total_bits << "/" << spec.weight_format.fraction_bits;
    if (spec.boundary_bytes) out << " boundary_bytes=" << spec.boundary_bytes;
    if (spec.boundary_cycles) out << " boundary_cycles=" << spec.boundary_cycles;
    if (!spec.module.empty()) out << " module=" << spec.module;
    return out.str();
}

/// Reads a layer description: one `key=value` per line or whitespace
/// separated, '#' comments.
inline LayerSpec parse_layer_spec(std::istream& in) {
    LayerSpec spec;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream tok(line);
        std::string field;
        while (tok >> field) {
            const auto eq = field.find('=');
            if (eq == std::string::npos) throw ParseError("layer spec: expected key=value, got '" + field + "'");
            apply_layer_field(spec, field.substr(0, eq), field.substr(eq + 1));
        }
    }
    spec.validate();
    return spec;
}

} // namespace nvca
