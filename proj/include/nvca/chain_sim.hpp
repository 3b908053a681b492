#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nvca/engine.hpp"
#include "nvca/error.hpp"
#include "nvca/layer.hpp"
#include "nvca/tensor.hpp"

namespace nvca {

/// How a producing conv sizes the row group it computes for its consumer.
enum class TileRowMode {
    demand, ///< only the rows the consumer is waiting for (a short group recomputes a full tile row)
    full,   ///< whole tile rows anchored at the first missing row
};

inline const char* to_string(TileRowMode m) noexcept { return m == TileRowMode::demand ? "demand" : "full"; }
inline TileRowMode parse_tile_row_mode(const std::string& s) {
    if (s == "demand") return TileRowMode::demand;
    if (s == "full") return TileRowMode::full;
    throw ConfigError("unknown tile_rows mode '" + s + "' (expected demand or full)");
}

struct BufferConfig {
    int num_banks = 10;
    std::uint64_t bank_capacity_bytes = 0; ///< 0 sizes banks to the widest row of the chain
    TileRowMode tile_rows = TileRowMode::demand;
};

struct SimConfig {
    ScuConfig scu;
    BufferConfig buffer;
    int activation_bits = 12;
    int weight_bits = 16;
    int index_bits = 8;
    std::uint64_t dram_word_bytes = 1;

    void validate() const {
        scu.validate();
        if (buffer.num_banks < 1) throw ConfigError("num_banks must be >= 1");
        if (activation_bits < 1 || activation_bits > 32) throw ConfigError("activation_bits must be in [1, 32]");
        if (weight_bits < 1 || weight_bits > 32) throw ConfigError("weight_bits must be in [1, 32]");
        if (index_bits < 0 || index_bits > 16) throw ConfigError("index_bits must be in [0, 16]");
        if (dram_word_bytes < 1) throw ConfigError("dram_word_bytes must be >= 1");
    }
};

/// Reads `key = value` lines; '#' starts a comment. Unknown keys are errors.
inline SimConfig parse_sim_config(std::istream& in) {
    SimConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        if (trim(line).empty()) continue;
        if (eq == std::string::npos) throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        auto where = [&] { return "config line " + std::to_string(lineno) + " (" + key + "): "; };
        auto integer = [&]() -> long long {
            try {
                std::size_t used = 0;
                const long long v = std::stoll(value, &used);
                if (used != value.size()) throw ParseError("");
                return v;
            } catch (const std::exception&) {
                throw ParseError(where() + "expected an integer, got '" + value + "'");
            }
        };
        auto real = [&]() -> double {
            try {
                std::size_t used = 0;
                const double v = std::stod(value, &used);
                if (used != value.size()) throw ParseError("");
                return v;
            } catch (const std::exception&) {
                throw ParseError(where() + "expected a number, got '" + value + "'");
            }
        };
        if (key == "frequency_hz") cfg.scu.frequency_hz = real();
        else if (key == "pif") cfg.scu.pif = static_cast<int>(integer());
        else if (key == "pof") cfg.scu.pof = static_cast<int>(integer());
        else if (key == "rho") cfg.scu.rho = parse_rho(value);
        else if (key == "convs_per_pass") cfg.scu.convs_per_pass = static_cast<int>(integer());
        else if (key == "num_banks") cfg.buffer.num_banks = static_cast<int>(integer());
        else if (key == "bank_capacity_bytes") cfg.buffer.bank_capacity_bytes = static_cast<std::uint64_t>(integer());
        else if (key == "tile_rows") cfg.buffer.tile_rows = parse_tile_row_mode(value);
        else if (key == "preu_fill") cfg.scu.preu_fill = static_cast<int>(integer());
        else if (key == "postu_fill") cfg.scu.postu_fill = static_cast<int>(integer());
        else if (key == "activation_bits") cfg.activation_bits = static_cast<int>(integer());
        else if (key == "weight_bits") cfg.weight_bits = static_cast<int>(integer());
        else if (key == "index_bits") cfg.index_bits = static_cast<int>(integer());
        else if (key == "dram_word_bytes") cfg.dram_word_bytes = static_cast<std::uint64_t>(integer());
        else throw ParseError(where() + "unknown key");
    }
    cfg.validate();
    return cfg;
}

/// Fusable run of layers: convs followed by at most one trailing deconv.
struct ChainSpec {
    std::string name;
    std::vector<LayerSpec> layers;

    std::size_t size() const noexcept { return layers.size(); }

    void validate() const {
        if (layers.empty()) throw ConfigError("chain '" + name + "' is empty");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const LayerSpec& l = layers[i];
            l.validate();
            if (l.is_boundary()) throw ConfigError("chain '" + name + "': boundary layer '" + l.name + "' cannot be chained");
            if (l.kind == LayerKind::deconv4x4s2 && i + 1 != layers.size()) {
                throw ConfigError("chain '" + name + "': deconv '" + l.name + "' must be the last layer");
            }
            if (i == 0) continue;
            const LayerSpec& p = layers[i - 1];
            if (p.cout != l.cin || p.out_h() != l.in_h || p.out_w() != l.in_w) {
                throw ShapeError("chain '" + name + "': " + p.name + " -> " + l.name + " produces " + std::to_string(p.cout) +
                                 "x" + std::to_string(p.out_h()) + "x" + std::to_string(p.out_w()) + ", consumer expects " +
                                 std::to_string(l.cin) + "x" + std::to_string(l.in_h) + "x" + std::to_string(l.in_w));
            }
        }
    }

    /// Feature f: 0 is the chain input, f >= 1 is the output of layer f-1.
    std::size_t feature_channels(std::size_t f) const { return f == 0 ? layers[0].cin : layers[f - 1].cout; }
    std::size_t feature_rows(std::size_t f) const { return f == 0 ? layers[0].in_h : layers[f - 1].out_h(); }
    std::size_t feature_cols(std::size_t f) const { return f == 0 ? layers[0].in_w : layers[f - 1].out_w(); }
    std::string feature_name(std::size_t f) const { return f == 0 ? layers[0].name + ".in" : layers[f - 1].name; }
};

inline std::uint64_t round_up(std::uint64_t v, std::uint64_t word) noexcept { return (v + word - 1) / word * word; }

inline std::uint64_t bits_to_bytes(std::uint64_t bits) noexcept { return (bits + 7) / 8; }

inline std::uint64_t feature_bytes(std::uint64_t elements, const SimConfig& cfg) {
    return round_up(bits_to_bytes(elements * static_cast<std::uint64_t>(cfg.activation_bits)), cfg.dram_word_bytes);
}

inline Rho layer_rho(const LayerSpec& spec, const SimConfig& cfg) { return spec.rho.value_or(cfg.scu.rho); }

/// Off-chip bytes of one layer's weights (and indices for sparse banks).
inline std::uint64_t weight_bytes(const LayerSpec& spec, const SimConfig& cfg) {
    if (spec.is_boundary()) return 0;
    const std::uint64_t pairs = std::uint64_t{spec.cin} * spec.cout;
    const auto wbits = static_cast<std::uint64_t>(cfg.weight_bits);
    std::uint64_t bits = 0;
    if (spec.algorithm == Algorithm::direct) {
        bits = pairs * static_cast<std::uint64_t>(spec.k() * spec.k()) * wbits;
    } else {
        const auto positions = static_cast<std::uint64_t>(spec.transform_set().mu) * spec.transform_set().mu;
        if (spec.algorithm == Algorithm::fast_dense) {
            bits = pairs * positions * wbits;
        } else {
            bits = pairs * layer_rho(spec, cfg).kept(positions) * (wbits + static_cast<std::uint64_t>(cfg.index_bits));
        }
    }
    return round_up(bits_to_bytes(bits), cfg.dram_word_bytes);
}

/// Per-feature row ranges (features 0..n) needed to produce `out_rows` of
/// the chain's final output.
inline std::vector<RowRange> rows_needed(const ChainSpec& chain, RowRange out_rows, TileRowMode mode = TileRowMode::full) {
    chain.validate();
    const std::size_t n = chain.size();
    std::vector<RowRange> need(n + 1);
    const long final_rows = static_cast<long>(chain.feature_rows(n));
    if (out_rows.begin < 0 || out_rows.end > final_rows || out_rows.begin > out_rows.end) {
        throw ShapeError("rows_needed: output rows [" + std::to_string(out_rows.begin) + ", " + std::to_string(out_rows.end) +
                         ") outside [0, " + std::to_string(final_rows) + ")");
    }
    need[n] = out_rows;
    for (std::size_t l = n; l-- > 0;) {
        const LayerSpec& spec = chain.layers[l];
        const RowRange out = need[l + 1];
        const long in_h = static_cast<long>(spec.in_h);
        if (out.empty()) {
            need[l] = {0, 0};
            continue;
        }
        const AxisTiling t = layer_tiling(spec).rows;
        long a = 0, b = 0;
        if (spec.kind == LayerKind::deconv4x4s2 || l + 1 == n || mode == TileRowMode::full) {
            // whole tiles: grid-aligned for the sink or a deconv, anchored at out.begin otherwise
            if (spec.kind == LayerKind::deconv4x4s2 || l + 1 == n) {
                const long t0 = floor_div(out.begin - t.first_out, t.out_step);
                const long t1 = ceil_div(out.end - t.first_out, t.out_step);
                a = t.first_in + t0 * t.in_step;
                b = t.first_in + (t1 - 1) * t.in_step + t.patch;
            } else {
                const long tiles = ceil_div(out.end - out.begin, t.out_step);
                a = out.begin + t.first_in;
                b = out.begin + tiles * t.out_step + t.first_in + (t.patch - t.out_step);
            }
        } else {
            a = out.begin + t.first_in;
            b = out.end + t.first_in + (t.patch - t.out_step);
        }
        need[l] = {std::clamp(a, 0L, in_h), std::clamp(b, 0L, in_h)};
    }
    return need;
}

enum class BankEvent { load, store, compute, inactive, free };

inline const char* to_string(BankEvent e) noexcept {
    switch (e) {
    case BankEvent::load: return "load";
    case BankEvent::store: return "store";
    case BankEvent::compute: return "computing";
    case BankEvent::inactive: return "inactive";
    case BankEvent::free: return "free";
    }
    return "?";
}

struct TraceEvent {
    std::uint64_t cycle = 0;
    int bank = 0;
    BankEvent state = BankEvent::free;
    int feature = 0;
    long row = 0;
    friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct BlockedRow {
    int bank = 0;
    int feature = 0;
    long row = 0;
};

struct LayerTraffic {
    std::string name;
    std::string module;
    std::string kind;
    std::uint64_t input_bytes = 0;
    std::uint64_t output_bytes = 0;
    std::uint64_t weight_bytes = 0;
    std::uint64_t reads = 0;
    std::uint64_t writes = 0;
    std::uint64_t cycles = 0;
    std::uint64_t baseline_reads = 0;
    std::uint64_t baseline_writes = 0;
    std::uint64_t baseline_cycles = 0;
    std::uint64_t dense_ops = 0;
};

struct TrafficCycleReport {
    std::string name;
    std::vector<LayerTraffic> layers;
    std::vector<std::string> features;
    bool chained = false;
    bool completed = true;
    std::vector<BlockedRow> blocking; ///< rows retained when the schedule deadlocked
    int num_banks = 0;
    int peak_banks = 0;
    std::uint64_t bank_capacity_bytes = 0;
    std::uint64_t intermediate_bytes = 0;
    std::uint64_t fill_cycles = 0;
    std::uint64_t units = 0;
    std::vector<TraceEvent> trace;

    std::uint64_t reads() const noexcept { return sum(&LayerTraffic::reads); }
    std::uint64_t writes() const noexcept { return sum(&LayerTraffic::writes); }
    std::uint64_t baseline_reads() const noexcept { return sum(&LayerTraffic::baseline_reads); }
    std::uint64_t baseline_writes() const noexcept { return sum(&LayerTraffic::baseline_writes); }
    std::uint64_t traffic() const noexcept { return reads() + writes(); }
    std::uint64_t baseline_traffic() const noexcept { return baseline_reads() + baseline_writes(); }
    std::uint64_t cycles() const noexcept { return sum(&LayerTraffic::cycles) + fill_cycles; }
    std::uint64_t baseline_cycles() const noexcept { return sum(&LayerTraffic::baseline_cycles); }
    double reduction() const noexcept {
        const auto base = baseline_traffic();
        return base == 0 ? 0.0 : 1.0 - static_cast<double>(traffic()) / static_cast<double>(base);
    }

private:
    std::uint64_t sum(std::uint64_t LayerTraffic::*field) const noexcept {
        std::uint64_t s = 0;
        for (const auto& l : layers) s += l.*field;
        return s;
    }
};

namespace detail {

inline LayerTraffic baseline_traffic(const LayerSpec& spec, const SimConfig& cfg) {
    LayerTraffic t;
    t.name = spec.name;
    t.module = spec.module;
    t.kind = to_string(spec.kind);
    t.input_bytes = feature_bytes(spec.in_elements(), cfg);
    t.output_bytes = feature_bytes(spec.out_elements(), cfg);
    t.weight_bytes = spec.is_boundary() ? spec.boundary_bytes : weight_bytes(spec, cfg);
    t.baseline_reads = t.input_bytes + t.weight_bytes;
    t.baseline_writes = t.output_bytes;
    LayerSpec costed = spec;
    if (!costed.rho) costed.rho = cfg.scu.rho;
    t.baseline_cycles = layer_cycle_model(costed, cfg.scu).total();
    t.dense_ops = layer_dense_ops(spec);
    return t;
}

struct RowKey {
    int feature = 0;
    long row = 0;
    auto operator<=>(const RowKey&) const = default;
};

struct DeadlockSignal {};

/// Streaming schedule of one chain. The final layer walks its tile rows in
/// order; every missing input row is produced on demand by the layer
/// below, recursively, and rows are released as soon as the consumer's next
/// row group starts beyond them.
class ChainSimulator {
public:
    ChainSimulator(const ChainSpec& chain, const SimConfig& cfg, bool keep_trace)
        : chain_(chain), cfg_(cfg), keep_trace_(keep_trace), n_(chain.size()) {
        banks_.assign(static_cast<std::size_t>(cfg.buffer.num_banks), std::nullopt);
        computed_.assign(n_, 0);
        tiles_done_.assign(n_, 0);
        rows_done_.assign(n_, 0);
        for (const auto& l : chain.layers) {
            tilings_.push_back(layer_tiling(l));
            LayerSpec costed = l;
            if (!costed.rho) costed.rho = cfg.scu.rho;
            costed_.push_back(costed);
        }
    }

    void run() {
        const LayerSpec& sink = chain_.layers[n_ - 1];
        const AxisTiling& t = tilings_[n_ - 1].rows;
        const long in_h = static_cast<long>(sink.in_h);
        for (std::size_t tr = 0; tr < t.tiles; ++tr) {
            const long a = std::clamp(t.in_origin(tr), 0L, in_h);
            const long b = std::clamp(t.in_origin(tr) + t.patch, 0L, in_h);
            ensure(n_ - 1, b);
            read_rows(n_ - 1, a, b);
            account(n_ - 1, out_rows_of_tile(n_ - 1, tr));
            output_rows_written_ += static_cast<std::uint64_t>(out_rows_of_tile(n_ - 1, tr));
            release_below(n_ - 1, tr + 1 < t.tiles ? t.in_origin(tr + 1) : in_h);
        }
        verify();
    }

    int peak_banks() const noexcept { return peak_; }
    std::uint64_t compute_cycles(std::size_t l) const { return layer_clock(l); }
    std::uint64_t units() const noexcept { return units_; }
    std::vector<TraceEvent>& trace() noexcept { return trace_; }
    std::vector<BlockedRow> blocking() const {
        std::vector<BlockedRow> out;
        for (std::size_t b = 0; b < banks_.size(); ++b)
            if (banks_[b]) out.push_back({static_cast<int>(b), banks_[b]->feature, banks_[b]->row});
        return out;
    }

private:
    long out_rows_of_tile(std::size_t l, std::size_t tr) const {
        const AxisTiling& t = tilings_[l].rows;
        const long out_h = static_cast<long>(chain_.layers[l].out_h());
        return std::clamp(t.out_origin(tr) + t.out_step, 0L, out_h) - std::clamp(t.out_origin(tr), 0L, out_h);
    }

    std::uint64_t layer_clock(std::size_t l) const {
        const LayerSpec& spec = costed_[l];
        if (spec.algorithm == Algorithm::direct) return direct_cycles(spec, cfg_.scu, rows_done_[l]);
        return fast_tile_cycles(spec, cfg_.scu, tiles_done_[l]);
    }

    std::uint64_t now() const {
        std::uint64_t c = 0;
        for (std::size_t l = 0; l < n_; ++l) c += layer_clock(l);
        return c;
    }

    void emit(BankEvent e, int bank, const RowKey& k) {
        if (keep_trace_) trace_.push_back({now(), bank, e, k.feature, k.row});
    }

    /// One row group of layer l: a tile row across the full width.
    void account(std::size_t l, long out_rows) {
        tiles_done_[l] += tilings_[l].cols.tiles;
        rows_done_[l] += static_cast<std::uint64_t>(out_rows);
        ++units_;
        ++seq_;
    }

    void read_rows(std::size_t f, long a, long b) {
        for (long r = a; r < b; ++r) {
            const RowKey key{static_cast<int>(f), r};
            const auto it = live_.find(key);
            if (it == live_.end() || !banks_[static_cast<std::size_t>(it->second)] ||
                *banks_[static_cast<std::size_t>(it->second)] != key) {
                throw Error("chain '" + chain_.name + "': row " + std::to_string(r) + " of " + chain_.feature_name(f) +
                            " read while not resident");
            }
            last_read_[key] = seq_;
            emit(BankEvent::compute, it->second, key);
        }
    }

    void mark_inactive(std::size_t f, long a, long b) {
        if (!keep_trace_) return;
        for (long r = a; r < b; ++r) {
            const RowKey key{static_cast<int>(f), r};
            if (auto it = live_.find(key); it != live_.end()) emit(BankEvent::inactive, it->second, key);
        }
    }

    void free_bank(int bank) {
        const RowKey key = *banks_[static_cast<std::size_t>(bank)];
        emit(BankEvent::free, bank, key);
        freed_at_[key] = seq_;
        live_.erase(key);
        banks_[static_cast<std::size_t>(bank)].reset();
    }

    /// Preferred bank is row mod N; on conflict probe upward for a free bank
    /// or one holding a row that dies with the current group.
    void allocate(const RowKey& key, BankEvent how, long dying_below, int dying_feature) {
        const long N = static_cast<long>(banks_.size());
        for (long j = 0; j < N; ++j) {
            const int b = static_cast<int>((key.row + j) % N);
            auto& slot = banks_[static_cast<std::size_t>(b)];
            if (slot && !(slot->feature == dying_feature && slot->row < dying_below)) continue;
            if (slot) free_bank(b);
            slot = key;
            live_[key] = b;
            peak_ = std::max(peak_, static_cast<int>(live_.size()));
            emit(how, b, key);
            return;
        }
        throw DeadlockSignal{};
    }

    void release_below(std::size_t f, long row) {
        for (auto it = live_.begin(); it != live_.end();) {
            const RowKey key = it->first;
            ++it;
            if (key.feature == static_cast<int>(f) && key.row < row) free_bank(live_.at(key));
        }
    }

    /// Makes rows [computed, need_end) of feature f resident.
    void ensure(std::size_t f, long need_end) {
        while (computed_[f] < need_end) {
            if (f == 0) {
                allocate({0, computed_[0]}, BankEvent::load, -1, -1);
                ++computed_[0];
                ++input_rows_loaded_;
                continue;
            }
            const std::size_t l = f - 1; // producing layer, always a conv
            const LayerSpec& spec = chain_.layers[l];
            const AxisTiling& t = tilings_[l].rows;
            const long out_h = static_cast<long>(spec.out_h()), in_h = static_cast<long>(spec.in_h);
            const long a = computed_[f];
            long b = std::min(a + t.out_step, out_h);
            if (cfg_.buffer.tile_rows == TileRowMode::demand) b = std::min(b, need_end);
            const long halo = t.patch - t.out_step;
            const long xa = std::clamp(a + t.first_in, 0L, in_h);
            const long xb = std::clamp(b + t.first_in + halo, 0L, in_h);
            ensure(l, xb);
            read_rows(l, xa, xb);
            const long next_start = b + t.first_in;
            for (long r = a; r < b; ++r) allocate({static_cast<int>(f), r}, BankEvent::store, next_start, static_cast<int>(l));
            account(l, b - a);
            computed_[f] = b;
            release_below(l, next_start);
            mark_inactive(l, xa, xb);
        }
    }

    /// Replays the bookkeeping: nothing freed before its last read, every
    /// input row loaded once and every output row written once.
    void verify() const {
        for (const auto& [key, freed] : freed_at_) {
            const auto it = last_read_.find(key);
            if (it != last_read_.end() && it->second > freed) {
                throw Error("chain '" + chain_.name + "': row " + std::to_string(key.row) + " of feature " +
                            std::to_string(key.feature) + " read after release");
            }
        }
        if (input_rows_loaded_ != chain_.layers[0].in_h) {
            throw Error("chain '" + chain_.name + "': loaded " + std::to_string(input_rows_loaded_) + " input rows of " +
                        std::to_string(chain_.layers[0].in_h));
        }
        if (output_rows_written_ != chain_.layers[n_ - 1].out_h()) {
            throw Error("chain '" + chain_.name + "': wrote " + std::to_string(output_rows_written_) + " output rows of " +
                        std::to_string(chain_.layers[n_ - 1].out_h()));
        }
    }

    const ChainSpec& chain_;
    const SimConfig& cfg_;
    bool keep_trace_;
    std::size_t n_;
    std::vector<LayerTiling> tilings_;
    std::vector<LayerSpec> costed_;
    std::vector<std::optional<RowKey>> banks_;
    std::map<RowKey, int> live_;
    std::map<RowKey, std::uint64_t> last_read_;
    std::map<RowKey, std::uint64_t> freed_at_;
    std::vector<long> computed_;
    std::vector<std::uint64_t> tiles_done_;
    std::vector<std::uint64_t> rows_done_;
    std::vector<TraceEvent> trace_;
    std::uint64_t seq_ = 0;
    std::uint64_t units_ = 0;
    std::uint64_t input_rows_loaded_ = 0;
    std::uint64_t output_rows_written_ = 0;
    int peak_ = 0;
};

inline std::uint64_t widest_row_bytes(const ChainSpec& chain, const SimConfig& cfg) {
    std::uint64_t widest = 0;
    for (std::size_t f = 0; f < chain.size(); ++f) {
        const std::uint64_t bits = std::uint64_t{chain.feature_channels(f)} * chain.feature_cols(f) *
                                   static_cast<std::uint64_t>(cfg.activation_bits);
        widest = std::max(widest, bits_to_bytes(bits));
    }
    return widest;
}

} // namespace detail

/// Layer-by-layer execution: every layer moves its whole input, weights and
/// output across the off-chip boundary.
inline TrafficCycleReport simulate_baseline(const std::vector<LayerSpec>& layers, const SimConfig& cfg,
                                            const std::string& name = "baseline") {
    cfg.validate();
    TrafficCycleReport r;
    r.name = name;
    for (const auto& l : layers) {
        l.validate();
        LayerTraffic t = detail::baseline_traffic(l, cfg);
        t.reads = t.baseline_reads;
        t.writes = t.baseline_writes;
        t.cycles = t.baseline_cycles;
        r.layers.push_back(std::move(t));
    }
    for (std::size_t i = 1; i < layers.size(); ++i) r.intermediate_bytes += r.layers[i - 1].output_bytes;
    return r;
}

/// Fused execution of a chain with intermediates held in the row banks.
/// A schedule that runs out of banks reports completed = false together
/// with the rows that were holding every bank.
inline TrafficCycleReport simulate_chain(const ChainSpec& chain, const SimConfig& cfg, bool keep_trace = false) {
    cfg.validate();
    chain.validate();
    const std::uint64_t widest = detail::widest_row_bytes(chain, cfg);
    if (cfg.buffer.bank_capacity_bytes != 0 && cfg.buffer.bank_capacity_bytes < widest) {
        throw ConfigError("chain '" + chain.name + "': bank capacity " + std::to_string(cfg.buffer.bank_capacity_bytes) +
                          " bytes is below the widest row (" + std::to_string(widest) + " bytes)");
    }
    TrafficCycleReport r;
    r.name = chain.name;
    r.chained = true;
    r.num_banks = cfg.buffer.num_banks;
    r.bank_capacity_bytes = cfg.buffer.bank_capacity_bytes ? cfg.buffer.bank_capacity_bytes : widest;
    r.fill_cycles = static_cast<std::uint64_t>(cfg.scu.preu_fill + cfg.scu.postu_fill);
    for (std::size_t f = 0; f <= chain.size(); ++f) r.features.push_back(chain.feature_name(f));

    detail::ChainSimulator sim(chain, cfg, keep_trace);
    try {
        sim.run();
    } catch (const detail::DeadlockSignal&) {
        r.completed = false;
        r.blocking = sim.blocking();
    }
    r.peak_banks = sim.peak_banks();
    r.units = sim.units();
    r.trace = std::move(sim.trace());

    const std::size_t n = chain.size();
    for (std::size_t l = 0; l < n; ++l) {
        LayerTraffic t = detail::baseline_traffic(chain.layers[l], cfg);
        t.reads = t.weight_bytes + (l == 0 ? t.input_bytes : 0);
        t.writes = l + 1 == n ? t.output_bytes : 0;
        t.cycles = sim.compute_cycles(l);
        if (l + 1 < n) r.intermediate_bytes += t.output_bytes;
        r.layers.push_back(std::move(t));
    }
    return r;
}

/// Smallest bank count for which the chain schedules without deadlock.
inline int min_banks(const ChainSpec& chain, SimConfig cfg, int limit = 4096) {
    for (int nb = 1; nb <= limit; ++nb) {
        cfg.buffer.num_banks = nb;
        if (simulate_chain(chain, cfg).completed) return nb;
    }
    throw Error("chain '" + chain.name + "' does not schedule with " + std::to_string(limit) + " banks");
}

/// baseline - chained traffic, which the dataflow forces to equal twice the
/// intermediate feature bytes since weights move once in both modes.
inline bool accounting_identity_holds(const TrafficCycleReport& chained) {
    return chained.baseline_traffic() - chained.traffic() == 2 * chained.intermediate_bytes;
}

} // namespace nvca
