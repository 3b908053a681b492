#pragma once

#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nvca/chain_sim.hpp"
#include "nvca/engine.hpp"
#include "nvca/netgraph.hpp"

namespace nvca {

using Json = nlohmann::ordered_json;

inline Json to_json(const SimConfig& c) {
    return Json{{"frequency_hz", c.scu.frequency_hz},
                {"pif", c.scu.pif},
                {"pof", c.scu.pof},
                {"rho", std::to_string(c.scu.rho.num) + "/" + std::to_string(c.scu.rho.den)},
                {"convs_per_pass", c.scu.convs_per_pass},
                {"num_banks", c.buffer.num_banks},
                {"bank_capacity_bytes", c.buffer.bank_capacity_bytes},
                {"tile_rows", to_string(c.buffer.tile_rows)},
                {"preu_fill", c.scu.preu_fill},
                {"postu_fill", c.scu.postu_fill},
                {"activation_bits", c.activation_bits},
                {"weight_bits", c.weight_bits},
                {"index_bits", c.index_bits},
                {"dram_word_bytes", c.dram_word_bytes}};
}

inline Json to_json(const LayerTraffic& t) {
    return Json{{"name", t.name},
                {"module", t.module},
                {"kind", t.kind},
                {"input_bytes", t.input_bytes},
                {"output_bytes", t.output_bytes},
                {"weight_bytes", t.weight_bytes},
                {"reads", t.reads},
                {"writes", t.writes},
                {"cycles", t.cycles},
                {"baseline_reads", t.baseline_reads},
                {"baseline_writes", t.baseline_writes},
                {"baseline_cycles", t.baseline_cycles},
                {"dense_ops", t.dense_ops}};
}

inline Json to_json(const TrafficCycleReport& r) {
    Json layers = Json::array();
    for (const auto& l : r.layers) layers.push_back(to_json(l));
    Json blocking = Json::array();
    for (const auto& b : r.blocking)
        blocking.push_back({{"bank", b.bank}, {"feature", r.features.at(static_cast<std::size_t>(b.feature))}, {"row", b.row}});
    Json j{{"name", r.name},
           {"chained", r.chained},
           {"completed", r.completed},
           {"num_banks", r.num_banks},
           {"peak_banks", r.peak_banks},
           {"bank_capacity_bytes", r.bank_capacity_bytes},
           {"features", r.features},
           {"layers", layers},
           {"totals",
            {{"reads", r.reads()},
             {"writes", r.writes()},
             {"traffic", r.traffic()},
             {"cycles", r.cycles()},
             {"fill_cycles", r.fill_cycles},
             {"baseline_reads", r.baseline_reads()},
             {"baseline_writes", r.baseline_writes()},
             {"baseline_traffic", r.baseline_traffic()},
             {"baseline_cycles", r.baseline_cycles()},
             {"intermediate_bytes", r.intermediate_bytes},
             {"accounting_identity", accounting_identity_holds(r)},
             {"reduction", r.reduction()}}}};
    if (!r.completed) j["blocking"] = blocking;
    return j;
}

inline Json module_row(const ModuleTraffic& m) {
    return Json{{"module", m.module},
                {"baseline_bytes", m.baseline_bytes},
                {"chained_bytes", m.chained_bytes},
                {"baseline_cycles", m.baseline_cycles},
                {"chained_cycles", m.chained_cycles},
                {"reduction", m.reduction()}};
}

inline Json to_json(const GraphReport& g, const SimConfig& cfg) {
    Json parts = Json::array();
    for (const auto& p : g.parts) parts.push_back(to_json(p));
    Json modules = Json::array();
    for (const auto& m : g.modules) modules.push_back(module_row(m));
    const double seconds = g.frame.seconds;
    return Json{{"report", "traffic"},
                {"name", g.name},
                {"config", to_json(cfg)},
                {"completed", g.completed()},
                {"parts", parts},
                {"modules", modules},
                {"totals",
                 {{"traffic", g.traffic()},
                  {"baseline_traffic", g.baseline_traffic()},
                  {"reduction", g.reduction()}}},
                {"frame_estimate",
                 {{"cycles", g.frame.cycles},
                  {"seconds", seconds},
                  {"fps", g.frame.fps},
                  {"dense_ops", g.dense_ops},
                  {"dense_equivalent_gops", seconds > 0 ? static_cast<double>(g.dense_ops) / seconds / 1e9 : 0.0},
                  {"peak_raw_gops", peak_throughput_ops(cfg.scu) / 1e9},
                  {"caveat", "cycle model only; boundary layer costs are configured estimates and DRAM timing is not modeled"}}}};
}

/// CSV bank-occupancy trace of every chained part.
inline std::string trace_csv(const GraphReport& g) {
    std::ostringstream out;
    out << "chain,cycle,bank,state,feature,row\n";
    for (const auto& p : g.parts)
        for (const auto& e : p.trace)
            out << p.name << ',' << e.cycle << ',' << e.bank << ',' << to_string(e.state) << ','
                << p.features.at(static_cast<std::size_t>(e.feature)) << ',' << e.row << '\n';
    return out.str();
}

/// Sums the per-module tables of several traffic reports.
inline std::vector<ModuleTraffic> merge_module_tables(const std::vector<Json>& reports) {
    std::map<std::string, ModuleTraffic> acc;
    for (const auto& r : reports) {
        if (!r.contains("modules") || !r["modules"].is_array()) throw ParseError("report input has no 'modules' table");
        for (const auto& m : r["modules"]) {
            const std::string name = m.at("module").get<std::string>();
            auto& t = acc[name];
            t.module = name;
            t.baseline_bytes += m.at("baseline_bytes").get<std::uint64_t>();
            t.chained_bytes += m.at("chained_bytes").get<std::uint64_t>();
            t.baseline_cycles += m.at("baseline_cycles").get<std::uint64_t>();
            t.chained_cycles += m.at("chained_cycles").get<std::uint64_t>();
        }
    }
    std::vector<ModuleTraffic> out;
    for (auto& [_, m] : acc) out.push_back(m);
    return out;
}

inline ModuleTraffic module_total(const std::vector<ModuleTraffic>& rows) {
    ModuleTraffic t;
    t.module = "total";
    for (const auto& m : rows) {
        t.baseline_bytes += m.baseline_bytes;
        t.chained_bytes += m.chained_bytes;
        t.baseline_cycles += m.baseline_cycles;
        t.chained_cycles += m.chained_cycles;
    }
    return t;
}

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string format_module_table(const std::vector<ModuleTraffic>& rows, const std::string& format) {
    const ModuleTraffic total = module_total(rows);
    std::ostringstream out;
    if (format == "json") {
        Json j{{"report", "module-traffic"}};
        Json arr = Json::array();
        for (const auto& m : rows) arr.push_back(module_row(m));
        j["modules"] = arr;
        j["total"] = module_row(total);
        out << j.dump(2) << '\n';
    } else if (format == "csv") {
        out << "module,baseline_bytes,chained_bytes,baseline_gbytes,chained_gbytes,reduction_pct\n";
        for (const auto* m : [&] {
                 std::vector<const ModuleTraffic*> all;
                 for (const auto& r : rows) all.push_back(&r);
                 all.push_back(&total);
                 return all;
             }())
            out << m->module << ',' << m->baseline_bytes << ',' << m->chained_bytes << ','
                << fixed(static_cast<double>(m->baseline_bytes) / 1e9, 6) << ','
                << fixed(static_cast<double>(m->chained_bytes) / 1e9, 6) << ',' << fixed(100.0 * m->reduction(), 2) << '\n';
    } else if (format == "md") {
        out << "| module | baseline (GB) | chained (GB) | reduction |\n";
        out << "|---|---:|---:|---:|\n";
        auto row = [&](const ModuleTraffic& m, bool bold) {
            const std::string b = bold ? "**" : "";
            out << "| " << b << m.module << b << " | " << fixed(static_cast<double>(m.baseline_bytes) / 1e9, 4) << " | "
                << fixed(static_cast<double>(m.chained_bytes) / 1e9, 4) << " | " << fixed(100.0 * m.reduction(), 1)
                << "% |\n";
        };
        for (const auto& m : rows) row(m, false);
        row(total, true);
    } else {
        throw ConfigError("unknown report format '" + format + "' (expected json, csv or md)");
    }
    return out.str();
}

} // namespace nvca
