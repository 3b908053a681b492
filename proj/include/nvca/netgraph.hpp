#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nvca/chain_sim.hpp"
#include "nvca/error.hpp"
#include "nvca/layer.hpp"

namespace nvca {

struct GraphEdge {
    std::size_t src = 0;
    std::size_t dst = 0;
    friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

/// Layer graph in declaration order. Node ids are the layer names.
/// A node with several producers reads their outputs concatenated along
/// channels, so its cin is the sum of their couts.
struct NetGraph {
    std::vector<LayerSpec> nodes;
    std::vector<GraphEdge> edges;

    std::size_t index_of(const std::string& id) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].name == id) return i;
        throw ConfigError("graph: unknown node '" + id + "'");
    }
    std::vector<std::size_t> producers(std::size_t v) const {
        std::vector<std::size_t> out;
        for (const auto& e : edges)
            if (e.dst == v) out.push_back(e.src);
        return out;
    }
    std::vector<std::size_t> consumers(std::size_t v) const {
        std::vector<std::size_t> out;
        for (const auto& e : edges)
            if (e.src == v) out.push_back(e.dst);
        return out;
    }
    std::string edge_name(const GraphEdge& e) const { return nodes[e.src].name + " -> " + nodes[e.dst].name; }

    friend bool operator==(const NetGraph&, const NetGraph&) = default;
};

/// Kahn order; among ready nodes the earliest declared goes first.
inline std::vector<std::size_t> topological_order(const NetGraph& g) {
    std::vector<std::size_t> indegree(g.nodes.size(), 0);
    for (const auto& e : g.edges) ++indegree[e.dst];
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t v = 0; v < g.nodes.size(); ++v)
        if (indegree[v] == 0) ready.push(v);
    std::vector<std::size_t> order;
    while (!ready.empty()) {
        const std::size_t v = ready.top();
        ready.pop();
        order.push_back(v);
        for (const auto& e : g.edges)
            if (e.src == v && --indegree[e.dst] == 0) ready.push(e.dst);
    }
    if (order.size() != g.nodes.size()) {
        std::string stuck;
        for (std::size_t v = 0; v < g.nodes.size(); ++v)
            if (indegree[v] != 0) stuck += (stuck.empty() ? "" : ", ") + g.nodes[v].name;
        throw ConfigError("graph has a cycle through: " + stuck);
    }
    return order;
}

inline void validate_netgraph(const NetGraph& g) {
    std::set<std::string> ids;
    for (const auto& n : g.nodes) {
        if (n.name.empty()) throw ConfigError("graph: node without an id");
        if (!ids.insert(n.name).second) throw ConfigError("graph: duplicate node '" + n.name + "'");
        n.validate();
    }
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& e : g.edges) {
        if (e.src >= g.nodes.size() || e.dst >= g.nodes.size()) throw ConfigError("graph: edge endpoint out of range");
        if (e.src == e.dst) throw ConfigError("graph: self-loop on '" + g.nodes[e.src].name + "'");
        if (!seen.insert({e.src, e.dst}).second) throw ConfigError("graph: duplicate edge " + g.edge_name(e));
    }
    topological_order(g);
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
        const LayerSpec& dst = g.nodes[v];
        std::size_t channels = 0;
        bool any = false;
        for (const auto& e : g.edges) {
            if (e.dst != v) continue;
            any = true;
            const LayerSpec& src = g.nodes[e.src];
            channels += src.cout;
            if (src.out_h() != dst.in_h || src.out_w() != dst.in_w) {
                throw ShapeError("graph edge " + g.edge_name(e) + ": producer emits " + std::to_string(src.out_h()) + "x" +
                                 std::to_string(src.out_w()) + ", consumer expects " + std::to_string(dst.in_h) + "x" +
                                 std::to_string(dst.in_w));
            }
        }
        if (any && channels != dst.cin) {
            std::string list;
            for (const auto& e : g.edges)
                if (e.dst == v) list += (list.empty() ? "" : ", ") + g.edge_name(e);
            throw ShapeError("graph edge " + list + ": producers supply " + std::to_string(channels) + " channels, '" +
                             dst.name + "' expects cin=" + std::to_string(dst.cin));
        }
    }
}

/// Line format: `node <id> key=value ...`, `edge <src> <dst>`, '#' comments.
inline NetGraph load_netgraph(std::istream& in) {
    NetGraph g;
    std::map<std::string, std::size_t> index;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream tok(line);
        std::string head;
        if (!(tok >> head)) continue;
        const std::string where = "graph line " + std::to_string(lineno) + ": ";
        if (head == "node") {
            LayerSpec spec;
            if (!(tok >> spec.name)) throw ParseError(where + "node without an id");
            if (index.count(spec.name)) throw ParseError(where + "duplicate node '" + spec.name + "'");
            std::string field;
            while (tok >> field) {
                const auto eq = field.find('=');
                if (eq == std::string::npos) throw ParseError(where + "expected key=value, got '" + field + "'");
                try {
                    apply_layer_field(spec, field.substr(0, eq), field.substr(eq + 1));
                } catch (const ConfigError& e) {
                    throw ParseError(where + e.what());
                }
            }
            index[spec.name] = g.nodes.size();
            g.nodes.push_back(std::move(spec));
        } else if (head == "edge") {
            std::string a, b, extra;
            if (!(tok >> a >> b) || (tok >> extra)) throw ParseError(where + "expected 'edge <src> <dst>'");
            const auto ia = index.find(a), ib = index.find(b);
            if (ia == index.end()) throw ParseError(where + "edge " + a + " -> " + b + ": unknown node '" + a + "'");
            if (ib == index.end()) throw ParseError(where + "edge " + a + " -> " + b + ": unknown node '" + b + "'");
            g.edges.push_back({ia->second, ib->second});
        } else {
            throw ParseError(where + "unknown directive '" + head + "'");
        }
    }
    validate_netgraph(g);
    return g;
}

inline NetGraph load_netgraph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open graph file '" + path + "'");
    return load_netgraph(in);
}

inline std::string save_netgraph(const NetGraph& g) {
    std::ostringstream out;
    for (const auto& n : g.nodes) out << "node " << n.name << ' ' << format_layer_fields(n) << '\n';
    for (const auto& e : g.edges) out << "edge " << g.nodes[e.src].name << ' ' << g.nodes[e.dst].name << '\n';
    return out.str();
}

struct ChainExtraction {
    std::vector<ChainSpec> chains;
    std::vector<std::vector<std::size_t>> chain_nodes;
    std::vector<std::size_t> residue; ///< boundaries and layers that fuse with nothing
};

/// Greedy longest runs along single-producer/single-consumer conv paths,
/// closed by at most one deconv, visited in topological order. A fan-out
/// ends a run: its rows have more than one consumer and cannot be released
/// by the chain alone.
inline ChainExtraction extract_chains(const NetGraph& g, std::size_t max_layers = 0) {
    ChainExtraction out;
    std::vector<bool> taken(g.nodes.size(), false);
    for (const std::size_t v : topological_order(g)) {
        if (taken[v]) continue;
        taken[v] = true;
        if (g.nodes[v].is_boundary()) {
            out.residue.push_back(v);
            continue;
        }
        std::vector<std::size_t> run{v};
        std::size_t cur = v;
        while (g.nodes[cur].kind == LayerKind::conv3x3s1 && (max_layers == 0 || run.size() < max_layers)) {
            const auto next = g.consumers(cur);
            if (next.size() != 1) break;
            const std::size_t c = next.front();
            if (taken[c] || g.nodes[c].is_boundary() || g.producers(c).size() != 1) break;
            run.push_back(c);
            taken[c] = true;
            cur = c;
        }
        if (run.size() < 2) {
            out.residue.push_back(v);
            continue;
        }
        ChainSpec chain;
        chain.name = g.nodes[run.front()].name + ".." + g.nodes[run.back()].name;
        for (auto n : run) chain.layers.push_back(g.nodes[n]);
        out.chains.push_back(std::move(chain));
        out.chain_nodes.push_back(std::move(run));
    }
    return out;
}

struct ModuleTraffic {
    std::string module;
    std::uint64_t baseline_bytes = 0;
    std::uint64_t chained_bytes = 0;
    std::uint64_t baseline_cycles = 0;
    std::uint64_t chained_cycles = 0;
    double reduction() const noexcept {
        return baseline_bytes == 0 ? 0.0 : 1.0 - static_cast<double>(chained_bytes) / static_cast<double>(baseline_bytes);
    }
};

struct FrameEstimate {
    std::uint64_t cycles = 0;
    double seconds = 0.0;
    double fps = 0.0; ///< 0 for an empty graph
};

struct GraphReport {
    std::string name;
    std::vector<TrafficCycleReport> parts; ///< chains and residue layers in topological order
    std::vector<ModuleTraffic> modules;    ///< sorted by module name
    FrameEstimate frame;
    std::uint64_t dense_ops = 0;

    bool completed() const noexcept {
        for (const auto& p : parts)
            if (!p.completed) return false;
        return true;
    }
    std::uint64_t traffic() const noexcept {
        std::uint64_t s = 0;
        for (const auto& p : parts) s += p.traffic();
        return s;
    }
    std::uint64_t baseline_traffic() const noexcept {
        std::uint64_t s = 0;
        for (const auto& p : parts) s += p.baseline_traffic();
        return s;
    }
    double reduction() const noexcept {
        const auto base = baseline_traffic();
        return base == 0 ? 0.0 : 1.0 - static_cast<double>(traffic()) / static_cast<double>(base);
    }
};

inline std::string module_of(const LayerSpec& l) { return l.module.empty() ? std::string("unassigned") : l.module; }

inline std::vector<ModuleTraffic> module_table(const std::vector<TrafficCycleReport>& parts,
                                               const std::vector<std::vector<std::string>>& modules) {
    std::map<std::string, ModuleTraffic> acc;
    for (std::size_t p = 0; p < parts.size(); ++p)
        for (std::size_t l = 0; l < parts[p].layers.size(); ++l) {
            const auto& t = parts[p].layers[l];
            auto& m = acc[modules[p][l]];
            m.module = modules[p][l];
            m.baseline_bytes += t.baseline_reads + t.baseline_writes;
            m.chained_bytes += t.reads + t.writes;
            m.baseline_cycles += t.baseline_cycles;
            m.chained_cycles += t.cycles;
        }
    // pipeline fill belongs to the chain; charge it to the chain's first layer
    for (std::size_t p = 0; p < parts.size(); ++p)
        if (!parts[p].layers.empty()) acc[modules[p][0]].chained_cycles += parts[p].fill_cycles;
    std::vector<ModuleTraffic> out;
    for (auto& [_, m] : acc) out.push_back(m);
    return out;
}

/// Simulates every extracted chain fused and every residue layer
/// layer-by-layer.
inline GraphReport simulate_graph(const NetGraph& g, const SimConfig& cfg, const std::string& name = "graph",
                                  bool keep_trace = false) {
    validate_netgraph(g);
    const ChainExtraction ex = extract_chains(g);
    std::map<std::size_t, std::size_t> chain_of_first;
    for (std::size_t c = 0; c < ex.chain_nodes.size(); ++c) chain_of_first[ex.chain_nodes[c].front()] = c;
    std::set<std::size_t> residue(ex.residue.begin(), ex.residue.end());

    GraphReport r;
    r.name = name;
    std::vector<std::vector<std::string>> modules;
    for (const std::size_t v : topological_order(g)) {
        if (auto it = chain_of_first.find(v); it != chain_of_first.end()) {
            r.parts.push_back(simulate_chain(ex.chains[it->second], cfg, keep_trace));
            modules.emplace_back();
            for (const auto& l : ex.chains[it->second].layers) modules.back().push_back(module_of(l));
        } else if (residue.count(v)) {
            r.parts.push_back(simulate_baseline({g.nodes[v]}, cfg, g.nodes[v].name));
            modules.push_back({module_of(g.nodes[v])});
        }
    }
    r.modules = module_table(r.parts, modules);
    for (const auto& p : r.parts) {
        r.frame.cycles += p.cycles();
        for (const auto& l : p.layers) r.dense_ops += l.dense_ops;
    }
    r.frame.seconds = static_cast<double>(r.frame.cycles) / cfg.scu.frequency_hz;
    r.frame.fps = r.frame.seconds > 0 ? 1.0 / r.frame.seconds : 0.0;
    return r;
}

/// Model-only decode time of one frame: chain and residue cycles at the
/// configured clock. Boundary layers contribute their declared cycles.
inline FrameEstimate frame_latency_estimate(const NetGraph& g, const SimConfig& cfg) {
    return simulate_graph(g, cfg).frame;
}

} // namespace nvca
