#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nvca/binary_io.hpp"
#include "nvca/chain_sim.hpp"
#include "nvca/engine.hpp"
#include "nvca/layer.hpp"
#include "nvca/netgraph.hpp"
#include "nvca/pruning.hpp"
#include "nvca/random.hpp"
#include "nvca/report.hpp"
#include "nvca/sparse_bank_io.hpp"
#include "nvca/tensor_io.hpp"
#include "nvca/verify.hpp"

using namespace nvca;

namespace {

struct Globals {
    int threads = 1;
    std::uint64_t seed = 1;
};

std::string hex64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_json(const std::string& path, const Json& j) { io::write_text_file(path, j.dump(2) + "\n"); }

FxpFormat parse_format(const std::string& text) {
    const auto slash = text.find('/');
    if (slash == std::string::npos) throw ConfigError("fixed-point format must be total/fraction, got '" + text + "'");
    FxpFormat f{std::stoi(text.substr(0, slash)), std::stoi(text.substr(slash + 1)), true};
    f.validate();
    return f;
}

Shape parse_shape(const std::string& text) {
    std::vector<std::size_t> dims;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) dims.push_back(static_cast<std::size_t>(std::stoull(part)));
    if (dims.size() != 4) throw ConfigError("shape must be b,c,h,w, got '" + text + "'");
    return {dims[0], dims[1], dims[2], dims[3]};
}

bool has_magic(const std::string& path, const char* magic) {
    std::ifstream in(path, std::ios::binary);
    char buf[4] = {};
    in.read(buf, 4);
    return in.gcount() == 4 && std::equal(buf, buf + 4, magic);
}

// ---- random-tensor --------------------------------------------------------

int cmd_random_tensor(const Globals& g, const std::string& shape_text, const std::string& fxp, int bits,
                      const std::string& out) {
    const Shape shape = parse_shape(shape_text);
    Rng rng(g.seed);
    RealTensor t(shape);
    for (auto& v : t.data()) v = rng.dyadic(bits);
    if (fxp.empty()) {
        write_tensor(out, t);
    } else {
        const auto q = quantize(t, parse_format(fxp));
        write_tensor(out, q.tensor);
    }
    std::cout << "wrote " << shape.str() << " to " << out << "\n";
    return 0;
}

// ---- verify-kernels -------------------------------------------------------

int cmd_verify(const Globals& g, std::uint64_t trials, const std::string& report) {
    const auto checks = verify_kernels(trials, g.seed, g.threads);
    bool ok = true;
    Json arr = Json::array();
    for (const auto& c : checks) {
        std::cout << (c.passed ? "ok   " : "FAIL ") << c.name << ": trials " << c.trials << ", max abs error "
                  << c.max_abs_error << (c.detail.empty() ? "" : " (" + c.detail + ")") << "\n";
        ok = ok && c.passed;
        arr.push_back({{"name", c.name},
                       {"trials", c.trials},
                       {"max_abs_error", c.max_abs_error},
                       {"tolerance", c.tolerance},
                       {"passed", c.passed},
                       {"detail", c.detail}});
    }
    if (!report.empty()) write_json(report, Json{{"report", "verify-kernels"}, {"seed", g.seed}, {"passed", ok}, {"checks", arr}});
    if (!ok) std::cerr << "verify-kernels: mismatch against the reference\n";
    return ok ? 0 : 1;
}

// ---- prune ----------------------------------------------------------------

int cmd_prune(const std::string& weights, const std::string& rho_text, const std::string& policy_text,
              const std::string& out, const std::string& report, bool conformance) {
    const AnyTensor any = read_tensor(weights);
    QTensor w;
    std::size_t saturated = 0;
    if (const auto* r = std::get_if<RealTensor>(&any)) {
        auto q = quantize(*r, kWeightFormat);
        w = std::move(q.tensor);
        saturated = q.saturated;
    } else {
        w = std::get<QTensor>(any);
    }
    const std::size_t k = w.shape().rows;
    if (w.shape().cols != k || (k != 3 && k != 4)) {
        throw ShapeError("prune: weights must be cout x cin x 3 x 3 (conv) or x 4 x 4 (deconv), got " + w.shape().str());
    }
    const TransformSet ts = k == 3 ? builtin_conv_f2x2_3x3() : builtin_deconv_t3_6x6_4x4();
    const Rho rho = parse_rho(rho_text);
    const MaskPolicy policy = parse_mask_policy(policy_text);
    const auto pruned = prune_weights(ts, w, rho, policy, CompressOptions{conformance});
    write_sparse_bank(out, pruned.bank);

    std::map<std::size_t, std::size_t> histogram;
    for (const auto& kern : pruned.bank.kernels) ++histogram[kern.nnz()];
    std::vector<double> zetas;
    for (const auto& m : pruned.masks) zetas.push_back(m.zeta);
    std::sort(zetas.begin(), zetas.end());
    const double zmin = zetas.front(), zmax = zetas.back(), zmed = zetas[zetas.size() / 2];

    std::cout << ts.name << " bank " << pruned.bank.cout << "x" << pruned.bank.cin << ", rho " << rho.num << "/" << rho.den
              << ", policy " << to_string(policy) << ", format " << pruned.bank.format->total_bits << "/"
              << pruned.bank.format->fraction_bits << "\n";
    std::cout << "zeta min " << zmin << " median " << zmed << " max " << zmax << "\n";
    for (const auto& [nnz, count] : histogram) std::cout << "nnz " << nnz << ": " << count << " kernels\n";
    if (saturated) std::cerr << "prune: " << saturated << " weights saturated while quantizing\n";

    if (!report.empty()) {
        Json hist = Json::object();
        for (const auto& [nnz, count] : histogram) hist[std::to_string(nnz)] = count;
        write_json(report, Json{{"report", "prune"},
                                {"transform", ts.name},
                                {"cin", pruned.bank.cin},
                                {"cout", pruned.bank.cout},
                                {"rho", std::to_string(rho.num) + "/" + std::to_string(rho.den)},
                                {"policy", to_string(policy)},
                                {"zeta_min", zmin},
                                {"zeta_median", zmed},
                                {"zeta_max", zmax},
                                {"nnz_histogram", hist},
                                {"total_nnz", pruned.bank.total_nnz()},
                                {"saturated_weights", saturated},
                                {"bank_fnv1a", hex64(io::fnv1a(encode_sparse_bank(pruned.bank)))}});
    }
    return 0;
}

// ---- run-layer ------------------------------------------------------------

int cmd_run_layer(const Globals& g, const std::string& spec_path, const std::string& input, const std::string& weights,
                  const std::string& out, bool fxp, const std::string& report) {
    std::ifstream sf(spec_path);
    if (!sf) throw Error("cannot open layer spec '" + spec_path + "'");
    const LayerSpec spec = parse_layer_spec(sf);
    const AnyTensor x_any = read_tensor(input);
    const ExecOptions opts{g.threads};
    const bool sparse_weights = has_magic(weights, "NVCS");

    std::vector<std::uint8_t> bytes;
    std::size_t saturated = 0;
    std::string mode;
    if (fxp) {
        QTensor x;
        if (const auto* r = std::get_if<RealTensor>(&x_any)) {
            auto q = quantize(*r, spec.act_format);
            x = std::move(q.tensor);
            saturated += q.saturated;
        } else {
            x = std::get<QTensor>(x_any);
        }
        FxpLayerResult res;
        if (sparse_weights) {
            res = run_layer(x, read_sparse_bank(weights), spec, opts);
        } else {
            const AnyTensor w_any = read_tensor(weights);
            QTensor w;
            if (const auto* r = std::get_if<RealTensor>(&w_any)) {
                auto q = quantize(*r, spec.weight_format);
                w = std::move(q.tensor);
                saturated += q.saturated;
            } else {
                w = std::get<QTensor>(w_any);
            }
            res = run_layer(x, w, spec, opts);
        }
        saturated += res.saturated;
        bytes = encode_tensor(res.output);
        mode = "fxp";
    } else {
        const RealTensor x = std::holds_alternative<RealTensor>(x_any) ? std::get<RealTensor>(x_any)
                                                                       : dequantize(std::get<QTensor>(x_any));
        RealTensor y;
        if (sparse_weights) {
            y = run_layer(x, to_real_bank(read_sparse_bank(weights)), spec, opts);
        } else {
            const AnyTensor w_any = read_tensor(weights);
            const RealTensor w = std::holds_alternative<RealTensor>(w_any) ? std::get<RealTensor>(w_any)
                                                                           : dequantize(std::get<QTensor>(w_any));
            y = run_layer(x, w, spec, opts);
        }
        bytes = encode_tensor(y);
        mode = "real";
    }
    io::write_file(out, bytes);
    const std::string checksum = hex64(io::fnv1a(bytes));
    std::cout << "checksum " << checksum << "\n";
    if (saturated) std::cerr << "run-layer: " << saturated << " values saturated\n";
    if (!report.empty()) {
        write_json(report, Json{{"report", "run-layer"},
                                {"layer", format_layer_fields(spec)},
                                {"mode", mode},
                                {"weights", sparse_weights ? "sparse-bank" : "dense"},
                                {"output_shape", std::to_string(spec.cout) + "x" + std::to_string(spec.out_h()) + "x" +
                                                     std::to_string(spec.out_w())},
                                {"saturated", saturated},
                                {"checksum", checksum}});
    }
    return 0;
}

// ---- simulate-chain -------------------------------------------------------

int cmd_simulate(const std::string& graph_path, const std::string& config_path, const std::string& report,
                 const std::string& trace) {
    std::ifstream cf(config_path);
    if (!cf) throw Error("cannot open config '" + config_path + "'");
    const SimConfig cfg = parse_sim_config(cf);
    const NetGraph g = load_netgraph_file(graph_path);
    const GraphReport r = simulate_graph(g, cfg, graph_path.substr(graph_path.find_last_of('/') + 1), !trace.empty());
    write_json(report, to_json(r, cfg));
    if (!trace.empty()) io::write_text_file(trace, trace_csv(r));
    for (const auto& p : r.parts) {
        if (!p.completed) {
            std::cerr << "simulate-chain: chain '" << p.name << "' deadlocked with " << p.num_banks
                      << " banks; rows holding every bank:";
            for (const auto& b : p.blocking)
                std::cerr << " [bank " << b.bank << ": " << p.features.at(static_cast<std::size_t>(b.feature)) << " row "
                          << b.row << "]";
            std::cerr << "\n";
        }
    }
    std::cout << "chains " << std::count_if(r.parts.begin(), r.parts.end(), [](const auto& p) { return p.chained; })
              << ", off-chip traffic " << r.traffic() << " bytes vs baseline " << r.baseline_traffic()
              << " bytes, reduction " << fixed(100.0 * r.reduction(), 2) << "%\n";
    std::cout << "frame estimate " << r.frame.cycles << " cycles, " << fixed(r.frame.fps, 2)
              << " fps (cycle model only)\n";
    return r.completed() ? 0 : 1;
}

// ---- report ---------------------------------------------------------------

int cmd_report(const std::vector<std::string>& inputs, const std::string& format, const std::string& out) {
    std::vector<Json> reports;
    for (const auto& path : inputs) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open report '" + path + "'");
        try {
            reports.push_back(Json::parse(in));
        } catch (const Json::parse_error& e) {
            throw ParseError("report '" + path + "': " + e.what());
        }
    }
    const std::string text = format_module_table(merge_module_tables(reports), format);
    if (out.empty()) {
        std::cout << text;
    } else {
        io::write_text_file(out, text);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse fast conv/deconv reference engine and layer-chain simulator"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1, 256));
    app.add_option("--seed", g.seed, "Random seed");

    auto* rt = app.add_subcommand("random-tensor", "Write a seeded random tensor file");
    std::string rt_shape, rt_fxp, rt_out;
    int rt_bits = 8;
    rt->add_option("--shape", rt_shape, "b,c,h,w")->required();
    rt->add_option("--fxp", rt_fxp, "Quantize to total/fraction bits, e.g. 12/9");
    rt->add_option("--bits", rt_bits, "Fraction bits of the dyadic values in [-1, 1)")->check(CLI::Range(0, 30));
    rt->add_option("--out", rt_out, "Output tensor file")->required();

    auto* vk = app.add_subcommand("verify-kernels", "Check fast tiles against brute-force references");
    std::uint64_t vk_trials = 10000;
    std::string vk_report;
    vk->add_option("--trials", vk_trials, "Random tiles per check");
    vk->add_option("--report", vk_report, "JSON report file");

    auto* pr = app.add_subcommand("prune", "Transform, score, mask and compress a weight tensor");
    std::string pr_weights, pr_rho = "0.5", pr_policy = "per-kernel", pr_out, pr_report;
    bool pr_conf = false;
    pr->add_option("--weights", pr_weights, "Weight tensor (cout x cin x k x k)")->required();
    pr->add_option("--rho", pr_rho, "Sparsity, decimal or a/b");
    pr->add_option("--policy", pr_policy, "per-kernel or shared");
    pr->add_option("--out", pr_out, "Sparse bank output")->required();
    pr->add_option("--report", pr_report, "JSON report file");
    pr->add_flag("--conformance", pr_conf, "Reject kernels over the multiplier budget");

    auto* rl = app.add_subcommand("run-layer", "Execute one layer");
    std::string rl_spec, rl_input, rl_weights, rl_out, rl_report;
    bool rl_fxp = false;
    rl->add_option("--spec", rl_spec, "Layer spec (key=value)")->required();
    rl->add_option("--input", rl_input, "Input tensor")->required();
    rl->add_option("--weights", rl_weights, "Dense weight tensor or sparse bank")->required();
    rl->add_option("--out", rl_out, "Output tensor")->required();
    rl->add_option("--report", rl_report, "JSON report file");
    rl->add_flag("--fxp", rl_fxp, "Fixed-point execution");

    auto* sc = app.add_subcommand("simulate-chain", "Simulate fused chains and the layer-by-layer baseline");
    std::string sc_graph, sc_config, sc_report, sc_trace;
    sc->add_option("--graph", sc_graph, "Layer graph file")->required();
    sc->add_option("--config", sc_config, "Simulator config")->required();
    sc->add_option("--report", sc_report, "JSON report file")->required();
    sc->add_option("--trace", sc_trace, "CSV bank-occupancy trace");

    auto* rp = app.add_subcommand("report", "Merge traffic reports into a per-module table");
    std::vector<std::string> rp_inputs;
    std::string rp_format = "md", rp_out;
    rp->add_option("--inputs", rp_inputs, "Traffic report JSON files")->required();
    rp->add_option("--format", rp_format, "json, csv or md")->check(CLI::IsMember({"json", "csv", "md"}));
    rp->add_option("--out", rp_out, "Output file (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*rt) return cmd_random_tensor(g, rt_shape, rt_fxp, rt_bits, rt_out);
        if (*vk) return cmd_verify(g, vk_trials, vk_report);
        if (*pr) return cmd_prune(pr_weights, pr_rho, pr_policy, pr_out, pr_report, pr_conf);
        if (*rl) return cmd_run_layer(g, rl_spec, rl_input, rl_weights, rl_out, rl_fxp, rl_report);
        if (*sc) return cmd_simulate(sc_graph, sc_config, sc_report, sc_trace);
        if (*rp) return cmd_report(rp_inputs, rp_format, rp_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
