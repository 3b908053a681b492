#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "nvca/chain_sim.hpp"
#include "nvca/netgraph.hpp"
#include "nvca/random.hpp"

using namespace nvca;

namespace {

LayerSpec layer(const std::string& name, LayerKind kind, std::size_t cin, std::size_t cout, std::size_t h, std::size_t w) {
    LayerSpec s;
    s.name = name;
    s.kind = kind;
    s.cin = cin;
    s.cout = cout;
    s.in_h = h;
    s.in_w = w;
    return s;
}

ChainSpec three_layer_chain() {
    ChainSpec c;
    c.name = "chain3";
    c.layers = {layer("a", LayerKind::conv3x3s1, 36, 36, 16, 16), layer("b", LayerKind::conv3x3s1, 36, 36, 16, 16),
                layer("c", LayerKind::deconv4x4s2, 36, 36, 16, 16)};
    return c;
}

SimConfig default_config() {
    std::ifstream in(std::string(NVCA_DATA_DIR) + "/default.cfg");
    return parse_sim_config(in);
}

ChainSpec random_chain(Rng& rng, int id) {
    ChainSpec c;
    c.name = "rand" + std::to_string(id);
    const int convs = static_cast<int>(rng.integer(0, 4));
    const bool deconv = convs == 0 || rng.integer(0, 1) == 1;
    std::size_t ch = static_cast<std::size_t>(rng.integer(1, 8));
    const std::size_t h = static_cast<std::size_t>(rng.integer(1, 24));
    const std::size_t w = static_cast<std::size_t>(rng.integer(1, 12));
    for (int i = 0; i < convs; ++i) {
        const std::size_t next = static_cast<std::size_t>(rng.integer(1, 8));
        c.layers.push_back(layer("c" + std::to_string(i), LayerKind::conv3x3s1, ch, next, h, w));
        ch = next;
    }
    if (deconv) c.layers.push_back(layer("d", LayerKind::deconv4x4s2, ch, static_cast<std::size_t>(rng.integer(1, 8)), h, w));
    return c;
}

/// Independent replay of a bank trace. Returns an empty string when every
/// read hits a resident row, banks never hold two rows and each row of each
/// feature enters the buffer exactly once.
std::string replay(const ChainSpec& chain, const TrafficCycleReport& r) {
    std::map<int, std::pair<int, long>> bank;
    std::map<std::pair<int, long>, int> entered;
    std::uint64_t last_cycle = 0;
    for (const auto& e : r.trace) {
        if (e.cycle < last_cycle) return "cycle went backwards";
        last_cycle = e.cycle;
        if (e.bank < 0 || e.bank >= r.num_banks) return "bank out of range";
        const std::pair<int, long> key{e.feature, e.row};
        const auto it = bank.find(e.bank);
        switch (e.state) {
        case BankEvent::load:
        case BankEvent::store:
            if (it != bank.end()) return "write into occupied bank " + std::to_string(e.bank);
            if ((e.state == BankEvent::load) != (e.feature == 0)) return "load/store feature mismatch";
            bank[e.bank] = key;
            if (++entered[key] > 1) return "row entered twice";
            break;
        case BankEvent::compute:
        case BankEvent::inactive:
            if (it == bank.end() || it->second != key) return "access to a row that is not resident";
            break;
        case BankEvent::free:
            if (it == bank.end() || it->second != key) return "free of a row that is not resident";
            bank.erase(it);
            break;
        }
    }
    if (!r.completed) return {};
    for (std::size_t f = 0; f < chain.size(); ++f)
        for (long row = 0; row < static_cast<long>(chain.feature_rows(f)); ++row)
            if (entered[{static_cast<int>(f), row}] != 1) return "row never entered the buffer";
    return {};
}

} // namespace

TEST(RowsNeeded, SingleConvSink) {
    ChainSpec c;
    c.name = "one";
    c.layers = {layer("a", LayerKind::conv3x3s1, 1, 1, 16, 16)};
    const auto need = rows_needed(c, {0, 6});
    EXPECT_EQ(need[0], (RowRange{0, 7}));
    EXPECT_EQ(need[1], (RowRange{0, 6}));
}

TEST(RowsNeeded, DeconvTileRowNeedsFiveInputRows) {
    ChainSpec c;
    c.name = "one";
    c.layers = {layer("d", LayerKind::deconv4x4s2, 1, 1, 16, 16)};
    const auto need = rows_needed(c, {6, 12});
    EXPECT_EQ(need[0], (RowRange{2, 7}));
}

TEST(RowsNeeded, ThreeLayerChainFullTiles) {
    const auto need = rows_needed(three_layer_chain(), {6, 12}, TileRowMode::full);
    ASSERT_EQ(need.size(), 4u);
    EXPECT_EQ(need[0], (RowRange{0, 10}));
    EXPECT_EQ(need[1], (RowRange{1, 9}));
    EXPECT_EQ(need[2], (RowRange{2, 7}));
    EXPECT_EQ(need[3], (RowRange{6, 12}));
}

TEST(RowsNeeded, ThreeLayerChainDemandRows) {
    const auto need = rows_needed(three_layer_chain(), {6, 12}, TileRowMode::demand);
    EXPECT_EQ(need[0], (RowRange{0, 9}));
    EXPECT_EQ(need[1], (RowRange{1, 8}));
    EXPECT_EQ(need[2], (RowRange{2, 7}));
}

TEST(RowsNeeded, RejectsOutOfRange) { EXPECT_THROW(rows_needed(three_layer_chain(), {30, 40}), ShapeError); }

TEST(Config, ParsesBundledDefaults) {
    const SimConfig cfg = default_config();
    EXPECT_EQ(cfg.scu.pif, 12);
    EXPECT_EQ(cfg.buffer.num_banks, 10);
    EXPECT_EQ(cfg.buffer.tile_rows, TileRowMode::demand);
    EXPECT_EQ(cfg.dram_word_bytes, 16u);
    EXPECT_EQ(cfg.scu.rho, (Rho{1, 2}));
}

TEST(Config, Errors) {
    std::istringstream unknown("pif = 12\nbanks = 3\n");
    EXPECT_THROW(parse_sim_config(unknown), ParseError);
    std::istringstream bad_value("pif = twelve\n");
    EXPECT_THROW(parse_sim_config(bad_value), Error);
    std::istringstream zero_banks("num_banks = 0\n");
    EXPECT_THROW(parse_sim_config(zero_banks), ConfigError);
    std::istringstream bad_mode("tile_rows = half\n");
    EXPECT_THROW(parse_sim_config(bad_mode), ConfigError);
}

TEST(Chain, RejectsMalformedChains) {
    ChainSpec c = three_layer_chain();
    std::swap(c.layers[1], c.layers[2]);
    EXPECT_THROW(c.validate(), ConfigError);
    ChainSpec mismatch = three_layer_chain();
    mismatch.layers[1].cin = 35;
    EXPECT_THROW(mismatch.validate(), ShapeError);
}

TEST(Chain, CapacityBelowWidestRowIsAnError) {
    SimConfig cfg = default_config();
    cfg.buffer.bank_capacity_bytes = 100;
    EXPECT_THROW(simulate_chain(three_layer_chain(), cfg), ConfigError);
    cfg.buffer.bank_capacity_bytes = 36 * 16 * 12 / 8;
    EXPECT_NO_THROW(simulate_chain(three_layer_chain(), cfg));
}

TEST(Chain, SingleLayerMatchesBaseline) {
    const SimConfig cfg = default_config();
    for (auto kind : {LayerKind::conv3x3s1, LayerKind::deconv4x4s2}) {
        ChainSpec c;
        c.name = "single";
        c.layers = {layer("x", kind, 12, 12, 20, 20)};
        const auto r = simulate_chain(c, cfg);
        ASSERT_TRUE(r.completed);
        EXPECT_EQ(r.traffic(), r.baseline_traffic());
        EXPECT_EQ(r.intermediate_bytes, 0u);
        EXPECT_EQ(r.cycles(), r.baseline_cycles());
        const auto b = simulate_baseline(c.layers, cfg);
        EXPECT_EQ(b.traffic(), r.traffic());
    }
}

TEST(Chain, IntermediatesNeverLeaveTheChip) {
    const SimConfig cfg = default_config();
    const auto r = simulate_chain(three_layer_chain(), cfg);
    ASSERT_TRUE(r.completed);
    EXPECT_EQ(r.layers[0].writes, 0u);
    EXPECT_EQ(r.layers[1].writes, 0u);
    EXPECT_EQ(r.layers[1].reads, r.layers[1].weight_bytes);
    EXPECT_EQ(r.layers[2].reads, r.layers[2].weight_bytes);
    EXPECT_GT(r.reduction(), 0.0);
    EXPECT_TRUE(accounting_identity_holds(r));
    // two 36 x 16 x 16 intermediates at 12 bits
    EXPECT_EQ(r.intermediate_bytes, 2u * 36 * 16 * 16 * 12 / 8);
    EXPECT_EQ(r.baseline_traffic() - r.traffic(), 2 * r.intermediate_bytes);
}

TEST(Chain, BankRequirementPerTileMode) {
    SimConfig cfg = default_config();
    cfg.buffer.tile_rows = TileRowMode::demand;
    EXPECT_EQ(min_banks(three_layer_chain(), cfg), 9);
    cfg.buffer.tile_rows = TileRowMode::full;
    EXPECT_EQ(min_banks(three_layer_chain(), cfg), 11);
}

TEST(Chain, DeadlockReportsTheBlockingRows) {
    SimConfig cfg = default_config();
    cfg.buffer.num_banks = 8;
    const auto r = simulate_chain(three_layer_chain(), cfg, true);
    EXPECT_FALSE(r.completed);
    ASSERT_EQ(r.blocking.size(), 8u);
    std::set<int> banks;
    for (const auto& b : r.blocking) banks.insert(b.bank);
    EXPECT_EQ(banks.size(), 8u);
    EXPECT_EQ(replay(three_layer_chain(), r), "");
}

TEST(Chain, TraceReplayIsSafe) {
    const SimConfig cfg = default_config();
    const auto r = simulate_chain(three_layer_chain(), cfg, true);
    ASSERT_TRUE(r.completed);
    EXPECT_LE(r.peak_banks, cfg.buffer.num_banks);
    EXPECT_EQ(replay(three_layer_chain(), r), "");
    std::set<BankEvent> states;
    for (const auto& e : r.trace) states.insert(e.state);
    EXPECT_EQ(states.size(), 5u);
}

TEST(Chain, Deterministic) {
    const SimConfig cfg = default_config();
    const auto a = simulate_chain(three_layer_chain(), cfg, true);
    const auto b = simulate_chain(three_layer_chain(), cfg, true);
    EXPECT_EQ(a.trace, b.trace);
    EXPECT_EQ(a.cycles(), b.cycles());
}

TEST(Chain, FillChargedOnce) {
    const SimConfig cfg = default_config();
    const auto r = simulate_chain(three_layer_chain(), cfg);
    EXPECT_EQ(r.fill_cycles, 7u);
    std::uint64_t sum = 0;
    for (const auto& l : r.layers) sum += l.cycles;
    EXPECT_EQ(r.cycles(), sum + 7);
}

TEST(ChainProperty, RandomChainsAreSafeAndTight) {
    Rng rng(2024);
    SimConfig cfg = default_config();
    for (int i = 0; i < 150; ++i) {
        const ChainSpec c = random_chain(rng, i);
        cfg.buffer.tile_rows = i % 2 ? TileRowMode::full : TileRowMode::demand;
        const int need = min_banks(c, cfg, 256);
        cfg.buffer.num_banks = need;
        const auto ok = simulate_chain(c, cfg, true);
        ASSERT_TRUE(ok.completed) << c.name;
        ASSERT_EQ(replay(c, ok), "") << c.name;
        ASSERT_TRUE(accounting_identity_holds(ok)) << c.name;
        ASSERT_EQ(ok.peak_banks, need) << c.name;
        cfg.buffer.num_banks = need + 3;
        ASSERT_TRUE(simulate_chain(c, cfg).completed) << c.name;
        if (need > 1) {
            cfg.buffer.num_banks = need - 1;
            const auto bad = simulate_chain(c, cfg, true);
            ASSERT_FALSE(bad.completed) << c.name;
            ASSERT_EQ(replay(c, bad), "") << c.name;
        }
    }
}
