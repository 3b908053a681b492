#include <gtest/gtest.h>

#include <sstream>

#include "nvca/layer.hpp"
#include "nvca/pruning.hpp"
#include "nvca/random.hpp"
#include "nvca/sparse_bank_io.hpp"
#include "nvca/tensor_io.hpp"

using namespace nvca;

namespace {

RealTensor sample_real() {
    Rng rng(1);
    RealTensor t({2, 3, 4, 5});
    for (auto& v : t.data()) v = rng.uniform(-3, 3);
    return t;
}

SparseKernelBank<std::int32_t> sample_bank() {
    Rng rng(2);
    RealTensor w({3, 2, 3, 3});
    for (auto& v : w.data()) v = rng.dyadic(10);
    const auto q = quantize(w, kWeightFormat).tensor;
    return prune_weights(builtin_conv_f2x2_3x3(), q, Rho{1, 2}, MaskPolicy::per_kernel).bank;
}

} // namespace

TEST(TensorFile, RealRoundTrip) {
    const auto t = sample_real();
    const auto back = decode_tensor(encode_tensor(t));
    ASSERT_TRUE(std::holds_alternative<RealTensor>(back));
    EXPECT_EQ(std::get<RealTensor>(back), t);
}

TEST(TensorFile, FxpRoundTrip) {
    const auto q = quantize(sample_real(), kActivationFormat).tensor;
    const auto bytes = encode_tensor(q);
    EXPECT_EQ(bytes.size(), 32u + 4u * q.codes.size());
    const auto back = decode_tensor(bytes);
    ASSERT_TRUE(std::holds_alternative<QTensor>(back));
    EXPECT_EQ(std::get<QTensor>(back), q);
}

TEST(TensorFile, HeaderLayout) {
    RealTensor t({1, 2, 3, 4});
    const auto b = encode_tensor(t);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "NVCT");
    EXPECT_EQ(b[4], 1); // version, little-endian
    EXPECT_EQ(b[5], 0);
    EXPECT_EQ(b[6], 0); // real payload
    EXPECT_EQ(b[20], 2); // channels
    EXPECT_EQ(b.size(), 32u + 8u * 24u);
}

TEST(TensorFile, RejectsCorruption) {
    auto b = encode_tensor(quantize(sample_real(), kActivationFormat).tensor);
    auto bad_magic = b;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_tensor(bad_magic), ParseError);
    auto truncated = b;
    truncated.resize(truncated.size() - 1);
    EXPECT_THROW(decode_tensor(truncated), ParseError);
    auto long_file = b;
    long_file.push_back(0);
    EXPECT_THROW(decode_tensor(long_file), ParseError);
    auto out_of_range = b;
    out_of_range[32] = 0xFF;
    out_of_range[33] = 0x7F; // code 32767 does not fit 12 bits
    out_of_range[34] = 0;
    out_of_range[35] = 0;
    EXPECT_THROW(decode_tensor(out_of_range), ParseError);
    auto version = b;
    version[4] = 9;
    EXPECT_THROW(decode_tensor(version), ParseError);
}

TEST(SparseBankFile, RoundTrip) {
    const auto bank = sample_bank();
    const auto back = decode_sparse_bank(encode_sparse_bank(bank));
    EXPECT_EQ(back.mu, bank.mu);
    EXPECT_EQ(back.cin, bank.cin);
    EXPECT_EQ(back.cout, bank.cout);
    EXPECT_EQ(back.rho, bank.rho);
    EXPECT_EQ(back.format, bank.format);
    ASSERT_EQ(back.kernels.size(), bank.kernels.size());
    for (std::size_t i = 0; i < bank.kernels.size(); ++i) {
        EXPECT_EQ(back.kernels[i].index, bank.kernels[i].index);
        EXPECT_EQ(back.kernels[i].value, bank.kernels[i].value);
    }
}

TEST(SparseBankFile, RejectsCorruption) {
    const auto bytes = encode_sparse_bank(sample_bank());
    auto trailing = bytes;
    trailing.push_back(1);
    EXPECT_THROW(decode_sparse_bank(trailing), ParseError);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    EXPECT_THROW(decode_sparse_bank(truncated), ParseError);
    // header is 28 bytes; first kernel: u16 nnz, then indices
    auto unsorted = bytes;
    std::swap(unsorted[30], unsorted[31]);
    EXPECT_THROW(decode_sparse_bank(unsorted), ParseError);
    auto bad_rho = bytes;
    bad_rho[16] = 7; // numerator 7 over denominator 2
    EXPECT_THROW(decode_sparse_bank(bad_rho), ConfigError);
}

TEST(SparseBankFile, RealView) {
    const auto bank = sample_bank();
    const auto real = to_real_bank(bank);
    const auto& k = bank.kernel(1, 1);
    ASSERT_GT(k.nnz(), 0u);
    EXPECT_DOUBLE_EQ(real.kernel(1, 1).value[0], dequantize(k.value[0], *bank.format));
}

TEST(LayerSpecFile, ParseAndFormatRoundTrip) {
    std::istringstream in("# test layer\nkind=deconv4x4s2 cin=12\ncout=8 h=16 w=20 activation=relu rho=3/8 policy=shared\n"
                          "act_fxp=10/6 module=x\n");
    const LayerSpec s = parse_layer_spec(in);
    EXPECT_EQ(s.kind, LayerKind::deconv4x4s2);
    EXPECT_EQ(s.out_h(), 32u);
    EXPECT_EQ(s.out_w(), 40u);
    EXPECT_EQ(*s.rho, (Rho{3, 8}));
    EXPECT_EQ(s.act_format, (FxpFormat{10, 6, true}));
    std::istringstream again(format_layer_fields(s));
    EXPECT_EQ(parse_layer_spec(again), s);
}

TEST(LayerSpecFile, Errors) {
    std::istringstream unknown("kind=conv3x3s1 cin=1 cout=1 h=1 w=1 stride=2");
    EXPECT_THROW(parse_layer_spec(unknown), ConfigError);
    std::istringstream bare("kind=conv3x3s1 cin");
    EXPECT_THROW(parse_layer_spec(bare), ParseError);
    std::istringstream zero("kind=conv3x3s1 cin=0 cout=1 h=1 w=1");
    EXPECT_THROW(parse_layer_spec(zero), ConfigError);
    std::istringstream bad_rho("kind=conv3x3s1 cin=1 cout=1 h=1 w=1 rho=1.5");
    EXPECT_THROW(parse_layer_spec(bad_rho), ConfigError);
}
