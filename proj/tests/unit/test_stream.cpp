#include <gtest/gtest.h>

#include <zlib.h>

#include <random>
#include <vector>

#include "enec/stream.hpp"
#include "support/synthetic.hpp"

using namespace enec;
using namespace enec::stream;

namespace {

std::vector<std::uint8_t> random_bytes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

CodecOptions with_block(std::uint32_t block, unsigned workers = 1) {
  CodecOptions o;
  o.block_size = block;
  o.workers = workers;
  return o;
}

void refresh_crc(std::vector<std::uint8_t>& file) {
  const auto crc = static_cast<std::uint32_t>(::crc32(0L, file.data() + kHeaderSize,
                                                      static_cast<uInt>(file.size() - kHeaderSize)));
  for (int i = 0; i < 4; ++i) file[16 + i] = static_cast<std::uint8_t>(crc >> (8 * i));
}

}  // namespace

TEST(Container, EmptyInput) {
  const auto file = compress({}, kBF16);
  // header, name length, element count, b n m L, no blocks
  EXPECT_EQ(file.size(), kHeaderSize + 4 + 8 + 8);
  const auto c = Container::parse(file);
  ASSERT_EQ(c.tensors().size(), 1u);
  EXPECT_EQ(c.tensors()[0].element_count, 0u);
  EXPECT_TRUE(c.tensors()[0].blocks.empty());
  EXPECT_TRUE(decompress(file).empty());
}

TEST(Container, ExactBytesOfSmallCodedBlock) {
  // 64 copies of BF16 1.0 with (127, 1, 1, 16) and 64-element blocks.
  std::vector<std::uint8_t> raw;
  for (int i = 0; i < 64; ++i) raw.insert(raw.end(), {0x80, 0x3F});
  const auto file = compress(raw, kBF16, TunedParams{127, 1, 1, 16}, with_block(64));

  std::vector<std::uint8_t> expected{'E', 'N', 'E', 'C', 1, 0, 2, 0, 64, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<std::uint8_t> record{
      0, 0, 0, 0,                    // name length
      64, 0, 0, 0, 0, 0, 0, 0,       // element count
      127, 0, 1, 1, 16, 0, 0, 0,     // b, n, m, L
      0, 0, 0, 0, 0, 0, 0, 0,        // block offset
      77, 0, 0, 0,                   // block size: 1 mask + 8 low + 4 count + 64 residue
      0};                            // coded
  expected.insert(expected.end(), record.begin(), record.end());
  expected.resize(expected.size() + 77, 0);
  refresh_crc(expected);
  EXPECT_EQ(file, expected);
  EXPECT_EQ(decompress(file), raw);
}

TEST(Container, RoundTripRandomBF16) {
  const auto raw = random_bytes(1 << 20, 1);
  const auto file = compress(raw, kBF16);
  EXPECT_EQ(decompress(file), raw);
}

TEST(Container, RoundTripAllFormatsAndTails) {
  for (const auto& fmt : {kFP32, kFP16, kBF16}) {
    for (std::size_t count : {1u, 15u, 17u, 255u, 1000u, 4097u}) {
      for (const auto pattern : synth::kAllPatterns) {
        const auto raw = synth::pattern_input(fmt, pattern, count, count * 31 + 7);
        const auto file = compress(raw, fmt, std::nullopt, with_block(256));
        ASSERT_EQ(decompress(file), raw) << fmt.name << " " << count;
      }
    }
  }
}

TEST(Container, RawFallbackInterleaved) {
  const auto raw = synth::pattern_input(kBF16, synth::Pattern::Straddling, 64 * 1024, 3);
  const auto file = compress(raw, kBF16, synth::kBF16LawParams, with_block(256));
  const auto c = Container::parse(file);
  std::size_t raw_blocks = 0;
  for (const auto& e : c.tensors()[0].blocks) raw_blocks += e.raw();
  EXPECT_GT(raw_blocks, 0u);
  EXPECT_LT(raw_blocks, c.tensors()[0].blocks.size());
  EXPECT_EQ(decompress(file), raw);
}

TEST(Container, IncompressibleBlocksGoRaw) {
  const auto raw = random_bytes(64 * 1024, 4);
  const auto c = compress(raw, kBF16, std::nullopt, with_block(1024));
  const auto container = Container::parse(c);
  for (const auto& e : container.tensors()[0].blocks) EXPECT_TRUE(e.raw());
}

TEST(Container, DeterministicAcrossWorkers) {
  const auto raw = synth::generate(kBF16, synth::bf16_law(), 300000, 5);
  const auto one = compress(raw, kBF16, std::nullopt, with_block(4096, 1));
  EXPECT_EQ(compress(raw, kBF16, std::nullopt, with_block(4096, 2)), one);
  EXPECT_EQ(compress(raw, kBF16, std::nullopt, with_block(4096, 8)), one);
  EXPECT_EQ(decompress(one, 8), raw);
}

TEST(Container, RandomAccessBlocks) {
  const auto raw = synth::generate(kFP16, synth::fp16_law(), 10000, 6);
  const auto file = compress(raw, kFP16, std::nullopt, with_block(1024));
  const auto c = Container::parse(file);
  const auto& rec = c.tensors()[0];
  ASSERT_EQ(rec.blocks.size(), 10u);
  for (std::size_t b = rec.blocks.size(); b-- > 0;) {
    const auto block = c.read_block(0, b);
    const std::size_t start = b * 1024 * 2;
    ASSERT_EQ(block, std::vector<std::uint8_t>(raw.begin() + static_cast<std::ptrdiff_t>(start),
                                               raw.begin() + static_cast<std::ptrdiff_t>(start + block.size())));
  }
}

TEST(Container, SectionAccounting) {
  const auto raw = synth::generate(kBF16, synth::bf16_law(), 50000, 7);
  const TunedParams p = synth::kBF16LawParams;
  const auto file = compress(raw, kBF16, p, with_block(2048));
  const auto c = Container::parse(file);
  std::uint64_t payload = 0;
  for (std::size_t b = 0; b < c.tensors()[0].blocks.size(); ++b) {
    const auto& e = c.tensors()[0].blocks[b];
    ASSERT_FALSE(e.raw());
    const auto bytes = c.payload(e);
    const std::size_t count = c.block_elements(c.tensors()[0], b);
    const auto base = block_layout(count, kBF16, p, 0);
    std::size_t popcount = 0;
    for (std::size_t i = 0; i < base.mask; ++i) popcount += static_cast<std::size_t>(std::popcount(bytes[i]));
    ASSERT_EQ(e.size, block_layout(count, kBF16, p, popcount).total());
    payload += e.size;
  }
  EXPECT_EQ(file.size(), c.payload_base() + payload);
}

TEST(Container, MultiTensorMixedFormats) {
  const auto a = synth::generate(kBF16, synth::bf16_law(), 5000, 8);
  const auto b = synth::generate(kFP32, synth::fp32_law(), 3000, 9);
  const auto c = synth::generate(kFP16, synth::fp16_law(), 0, 10);
  const auto d = synth::generate(kFP16, synth::fp16_law(), 777, 11);
  const std::vector<TensorInput> inputs{{"layer.0.weight", kBF16, a, std::nullopt},
                                        {"layer.0.bias", kFP32, b, std::nullopt},
                                        {"empty", kFP16, c, std::nullopt},
                                        {"head", kFP16, d, TunedParams{7, 4, 3, 32}}};
  const auto file = compress(inputs, with_block(1024));
  EXPECT_EQ(file[7] & kFlagPerTensorFormat, kFlagPerTensorFormat);
  const auto out = decompress_tensors(file);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0].name, "layer.0.weight");
  EXPECT_EQ(out[0].data, a);
  EXPECT_EQ(out[1].format, kFP32);
  EXPECT_EQ(out[1].data, b);
  EXPECT_TRUE(out[2].data.empty());
  EXPECT_EQ(out[3].params, (TunedParams{7, 4, 3, 32}));
  EXPECT_EQ(out[3].data, d);
}

TEST(Container, InputErrors) {
  const std::vector<std::uint8_t> odd(3);
  EXPECT_THROW(compress(odd, kBF16), LengthError);
  EXPECT_THROW(compress(std::vector<std::uint8_t>(64), kBF16, std::nullopt, with_block(100)), FormatError);
  EXPECT_THROW(compress(std::vector<std::uint8_t>(64), kBF16, TunedParams{1, 12, 3, 16}), RangeError);
  EXPECT_THROW(compress(std::vector<std::uint8_t>(64), kBF16, TunedParams{1, 6, 3, 64}, with_block(32)),
               RangeError);
}

TEST(Container, DecodeErrors) {
  const auto raw = synth::generate(kBF16, synth::bf16_law(), 4000, 12);
  const auto good = compress(raw, kBF16, std::nullopt, with_block(1024));

  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decompress(bad), MagicError);

  bad = good;
  bad[4] = 2;
  EXPECT_THROW(decompress(bad), VersionError);

  bad = good;
  bad[bad.size() - 5] ^= 0x10;
  EXPECT_THROW(decompress(bad), ChecksumError);

  EXPECT_THROW(decompress(std::span<const std::uint8_t>(good).first(10)), TruncationError);

  bad = std::vector<std::uint8_t>(good.begin(), good.begin() + 60);
  refresh_crc(bad);
  try {
    decompress(bad);
    FAIL() << "truncated container decoded";
  } catch (const TruncationError& e) {
    EXPECT_NE(std::string(e.what()).find("block"), std::string::npos) << e.what();
  }

  // A directory entry that points past the end.
  bad = good;
  const std::size_t first_entry = kHeaderSize + 4 + 8 + 8;
  bad[first_entry + 8] = 0xFF;
  bad[first_entry + 9] = 0xFF;
  refresh_crc(bad);
  EXPECT_THROW(decompress(bad), TruncationError);
}

TEST(Verify, ReportAndFormula) {
  const auto raw = synth::generate(kBF16, synth::bf16_law(), 1 << 20, 13);
  const auto file = compress(raw, kBF16, synth::kBF16LawParams);
  const auto report = verify(raw, file);
  EXPECT_EQ(report.original_bytes, raw.size());
  EXPECT_EQ(report.compressed_bytes, file.size());
  EXPECT_DOUBLE_EQ(report.compression_ratio, static_cast<double>(raw.size()) / file.size());
  ASSERT_TRUE(report.formula_ratio.has_value());
  EXPECT_NEAR(report.compression_ratio, *report.formula_ratio, 0.03 * *report.formula_ratio);
  const double bexp = tuner::tune_with_cost(synth::bf16_law().histogram()).expected_bits;
  EXPECT_NEAR(report.exponent_bits_per_element, bexp, 0.02 * bexp);
  EXPECT_EQ(report.raw_blocks, 0u);
}

TEST(Verify, Mismatch) {
  const auto raw = synth::generate(kFP16, synth::fp16_law(), 5000, 14);
  const auto file = compress(raw, kFP16);
  auto other = raw;
  other[1234] ^= 1;
  try {
    verify(other, file);
    FAIL() << "mismatch not detected";
  } catch (const MismatchError& e) {
    EXPECT_EQ(e.offset(), 1234u);
  }
  other = raw;
  other.push_back(0);
  EXPECT_THROW(verify(other, file), MismatchError);
  other.resize(raw.size() - 2);
  EXPECT_THROW(verify(other, file), MismatchError);
}

TEST(ReferenceV0, IdenticalExponents) {
  std::vector<std::uint8_t> raw;
  for (int i = 0; i < 8192; ++i) raw.insert(raw.end(), {static_cast<std::uint8_t>(i & 0x7F), 0x3F});
  const auto r = reference_ratio_v0(raw, kBF16);
  EXPECT_DOUBLE_EQ(r.exponent_bits_per_element, 4.0 / 16);
  EXPECT_NEAR(r.compression_ratio, 16.0 / (8 + 0.25), 1e-9);
}

TEST(ReferenceV0, LawOrdering) {
  const auto raw = synth::generate(kBF16, synth::bf16_law(), 1 << 20, 15);
  const double v0 = reference_ratio_v0(raw, kBF16).compression_ratio;
  const double enec = verify(raw, compress(raw, kBF16)).compression_ratio;
  EXPECT_GE(v0, enec - 0.02);
  EXPECT_GE(v0, 1.0);
  EXPECT_GE(enec, 1.0);
}

TEST(ReferenceV0, IncompressibleExponents) {
  const auto raw = random_bytes(1 << 20, 16);
  const double v0 = reference_ratio_v0(raw, kBF16).compression_ratio;
  const double enec = verify(raw, compress(raw, kBF16)).compression_ratio;
  EXPECT_NEAR(v0, 1.0, 0.03);
  EXPECT_NEAR(enec, 1.0, 0.03);
  EXPECT_LE(enec, 1.0);
}

TEST(ParallelFor, LowestIndexErrorWins) {
  for (unsigned workers : {1u, 4u}) {
    try {
      stream::detail::parallel_for(100, workers, [](std::size_t i) {
        if (i == 17 || i == 60) throw RangeError(std::to_string(i));
      });
      FAIL();
    } catch (const RangeError& e) {
      EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
    }
  }
}
