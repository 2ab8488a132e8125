#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "enec/tuner.hpp"
#include "support/synthetic.hpp"

using namespace enec;
using namespace enec::tuner;
using analysis::histogram_from_counts;

namespace {

analysis::ExponentHistogram hist8(std::initializer_list<std::pair<std::uint32_t, std::uint64_t>> items) {
  std::vector<std::uint64_t> counts(256, 0);
  for (const auto& [x, c] : items) counts[x] = c;
  return histogram_from_counts(counts);
}

}  // namespace

TEST(RequiredBitwidth, Examples) {
  EXPECT_EQ(required_bitwidth(123, 100, 134), 6u);
  EXPECT_EQ(required_bitwidth(50, 50, 50), 1u);
  // Window of (0, 1) is {0, 1}: one bit suffices.
  EXPECT_EQ(required_bitwidth(0, 0, 1), 1u);
  EXPECT_EQ(required_bitwidth(123, 107, 126), 6u);
}

TEST(RequiredBitwidth, ExhaustiveSufficiencyAndMinimality) {
  for (std::uint32_t l = 0; l < 256; ++l) {
    for (std::uint32_t h = l; h < 256; ++h) {
      for (std::uint32_t b = l; b <= h; ++b) {
        const unsigned n = required_bitwidth(b, l, h);
        const auto w = transform::window(b, n);
        ASSERT_TRUE(w.contains(static_cast<std::int32_t>(l)) && w.contains(static_cast<std::int32_t>(h)))
            << b << " " << l << " " << h;
        if (n > 1) {
          const auto narrower = transform::window(b, n - 1);
          ASSERT_FALSE(narrower.contains(static_cast<std::int32_t>(l)) &&
                       narrower.contains(static_cast<std::int32_t>(h)));
        }
      }
    }
  }
}

TEST(MappingCost, Examples) {
  EXPECT_DOUBLE_EQ(mapping_cost(hist8({{123, 2}, {122, 1}, {125, 1}}), 123, 6), 15.75);
  EXPECT_DOUBLE_EQ(mapping_cost(hist8({{40, 9}}), 40, 1), 0.0);
  EXPECT_DOUBLE_EQ(mapping_cost(hist8({{40, 1}, {39, 1}}), 40, 2), 0.5);
  EXPECT_THROW(mapping_cost(hist8({{40, 1}, {10, 1}}), 40, 2), WindowError);
}

TEST(SearchLinearParams, LawHistogram) {
  EXPECT_EQ(search_linear_params(synth::bf16_law().histogram()), (LinearParams{123, 6}));
  EXPECT_EQ(search_linear_params(synth::fp16_law().histogram()), (LinearParams{7, 4}));
}

TEST(SearchLinearParams, PointMass) {
  EXPECT_EQ(search_linear_params(hist8({{77, 5}})), (LinearParams{77, 1}));
}

TEST(SearchLinearParams, TwoValuesByBruteForce) {
  const auto h = hist8({{10, 9}, {11, 1}});
  // b=10 covers {10, 11} with n=1: codes 0 and 1, D=0.1.
  // b=11 needs n=2: codes 1 and 0, D=0.9.
  EXPECT_EQ(required_bitwidth(10, 10, 11), 1u);
  EXPECT_EQ(required_bitwidth(11, 10, 11), 2u);
  EXPECT_NEAR(mapping_cost(h, 10, 1), 0.1, 1e-12);
  EXPECT_NEAR(mapping_cost(h, 11, 2), 0.9, 1e-12);
  EXPECT_EQ(search_linear_params(h), (LinearParams{10, 1}));
}

TEST(SearchLinearParams, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::uint64_t> counts(32, 0);
    const std::uint32_t lo = rng() % 28;
    for (std::uint32_t x = lo; x < lo + 1 + rng() % 4; ++x) counts[x] = 1 + rng() % 50;
    counts[rng() % 32] += 1;
    const auto h = histogram_from_counts(counts);
    std::uint64_t best = UINT64_MAX;
    LinearParams expected{0, 0};
    for (std::uint32_t b = h.low; b <= h.high; ++b) {
      const unsigned n = required_bitwidth(b, h.low, h.high);
      const std::uint64_t d = tuner::detail::weighted_code_sum(h, b, n);
      if (d < best || (d == best && n < expected.n)) {
        best = d;
        expected = {b, n};
      }
    }
    ASSERT_EQ(search_linear_params(h), expected);
  }
}

TEST(BitwidthCdf, Examples) {
  const auto c = bitwidth_cdf(hist8({{123, 3}, {125, 1}}), 123, 6);
  ASSERT_EQ(c.max_width(), 6u);
  EXPECT_DOUBLE_EQ(c.at(3), 0.75);
  EXPECT_DOUBLE_EQ(c.at(5), 0.75);
  EXPECT_DOUBLE_EQ(c.at(6), 1.0);

  const auto point = bitwidth_cdf(hist8({{9, 4}}), 9, 3);
  for (unsigned w = 0; w <= 3; ++w) EXPECT_DOUBLE_EQ(point.at(w), 1.0);

  const auto uniform = bitwidth_cdf(hist8({{100, 1}, {99, 1}, {98, 1}, {97, 1}, {96, 1}, {95, 1}, {94, 1}, {93, 1}}), 100, 6);
  EXPECT_DOUBLE_EQ(uniform.at(3), 1.0);
  EXPECT_DOUBLE_EQ(uniform.at(2), 0.5);
}

TEST(BitwidthCdf, MonotoneAndComplete) {
  const auto h = synth::bf16_law().histogram();
  const auto c = bitwidth_cdf(h, 123, 6);
  for (unsigned w = 1; w <= 6; ++w) EXPECT_LE(c.at(w - 1), c.at(w));
  EXPECT_DOUBLE_EQ(c.at(6), 1.0);
}

TEST(ExpectedBits, Examples) {
  EXPECT_DOUBLE_EQ(expected_bits(6, 3, 16, 1.0), 3.0625);
  EXPECT_DOUBLE_EQ(expected_bits(6, 3, 16, 0.0), 6.0625);
  EXPECT_NEAR(expected_bits(6, 3, 16, 0.99), 1.0 / 16 + 6 - 3 * std::pow(0.99, 16), 1e-12);
  EXPECT_NEAR(expected_bits(6, 3, 16, 0.99), 3.508, 1e-3);
}

TEST(ExpectedBits, MonotoneInProbability) {
  double prev = expected_bits(6, 2, 32, 0.0);
  for (int i = 1; i <= 100; ++i) {
    const double cur = expected_bits(6, 2, 32, i / 100.0);
    EXPECT_LE(cur, prev);
    prev = cur;
  }
}

TEST(SelectThreshold, LawHistogram) {
  const auto cdf = bitwidth_cdf(synth::bf16_law().histogram(), 123, 6);
  const auto choice = select_threshold_and_group(cdf, 6, kDefaultGroupLengths);
  EXPECT_EQ(choice.m, 3u);
  EXPECT_EQ(choice.group_length, 16u);
}

TEST(SelectThreshold, DegenerateCdf) {
  BitwidthCdf cdf{{1, 1, 1, 1, 1}};
  const auto choice = select_threshold_and_group(cdf, 4, kDefaultGroupLengths);
  EXPECT_EQ(choice.m, 1u);
  EXPECT_EQ(choice.group_length, 128u);
}

TEST(SelectThreshold, MatchesGrid) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 300; ++t) {
    const unsigned n = 2 + rng() % 7;
    BitwidthCdf cdf;
    cdf.p.resize(n + 1);
    for (unsigned w = 0; w < n; ++w) cdf.p[w] = u(rng);
    cdf.p[n] = 1.0;
    std::sort(cdf.p.begin(), cdf.p.end());
    const auto choice = select_threshold_and_group(cdf, n, kDefaultGroupLengths);
    for (unsigned m = 1; m <= n; ++m) {
      for (const auto l : kDefaultGroupLengths) {
        const double b = expected_bits(n, m, l, cdf.at(m));
        ASSERT_LE(choice.expected_bits, b);
        if (b == choice.expected_bits) {
          ASSERT_TRUE(choice.m < m || (choice.m == m && choice.group_length <= l));
        }
      }
    }
  }
}

TEST(SelectThreshold, RejectsBadLengths) {
  BitwidthCdf cdf{{0.5, 1, 1}};
  const std::vector<std::uint32_t> bad{16, 24};
  EXPECT_THROW(select_threshold_and_group(cdf, 2, bad), RangeError);
  EXPECT_THROW(select_threshold_and_group(cdf, 2, std::vector<std::uint32_t>{}), RangeError);
}

TEST(Tune, LawHistograms) {
  EXPECT_EQ(tune(synth::bf16_law().histogram()), (TunedParams{123, 6, 3, 16}));
  EXPECT_EQ(tune(synth::fp16_law().histogram()), (TunedParams{7, 4, 3, 16}));
  EXPECT_NEAR(tune_with_cost(synth::bf16_law().histogram()).expected_bits, 3.80, 0.01);
}

TEST(Tune, PointMass) {
  // B_exp = 1/L + 1 for every candidate, so the longest group wins.
  EXPECT_EQ(tune(hist8({{200, 10}})), (TunedParams{200, 1, 1, 128}));
  const std::vector<std::uint32_t> only16{16};
  EXPECT_EQ(tune(hist8({{200, 10}}), only16), (TunedParams{200, 1, 1, 16}));
}

TEST(Tune, ScaleInvariant) {
  auto counts = synth::bf16_law().counts;
  for (auto& c : counts) c *= 13;
  EXPECT_EQ(tune(histogram_from_counts(counts)), tune(synth::bf16_law().histogram()));
}

TEST(Tune, BeatsRandomGrid) {
  for (const auto& law : {synth::bf16_law(), synth::fp16_law()}) {
    const auto h = law.histogram();
    const auto best = tune_with_cost(h);
    std::mt19937_64 rng(23);
    for (int q = 0; q < 500; ++q) {
      const std::uint32_t b = h.low + rng() % (h.high - h.low + 1);
      const unsigned n = required_bitwidth(b, h.low, h.high) + rng() % 2;
      const unsigned m = 1 + rng() % n;
      const std::uint32_t l = kDefaultGroupLengths[rng() % kDefaultGroupLengths.size()];
      const double bits = expected_bits(n, m, l, bitwidth_cdf(h, b, n).at(m));
      ASSERT_LE(best.expected_bits, bits + 1e-12) << b << "," << n << "," << m << "," << l;
    }
  }
}

TEST(Validate, Rules) {
  EXPECT_NO_THROW(validate({123, 6, 3, 16}, 8, 16384));
  EXPECT_THROW(validate({256, 6, 3, 16}, 8, 16384), RangeError);
  EXPECT_THROW(validate({1, 10, 3, 16}, 8, 16384), RangeError);
  EXPECT_THROW(validate({1, 6, 7, 16}, 8, 16384), RangeError);
  EXPECT_THROW(validate({1, 9, 9, 16}, 8, 16384), RangeError);
  EXPECT_THROW(validate({1, 6, 3, 24}, 8, 16384), RangeError);
  EXPECT_THROW(validate({1, 6, 3, 8}, 8, 16384), RangeError);
  EXPECT_THROW(validate({1, 6, 3, 64}, 8, 32), RangeError);
}

TEST(PredictedRatio, LawValue) {
  const auto h = synth::bf16_law().histogram();
  EXPECT_NEAR(predicted_ratio(h, {123, 6, 3, 16}, 16, 8), 1.356, 0.005);
}
