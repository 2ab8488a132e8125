#pragma once

// Offline parameter search for the exponent coder.
//
// Phase 1 is the histogram (analysis.hpp). Phase 2 scans every mapping
// parameter b in [low, high], derives the smallest code width n that covers
// the occupied range, and keeps the pair with the least expected code value.
// Phase 3 picks the threshold width m and group length L minimizing the
// expected bits per exponent:
//
//   B_exp = 1/L + n + (m - n) * p(m)^L
//
// where p(m) is the probability that a code fits in m bits.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "enec/analysis.hpp"
#include "enec/error.hpp"
#include "enec/transform.hpp"

namespace enec::tuner {

struct TunedParams {
  std::uint32_t b = 0;
  unsigned n = 1;
  unsigned m = 1;
  std::uint32_t group_length = 16;

  friend bool operator==(const TunedParams&, const TunedParams&) = default;
};

inline constexpr std::array<std::uint32_t, 4> kDefaultGroupLengths{16, 32, 64, 128};

/// Throws RangeError unless the tuple is usable for `exponent_bits`-wide
/// exponents and blocks of `block_size` elements.
inline void validate(const TunedParams& p, unsigned exponent_bits, std::uint32_t block_size) {
  const auto fail = [&](const std::string& why) {
    throw RangeError("invalid parameters (" + std::to_string(p.b) + "," + std::to_string(p.n) +
                     "," + std::to_string(p.m) + "," + std::to_string(p.group_length) +
                     "): " + why);
  };
  if (p.b >= (std::uint32_t{1} << exponent_bits)) fail("b must be below 2^E");
  if (p.n < 1 || p.n > exponent_bits + 1) fail("n must be in 1..E+1");
  if (p.m < 1 || p.m > p.n) fail("m must be in 1..n");
  if (p.m > 8 || p.n - p.m > 8) fail("m and n-m must not exceed 8 bits");
  if (p.group_length < 16 || !std::has_single_bit(p.group_length)) {
    fail("L must be a power of two >= 16");
  }
  if (block_size % p.group_length != 0) fail("L must divide the block size");
}

/// Smallest code width whose window covers [low, high] around b.
inline unsigned required_bitwidth(std::uint32_t b, std::uint32_t low, std::uint32_t high) {
  const auto below = static_cast<std::int64_t>(b) - low;
  const auto above = static_cast<std::int64_t>(high) - b;
  const unsigned lower_term = below > 0 ? std::bit_width(static_cast<std::uint64_t>(below)) : 0;
  const unsigned upper_term =
      above > 0 ? std::bit_width(static_cast<std::uint64_t>(above - 1)) : 0;  // ceil(log2)
  unsigned n = std::max(lower_term, upper_term) + 1;
  while (!(transform::window(b, n).contains(static_cast<std::int32_t>(low)) &&
           transform::window(b, n).contains(static_cast<std::int32_t>(high)))) {
    ++n;
  }
  return n;
}

namespace detail {

// Sum of count * code over the histogram; D scaled by the sample total.
inline std::uint64_t weighted_code_sum(const analysis::ExponentHistogram& hist, std::uint32_t b,
                                       unsigned n) {
  const auto win = transform::window(b, n);
  std::uint64_t sum = 0;
  for (std::uint32_t x = hist.low; x <= hist.high; ++x) {
    if (hist.counts[x] == 0) continue;
    if (!win.contains(static_cast<std::int32_t>(x))) {
      throw WindowError("exponent " + std::to_string(x) + " outside window of b=" +
                        std::to_string(b) + ", n=" + std::to_string(n));
    }
    sum += hist.counts[x] * transform::forward_unchecked(x, b, n);
  }
  return sum;
}

}  // namespace detail

/// D = sum_x p(x) * forward_map(x, b, n).
inline double mapping_cost(const analysis::ExponentHistogram& hist, std::uint32_t b, unsigned n) {
  return static_cast<double>(detail::weighted_code_sum(hist, b, n)) /
         static_cast<double>(hist.total);
}

struct LinearParams {
  std::uint32_t b;
  unsigned n;
  friend bool operator==(const LinearParams&, const LinearParams&) = default;
};

/// Exhaustive Phase 2 search; ties on D go to smaller n, then smaller b.
inline LinearParams search_linear_params(const analysis::ExponentHistogram& hist) {
  LinearParams best{hist.low, required_bitwidth(hist.low, hist.low, hist.high)};
  std::uint64_t best_cost = detail::weighted_code_sum(hist, best.b, best.n);
  for (std::uint32_t b = hist.low + 1; b <= hist.high; ++b) {
    const unsigned n = required_bitwidth(b, hist.low, hist.high);
    const std::uint64_t cost = detail::weighted_code_sum(hist, b, n);
    if (cost < best_cost || (cost == best_cost && n < best.n)) {
      best = {b, n};
      best_cost = cost;
    }
  }
  return best;
}

/// cdf[w] = probability that a mapped code is below 2^w, for w = 0..n.
struct BitwidthCdf {
  std::vector<double> p;

  [[nodiscard]] double at(unsigned w) const { return p.at(w); }
  [[nodiscard]] unsigned max_width() const { return static_cast<unsigned>(p.size() - 1); }
};

inline BitwidthCdf bitwidth_cdf(const analysis::ExponentHistogram& hist, std::uint32_t b,
                                unsigned n) {
  const auto win = transform::window(b, n);
  std::vector<std::uint64_t> fits(n + 1, 0);
  for (std::uint32_t x = hist.low; x <= hist.high; ++x) {
    if (hist.counts[x] == 0) continue;
    if (!win.contains(static_cast<std::int32_t>(x))) {
      throw WindowError("exponent " + std::to_string(x) + " outside window of b=" +
                        std::to_string(b) + ", n=" + std::to_string(n));
    }
    const unsigned width = std::bit_width(transform::forward_unchecked(x, b, n));
    for (unsigned w = width; w <= n; ++w) fits[w] += hist.counts[x];
  }
  BitwidthCdf cdf;
  cdf.p.resize(n + 1);
  for (unsigned w = 0; w <= n; ++w) {
    cdf.p[w] = static_cast<double>(fits[w]) / static_cast<double>(hist.total);
  }
  return cdf;
}

/// Expected coded bits per exponent for a group length L and threshold m.
inline double expected_bits(unsigned n, unsigned m, double group_length, double p_m) {
  return 1.0 / group_length + n + (static_cast<double>(m) - n) * std::pow(p_m, group_length);
}

struct ThresholdChoice {
  unsigned m;
  std::uint32_t group_length;
  double expected_bits;
};

/// Joint (m, L) minimizer of expected_bits; ties go to smaller m, then smaller L.
inline ThresholdChoice select_threshold_and_group(const BitwidthCdf& cdf, unsigned n,
                                                  std::span<const std::uint32_t> group_lengths) {
  if (group_lengths.empty()) throw RangeError("no group length candidates");
  std::vector<std::uint32_t> lengths(group_lengths.begin(), group_lengths.end());
  std::sort(lengths.begin(), lengths.end());
  for (const auto l : lengths) {
    if (l < 16 || !std::has_single_bit(l)) {
      throw RangeError("group length " + std::to_string(l) + " is not a power of two >= 16");
    }
  }
  ThresholdChoice best{0, 0, 0.0};
  for (unsigned m = 1; m <= n; ++m) {
    for (const auto l : lengths) {
      const double bits = expected_bits(n, m, l, cdf.at(m));
      if (best.m == 0 || bits < best.expected_bits) best = {m, l, bits};
    }
  }
  return best;
}

struct TuneResult {
  TunedParams params;
  double expected_bits;
};

inline TuneResult tune_with_cost(
    const analysis::ExponentHistogram& hist,
    std::span<const std::uint32_t> group_lengths = kDefaultGroupLengths) {
  const auto linear = search_linear_params(hist);
  const auto cdf = bitwidth_cdf(hist, linear.b, linear.n);
  const auto choice = select_threshold_and_group(cdf, linear.n, group_lengths);
  return {{linear.b, linear.n, choice.m, choice.group_length}, choice.expected_bits};
}

inline TunedParams tune(const analysis::ExponentHistogram& hist,
                        std::span<const std::uint32_t> group_lengths = kDefaultGroupLengths) {
  return tune_with_cost(hist, group_lengths).params;
}

/// Bits per element predicted for `params` on `hist`, with (1 + mantissa)
/// residue bits added: the compression ratio this implies is
/// total_bits / predicted_bits_per_element.
inline double predicted_ratio(const analysis::ExponentHistogram& hist, const TunedParams& params,
                              unsigned total_bits, unsigned residue_bits) {
  const auto cdf = bitwidth_cdf(hist, params.b, params.n);
  const double bexp = expected_bits(params.n, params.m, params.group_length, cdf.at(params.m));
  return total_bits / (residue_bits + bexp);
}

}  // namespace enec::tuner
