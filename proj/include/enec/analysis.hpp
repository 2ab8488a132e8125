#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "enec/error.hpp"

namespace enec::analysis {

/// Exact counts of each exponent value over 2^E bins, with the occupied
/// range [low, high].
struct ExponentHistogram {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
  std::uint32_t low = 0;
  std::uint32_t high = 0;

  [[nodiscard]] double probability(std::uint32_t x) const {
    return x < counts.size() ? static_cast<double>(counts[x]) / static_cast<double>(total) : 0.0;
  }

  [[nodiscard]] unsigned exponent_bits() const {
    return static_cast<unsigned>(std::countr_zero(counts.size()));
  }

  friend bool operator==(const ExponentHistogram&, const ExponentHistogram&) = default;
};

/// Builds a histogram from explicit counts (bins = counts.size(), a power of two).
inline ExponentHistogram histogram_from_counts(std::vector<std::uint64_t> counts) {
  ExponentHistogram hist;
  hist.total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  if (hist.total == 0) throw EmptyInput("histogram has no samples");
  const auto first = std::find_if(counts.begin(), counts.end(), [](auto c) { return c > 0; });
  const auto last = std::find_if(counts.rbegin(), counts.rend(), [](auto c) { return c > 0; });
  hist.low = static_cast<std::uint32_t>(first - counts.begin());
  hist.high = static_cast<std::uint32_t>(counts.rend() - last - 1);
  hist.counts = std::move(counts);
  return hist;
}

inline ExponentHistogram build_histogram(std::span<const std::uint16_t> exponents,
                                         unsigned exponent_bits) {
  if (exponents.empty()) throw EmptyInput("no exponents to histogram");
  std::vector<std::uint64_t> counts(std::size_t{1} << exponent_bits, 0);
  for (std::size_t i = 0; i < exponents.size(); ++i) {
    if (exponents[i] >= counts.size()) {
      throw RangeError("exponent " + std::to_string(exponents[i]) + " at index " +
                       std::to_string(i) + " needs more than " +
                       std::to_string(exponent_bits) + " bits");
    }
    ++counts[exponents[i]];
  }
  return histogram_from_counts(std::move(counts));
}

/// Shannon entropy in bits.
inline double entropy(const ExponentHistogram& hist) {
  double h = 0.0;
  for (const auto c : hist.counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(hist.total);
    h -= p * std::log2(p);
  }
  return h;
}

struct RankFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Frequency rank of every occupied exponent: the most frequent value gets
/// `first_rank`, equal counts are ordered by ascending exponent value.
/// Returned as (exponent, rank) pairs in rank order.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> frequency_ranks(
    const ExponentHistogram& hist, std::uint32_t first_rank = 0) {
  std::vector<std::uint32_t> values;
  for (std::uint32_t x = 0; x < hist.counts.size(); ++x)
    if (hist.counts[x] > 0) values.push_back(x);
  std::stable_sort(values.begin(), values.end(), [&](std::uint32_t a, std::uint32_t b) {
    return hist.counts[a] > hist.counts[b];
  });
  std::vector<std::pair<std::uint32_t, std::uint32_t>> ranks;
  ranks.reserve(values.size());
  for (std::uint32_t i = 0; i < values.size(); ++i) ranks.emplace_back(values[i], first_rank + i);
  return ranks;
}

/// Least-squares line rank = slope * exponent + intercept over the occupied
/// exponents. Ranks start at `first_rank` (0 by default, so the fitted
/// intercept lands on the exponent that maps to code 0).
inline RankFit rank_fit(const ExponentHistogram& hist, std::uint32_t first_rank = 0) {
  const auto ranks = frequency_ranks(hist, first_rank);
  if (ranks.size() < 2) {
    throw DegenerateInput("rank fit needs at least two distinct exponents, got " +
                          std::to_string(ranks.size()));
  }
  const double k = static_cast<double>(ranks.size());
  double sx = 0, sy = 0;
  for (const auto& [x, r] : ranks) {
    sx += x;
    sy += r;
  }
  const double mx = sx / k, my = sy / k;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [x, r] : ranks) {
    const double dx = x - mx, dy = r - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  RankFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

}  // namespace enec::analysis
