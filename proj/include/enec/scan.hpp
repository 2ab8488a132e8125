#pragma once

// Prefix sums over N x 16 tiles without element dependencies inside a row.
//
// A row of 16 16-bit lanes is one 32-byte segment. The scan never adds two
// lanes of the same row to each other: rows are scanned through a transpose
// (stage 1), then row offsets are propagated with whole-row additions
// (stage 2).

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "enec/error.hpp"

namespace enec::scan {

inline constexpr std::size_t kTileCols = 16;

/// Row-major N x 16 matrix of scan lanes. N must be a power of two.
template <typename Lane>
class BasicTile {
 public:
  BasicTile() = default;

  explicit BasicTile(std::size_t rows) : rows_(rows), values_(rows * kTileCols) {}

  BasicTile(std::size_t rows, std::vector<Lane> values)
      : rows_(rows), values_(std::move(values)) {
    if (values_.size() != rows_ * kTileCols) {
      throw ShapeError("tile holds " + std::to_string(values_.size()) +
                       " values, expected rows * 16 = " +
                       std::to_string(rows_ * kTileCols));
    }
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] static constexpr std::size_t cols() noexcept { return kTileCols; }

  Lane& at(std::size_t r, std::size_t c) { return values_[r * kTileCols + c]; }
  [[nodiscard]] Lane at(std::size_t r, std::size_t c) const {
    return values_[r * kTileCols + c];
  }

  [[nodiscard]] std::span<Lane> row(std::size_t r) {
    return {values_.data() + r * kTileCols, kTileCols};
  }
  [[nodiscard]] std::span<const Lane> row(std::size_t r) const {
    return {values_.data() + r * kTileCols, kTileCols};
  }

  [[nodiscard]] std::span<const Lane> flat() const noexcept { return values_; }
  [[nodiscard]] std::span<Lane> flat() noexcept { return values_; }

  friend bool operator==(const BasicTile&, const BasicTile&) = default;

 private:
  std::size_t rows_ = 0;
  std::vector<Lane> values_;
};

using Tile = BasicTile<std::uint16_t>;

namespace detail {

template <typename Lane>
void check_shape(const BasicTile<Lane>& tile) {
  if (tile.rows() == 0 || !std::has_single_bit(tile.rows())) {
    throw ShapeError("tile row count " + std::to_string(tile.rows()) +
                     " is not a power of two");
  }
}

// dst[i] += src[i] over whole rows; the only arithmetic the scan performs.
template <typename Lane>
void add_rows(std::span<Lane> dst, std::span<const Lane> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Lane>(dst[i] + src[i]);
}

}  // namespace detail

/// Stage 1: every row replaced by its own inclusive prefix sum.
///
/// The tile is transposed to 16 x N so each original row becomes a column;
/// log2(16) Hillis-Steele steps of full-row additions then scan all columns
/// at once, and a second transpose restores the N x 16 orientation.
template <typename Lane>
BasicTile<Lane> row_local_scan(const BasicTile<Lane>& tile) {
  detail::check_shape(tile);
  const std::size_t n = tile.rows();

  std::vector<Lane> t(kTileCols * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < kTileCols; ++c) t[c * n + r] = tile.at(r, c);

  for (std::size_t step = 1; step < kTileCols; step <<= 1) {
    // Descending order keeps t[j - step] at its pre-step value.
    for (std::size_t j = kTileCols - 1; j >= step; --j) {
      detail::add_rows<Lane>({t.data() + j * n, n},
                             std::span<const Lane>(t.data() + (j - step) * n, n));
    }
  }

  BasicTile<Lane> r_mat(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < kTileCols; ++c) r_mat.at(r, c) = t[c * n + r];
  return r_mat;
}

/// Drop the last inclusive total and shift a zero in at the top.
template <typename Lane>
std::vector<Lane> exclusive_offsets(std::span<const Lane> inclusive_last_col) {
  std::vector<Lane> out(inclusive_last_col.size(), Lane{0});
  for (std::size_t i = 1; i < out.size(); ++i) out[i] = inclusive_last_col[i - 1];
  return out;
}

/// Inclusive prefix sum of the flattened tile.
template <typename Lane>
BasicTile<Lane> idd_scan(const BasicTile<Lane>& tile) {
  BasicTile<Lane> r_mat = row_local_scan(tile);
  const std::size_t n = r_mat.rows();

  // Stage 2: hierarchical whole-row propagation on a copy.
  BasicTile<Lane> c_mat = r_mat;
  for (std::size_t step = 1; step < n; step <<= 1) {
    for (std::size_t i = n - 1; i >= step; --i) {
      detail::add_rows<Lane>(c_mat.row(i), std::as_const(c_mat).row(i - step));
    }
  }

  std::vector<Lane> inclusive(n);
  for (std::size_t i = 0; i < n; ++i) inclusive[i] = c_mat.at(i, kTileCols - 1);
  const std::vector<Lane> offsets = exclusive_offsets<Lane>(inclusive);

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < kTileCols; ++c)
      r_mat.at(i, c) = static_cast<Lane>(r_mat.at(i, c) + offsets[i]);
  return r_mat;
}

/// Textbook inclusive prefix sum; the reference the tile scan is held to.
template <typename T>
std::vector<T> serial_scan(std::span<const T> values) {
  std::vector<T> out(values.size());
  T acc{0};
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc = static_cast<T>(acc + values[i]);
    out[i] = acc;
  }
  return out;
}

/// Exclusive running count of set flags (each flag 0 or 1), computed by
/// laying the flags out as zero-padded N x 16 tiles and running idd_scan.
inline std::vector<std::uint32_t> exclusive_flag_counts(std::span<const std::uint8_t> flags) {
  if (flags.empty()) return {};
  const std::size_t rows = std::bit_ceil((flags.size() + kTileCols - 1) / kTileCols);
  BasicTile<std::uint32_t> tile(rows);
  auto lanes = tile.flat();
  for (std::size_t i = 0; i < flags.size(); ++i) lanes[i] = flags[i];

  const auto inclusive = idd_scan(tile);
  const auto inc = inclusive.flat();
  std::vector<std::uint32_t> out(flags.size());
  for (std::size_t i = 0; i < flags.size(); ++i) out[i] = inc[i] - flags[i];
  return out;
}

}  // namespace enec::scan
