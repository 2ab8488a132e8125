#pragma once

// Bit-level packing of mapped exponent codes and residues.
//
//  * group_classify / classify_inverse: two-level bit-width quantization. A
//    group of L codes is "anomalous" when the bitwise OR of its codes needs
//    more than m bits; every element keeps its low m bits, anomalous groups
//    additionally keep the high (n - m) bits.
//  * hh_pack / hh_unpack: hierarchical halving packer for N = 2^k values of
//    width a <= 8 held in 16-bit lanes.
//  * fixed_pack / fixed_unpack: plain LSB-first concatenation for widths up
//    to 32 bits (sign+mantissa residues).

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "enec/error.hpp"
#include "enec/scan.hpp"

namespace enec::bitpack {

// ---------------------------------------------------------------------------
// Fixed-width LSB-first packing

/// Appends values of `width` bits to a byte vector, least significant bit first.
class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}
  BitWriter(const BitWriter&) = delete;
  BitWriter& operator=(const BitWriter&) = delete;
  ~BitWriter() { flush(); }

  void put(std::uint32_t value, unsigned width) {
    acc_ |= static_cast<std::uint64_t>(value) << fill_;
    fill_ += width;
    while (fill_ >= 8) {
      out_.push_back(static_cast<std::uint8_t>(acc_));
      acc_ >>= 8;
      fill_ -= 8;
    }
  }

  /// Emits the partial trailing byte, zero padded.
  void flush() {
    if (fill_ > 0) {
      out_.push_back(static_cast<std::uint8_t>(acc_));
      acc_ = 0;
      fill_ = 0;
    }
  }

 private:
  std::vector<std::uint8_t>& out_;
  std::uint64_t acc_ = 0;
  unsigned fill_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint32_t get(unsigned width) {
    while (fill_ < width) {
      const std::uint64_t byte = pos_ < in_.size() ? in_[pos_] : 0;
      ++pos_;
      acc_ |= byte << fill_;
      fill_ += 8;
    }
    const auto value = static_cast<std::uint32_t>(acc_ & ((std::uint64_t{1} << width) - 1));
    acc_ >>= width;
    fill_ -= width;
    return value;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint64_t acc_ = 0;
  unsigned fill_ = 0;
};

[[nodiscard]] constexpr std::size_t fixed_packed_size(std::size_t count, unsigned width) {
  return (count * width + 7) / 8;
}

inline void check_fixed_width(unsigned width) {
  if (width < 1 || width > 32) {
    throw RangeError("fixed width " + std::to_string(width) + " outside 1..32");
  }
}

inline std::vector<std::uint8_t> fixed_pack(std::span<const std::uint32_t> values,
                                            unsigned width) {
  check_fixed_width(width);
  const std::uint64_t limit = std::uint64_t{1} << width;
  std::vector<std::uint8_t> out;
  out.reserve(fixed_packed_size(values.size(), width));
  BitWriter writer(out);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] >= limit) {
      throw RangeError("value " + std::to_string(values[i]) + " at index " +
                       std::to_string(i) + " does not fit in " + std::to_string(width) +
                       " bits");
    }
    writer.put(values[i], width);
  }
  writer.flush();
  return out;
}

inline std::vector<std::uint32_t> fixed_unpack(std::span<const std::uint8_t> bytes,
                                               std::size_t count, unsigned width) {
  check_fixed_width(width);
  if (bytes.size() != fixed_packed_size(count, width)) {
    throw LengthError("fixed-width stream of " + std::to_string(bytes.size()) +
                      " bytes, expected " +
                      std::to_string(fixed_packed_size(count, width)));
  }
  std::vector<std::uint32_t> out(count);
  BitReader reader(bytes);
  for (auto& v : out) v = reader.get(width);
  return out;
}

// ---------------------------------------------------------------------------
// Hierarchical halving bit-packing

struct PackedStream {
  std::vector<std::uint8_t> bytes;
  std::size_t count = 0;  // N, a power of two
  unsigned width = 0;     // a, 1..8

  friend bool operator==(const PackedStream&, const PackedStream&) = default;
};

/// ceil(N * a / 8) rounded up to an even byte count.
[[nodiscard]] constexpr std::size_t hh_packed_size(std::size_t count, unsigned width) {
  const std::size_t bytes = (count * width + 7) / 8;
  return bytes + (bytes & 1);
}

namespace detail {

inline void check_hh_shape(std::size_t count, unsigned width) {
  if (count == 0 || !std::has_single_bit(count)) {
    throw ShapeError("element count " + std::to_string(count) + " is not a power of two");
  }
  if (width < 1 || width > 8) {
    throw ShapeError("bit width " + std::to_string(width) + " outside 1..8");
  }
}

// One pass of the outer loop: `folds` lane-halving steps, then extraction of
// one byte from each of the `length` remaining lanes. fold_widths[k] is the
// shift used by the k-th fold.
struct Pass {
  std::vector<unsigned> fold_widths;
  std::size_t length = 0;
};

// The pass sequence depends only on (N, a); packer and unpacker share it.
inline std::vector<Pass> hh_schedule(std::size_t count, unsigned width) {
  std::vector<Pass> passes;
  int w = static_cast<int>(width);
  std::size_t length = count;
  while (w > 0) {
    Pass pass;
    while (length > 1 && w < 8) {
      length /= 2;
      pass.fold_widths.push_back(static_cast<unsigned>(w));
      w *= 2;
    }
    pass.length = length;
    passes.push_back(std::move(pass));
    w -= 8;
  }
  return passes;
}

}  // namespace detail

/// Packs N = 2^k values of `width` bits (1..8) into an even-length byte stream.
///
/// Lanes are folded pairwise (lane i absorbs lane i + length shifted by the
/// current width) until the width reaches 8 bits; the low byte of every lane
/// is then emitted and the leftover high bits are folded again on the next
/// pass. The emitted bytes are zero padded to an even count and interleaved
/// into 16-bit little-endian words: word i = byte[i] | byte[i + T/2] << 8.
inline PackedStream hh_pack(std::span<const std::uint16_t> values, unsigned width) {
  detail::check_hh_shape(values.size(), width);
  const unsigned limit = 1u << width;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] >= limit) {
      throw ShapeError("value " + std::to_string(values[i]) + " at index " +
                       std::to_string(i) + " does not fit in " + std::to_string(width) +
                       " bits");
    }
  }

  std::vector<std::uint16_t> data(values.begin(), values.end());
  std::vector<std::uint8_t> normalized;
  normalized.reserve(hh_packed_size(values.size(), width));

  for (const auto& pass : detail::hh_schedule(values.size(), width)) {
    std::size_t length = data.size();
    for (const unsigned w : pass.fold_widths) {
      length /= 2;
      for (std::size_t i = 0; i < length; ++i) {
        data[i] = static_cast<std::uint16_t>(data[i] | (data[i + length] << w));
      }
    }
    data.resize(pass.length);
    for (auto& lane : data) {
      normalized.push_back(static_cast<std::uint8_t>(lane & 0xFF));
      lane = static_cast<std::uint16_t>(lane >> 8);
    }
  }

  if (normalized.size() % 2 != 0) normalized.push_back(0);

  const std::size_t half = normalized.size() / 2;
  PackedStream out{std::vector<std::uint8_t>(normalized.size()), values.size(), width};
  for (std::size_t i = 0; i < half; ++i) {
    out.bytes[2 * i] = normalized[i];
    out.bytes[2 * i + 1] = normalized[i + half];
  }
  return out;
}

inline std::vector<std::uint16_t> hh_unpack(std::span<const std::uint8_t> bytes,
                                            std::size_t count, unsigned width) {
  detail::check_hh_shape(count, width);
  const std::size_t expected = hh_packed_size(count, width);
  if (bytes.size() != expected) {
    throw LengthError("packed stream of " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(expected));
  }

  const std::size_t half = bytes.size() / 2;
  std::vector<std::uint8_t> normalized(bytes.size());
  for (std::size_t i = 0; i < half; ++i) {
    normalized[i] = bytes[2 * i];
    normalized[i + half] = bytes[2 * i + 1];
  }

  const auto passes = detail::hh_schedule(count, width);
  std::size_t consumed = 0;
  for (const auto& pass : passes) consumed += pass.length;

  std::vector<std::uint16_t> data(count, 0);
  std::size_t length = passes.empty() ? count : passes.back().length;
  for (auto pass = passes.rbegin(); pass != passes.rend(); ++pass) {
    consumed -= pass->length;
    for (std::size_t j = 0; j < pass->length; ++j) {
      data[j] = static_cast<std::uint16_t>((data[j] << 8) | normalized[consumed + j]);
    }
    for (auto w = pass->fold_widths.rbegin(); w != pass->fold_widths.rend(); ++w) {
      const auto mask = static_cast<std::uint16_t>((1u << *w) - 1);
      for (std::size_t i = 0; i < length; ++i) {
        data[i + length] = static_cast<std::uint16_t>(data[i] >> *w);
        data[i] = static_cast<std::uint16_t>(data[i] & mask);
      }
      length *= 2;
    }
  }
  return data;
}

inline std::vector<std::uint16_t> hh_unpack(const PackedStream& stream) {
  return hh_unpack(stream.bytes, stream.count, stream.width);
}

/// Packed size of an arbitrary-length sequence split into power-of-two
/// chunks (largest first), each packed with hh_pack.
[[nodiscard]] constexpr std::size_t hh_chunked_size(std::size_t count, unsigned width) {
  std::size_t total = 0;
  while (count > 0) {
    const std::size_t chunk = std::bit_floor(count);
    total += hh_packed_size(chunk, width);
    count -= chunk;
  }
  return total;
}

inline void hh_pack_chunked(std::span<const std::uint16_t> values, unsigned width,
                            std::vector<std::uint8_t>& out) {
  while (!values.empty()) {
    const std::size_t chunk = std::bit_floor(values.size());
    const auto packed = hh_pack(values.first(chunk), width);
    out.insert(out.end(), packed.bytes.begin(), packed.bytes.end());
    values = values.subspan(chunk);
  }
}

inline std::vector<std::uint16_t> hh_unpack_chunked(std::span<const std::uint8_t> bytes,
                                                    std::size_t count, unsigned width) {
  if (bytes.size() != hh_chunked_size(count, width)) {
    throw LengthError("chunked stream of " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(hh_chunked_size(count, width)));
  }
  std::vector<std::uint16_t> out;
  out.reserve(count);
  while (count > 0) {
    const std::size_t chunk = std::bit_floor(count);
    const std::size_t size = hh_packed_size(chunk, width);
    const auto part = hh_unpack(bytes.first(size), chunk, width);
    out.insert(out.end(), part.begin(), part.end());
    bytes = bytes.subspan(size);
    count -= chunk;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Two-level group classification

struct GroupClassification {
  std::vector<std::uint8_t> mask;   // group g -> bit (g % 8) of byte g / 8
  std::size_t group_count = 0;
  std::vector<std::uint16_t> low;   // low m bits of every element
  std::vector<std::uint16_t> high;  // high n - m bits, anomalous groups only

  [[nodiscard]] bool anomalous(std::size_t g) const {
    return (mask[g / 8] >> (g % 8)) & 1u;
  }

  [[nodiscard]] std::size_t anomalous_count() const {
    std::size_t total = 0;
    for (const auto byte : mask) total += static_cast<std::size_t>(std::popcount(byte));
    return total;
  }

  friend bool operator==(const GroupClassification&, const GroupClassification&) = default;
};

[[nodiscard]] constexpr std::size_t mask_bytes(std::size_t group_count) {
  return (group_count + 7) / 8;
}

inline GroupClassification group_classify(std::span<const std::uint16_t> codes,
                                          std::size_t group_length, unsigned m, unsigned n) {
  if (group_length == 0 || codes.size() % group_length != 0) {
    throw AlignmentError(std::to_string(codes.size()) + " codes do not split into groups of " +
                         std::to_string(group_length));
  }
  if (m < 1 || m > n || n > 16) {
    throw RangeError("threshold m=" + std::to_string(m) + " invalid for n=" + std::to_string(n));
  }

  GroupClassification cls;
  cls.group_count = codes.size() / group_length;
  cls.mask.assign(mask_bytes(cls.group_count), 0);
  cls.low.resize(codes.size());

  const auto low_mask = static_cast<std::uint16_t>((1u << m) - 1);
  for (std::size_t g = 0; g < cls.group_count; ++g) {
    const auto group = codes.subspan(g * group_length, group_length);
    std::uint16_t any = 0;
    for (std::size_t i = 0; i < group_length; ++i) {
      any = static_cast<std::uint16_t>(any | group[i]);
      cls.low[g * group_length + i] = static_cast<std::uint16_t>(group[i] & low_mask);
    }
    if ((any >> m) != 0) {
      cls.mask[g / 8] = static_cast<std::uint8_t>(cls.mask[g / 8] | (1u << (g % 8)));
      for (const auto code : group) cls.high.push_back(static_cast<std::uint16_t>(code >> m));
    }
  }
  return cls;
}

/// Rebuilds the codes. Each anomalous group finds its high bits at
/// L * (number of anomalous groups before it), computed with the tile scan.
inline std::vector<std::uint16_t> classify_inverse(const GroupClassification& cls,
                                                   std::size_t group_length, unsigned m) {
  if (cls.low.size() != cls.group_count * group_length ||
      cls.mask.size() != mask_bytes(cls.group_count)) {
    throw ConsistencyError("classification shape does not match group count");
  }
  std::vector<std::uint8_t> flags(cls.group_count);
  for (std::size_t g = 0; g < cls.group_count; ++g) flags[g] = cls.anomalous(g) ? 1 : 0;

  const auto before = scan::exclusive_flag_counts(flags);
  const std::size_t anomalous = cls.group_count == 0 ? 0 : before.back() + flags.back();
  if (cls.high.size() != anomalous * group_length) {
    throw ConsistencyError("overflow holds " + std::to_string(cls.high.size()) +
                           " values, mask implies " + std::to_string(anomalous * group_length));
  }

  std::vector<std::uint16_t> codes(cls.low);
  for (std::size_t g = 0; g < cls.group_count; ++g) {
    if (!flags[g]) continue;
    const std::size_t src = static_cast<std::size_t>(before[g]) * group_length;
    for (std::size_t i = 0; i < group_length; ++i) {
      auto& code = codes[g * group_length + i];
      code = static_cast<std::uint16_t>(code | (cls.high[src + i] << m));
    }
  }
  return codes;
}

}  // namespace enec::bitpack
