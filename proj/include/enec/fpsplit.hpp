#pragma once

// Field separation of IEEE-754 element streams. Exponents are extracted as
// integers; sign and mantissa travel together as one (1 + mantissa)-bit
// residue per element, sign in the top bit, packed LSB-first. Values are
// never interpreted, so NaN/Inf/subnormal patterns pass through untouched.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "enec/bitpack.hpp"
#include "enec/error.hpp"

namespace enec {

/// Numeric codes double as the container's format byte.
enum class FormatId : std::uint8_t { FP32 = 0, FP16 = 1, BF16 = 2 };

struct FloatFormat {
  FormatId id;
  std::string_view name;
  unsigned total_bits;
  unsigned exponent_bits;
  unsigned mantissa_bits;

  [[nodiscard]] constexpr unsigned bytes() const noexcept { return total_bits / 8; }
  [[nodiscard]] constexpr unsigned residue_bits() const noexcept { return 1 + mantissa_bits; }
  [[nodiscard]] constexpr std::uint32_t exponent_limit() const noexcept {
    return std::uint32_t{1} << exponent_bits;
  }

  friend constexpr bool operator==(const FloatFormat& a, const FloatFormat& b) noexcept {
    return a.id == b.id;
  }
};

inline constexpr FloatFormat kFP32{FormatId::FP32, "FP32", 32, 8, 23};
inline constexpr FloatFormat kFP16{FormatId::FP16, "FP16", 16, 5, 10};
inline constexpr FloatFormat kBF16{FormatId::BF16, "BF16", 16, 8, 7};

static_assert(kFP32.total_bits == 1 + kFP32.exponent_bits + kFP32.mantissa_bits);
static_assert(kFP16.total_bits == 1 + kFP16.exponent_bits + kFP16.mantissa_bits);
static_assert(kBF16.total_bits == 1 + kBF16.exponent_bits + kBF16.mantissa_bits);

inline FloatFormat format_from_id(std::uint8_t code) {
  switch (code) {
    case 0: return kFP32;
    case 1: return kFP16;
    case 2: return kBF16;
    default: throw FormatError("unknown format code " + std::to_string(code));
  }
}

/// Accepts "BF16", "FP16", "FP32" and the safetensors spellings "F16"/"F32",
/// case-insensitively. Integer and FP8 formats are rejected.
inline FloatFormat format_from_name(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "BF16") return kBF16;
  if (upper == "FP16" || upper == "F16") return kFP16;
  if (upper == "FP32" || upper == "F32") return kFP32;
  throw FormatError("unsupported element format '" + std::string(name) +
                    "' (expected BF16, FP16 or FP32)");
}

struct SplitPayload {
  std::vector<std::uint16_t> exponents;
  std::vector<std::uint8_t> residue;
  std::size_t element_count = 0;

  friend bool operator==(const SplitPayload&, const SplitPayload&) = default;
};

namespace detail {

inline std::uint32_t load_element(const std::uint8_t* p, unsigned bytes) {
  std::uint32_t v = 0;
  for (unsigned i = 0; i < bytes; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

inline void store_element(std::uint8_t* p, std::uint32_t v, unsigned bytes) {
  for (unsigned i = 0; i < bytes; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace detail

inline SplitPayload split(std::span<const std::uint8_t> raw, const FloatFormat& fmt) {
  if (raw.size() % fmt.bytes() != 0) {
    throw LengthError(std::to_string(raw.size()) + " bytes is not a whole number of " +
                      std::string(fmt.name) + " elements");
  }
  const std::size_t count = raw.size() / fmt.bytes();
  const std::uint32_t mant_mask = (std::uint32_t{1} << fmt.mantissa_bits) - 1;
  const std::uint32_t exp_mask = fmt.exponent_limit() - 1;
  const unsigned sign_shift = fmt.mantissa_bits + fmt.exponent_bits;

  SplitPayload out;
  out.element_count = count;
  out.exponents.resize(count);
  out.residue.reserve(bitpack::fixed_packed_size(count, fmt.residue_bits()));
  {
    bitpack::BitWriter writer(out.residue);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t v = detail::load_element(raw.data() + i * fmt.bytes(), fmt.bytes());
      out.exponents[i] = static_cast<std::uint16_t>((v >> fmt.mantissa_bits) & exp_mask);
      writer.put(((v >> sign_shift) << fmt.mantissa_bits) | (v & mant_mask), fmt.residue_bits());
    }
  }
  return out;
}

/// Exponent field of every element, without building the residue stream.
inline std::vector<std::uint16_t> extract_exponents(std::span<const std::uint8_t> raw,
                                                    const FloatFormat& fmt) {
  if (raw.size() % fmt.bytes() != 0) {
    throw LengthError(std::to_string(raw.size()) + " bytes is not a whole number of " +
                      std::string(fmt.name) + " elements");
  }
  const std::size_t count = raw.size() / fmt.bytes();
  const std::uint32_t exp_mask = fmt.exponent_limit() - 1;
  std::vector<std::uint16_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t v = detail::load_element(raw.data() + i * fmt.bytes(), fmt.bytes());
    out[i] = static_cast<std::uint16_t>((v >> fmt.mantissa_bits) & exp_mask);
  }
  return out;
}

/// Writes the reassembled elements into `out`, which must hold exactly
/// element_count * bytes-per-element bytes.
inline void combine_into(const SplitPayload& payload, const FloatFormat& fmt,
                         std::span<std::uint8_t> out) {
  if (payload.exponents.size() != payload.element_count) {
    throw ConsistencyError(std::to_string(payload.exponents.size()) + " exponents for " +
                           std::to_string(payload.element_count) + " elements");
  }
  const std::size_t residue_size =
      bitpack::fixed_packed_size(payload.element_count, fmt.residue_bits());
  if (payload.residue.size() != residue_size) {
    throw ConsistencyError("residue stream of " + std::to_string(payload.residue.size()) +
                           " bytes, expected " + std::to_string(residue_size));
  }
  if (out.size() != payload.element_count * fmt.bytes()) {
    throw ConsistencyError("output buffer size does not match element count");
  }

  const std::uint32_t mant_mask = (std::uint32_t{1} << fmt.mantissa_bits) - 1;
  const std::uint32_t exp_mask = fmt.exponent_limit() - 1;
  const unsigned sign_shift = fmt.mantissa_bits + fmt.exponent_bits;
  bitpack::BitReader reader(payload.residue);
  for (std::size_t i = 0; i < payload.element_count; ++i) {
    const std::uint32_t r = reader.get(fmt.residue_bits());
    if (payload.exponents[i] > exp_mask) {
      throw ConsistencyError("exponent " + std::to_string(payload.exponents[i]) +
                             " at index " + std::to_string(i) + " exceeds the field width");
    }
    const std::uint32_t v = ((r >> fmt.mantissa_bits) << sign_shift) |
                            (std::uint32_t{payload.exponents[i]} << fmt.mantissa_bits) |
                            (r & mant_mask);
    detail::store_element(out.data() + i * fmt.bytes(), v, fmt.bytes());
  }
}

inline std::vector<std::uint8_t> combine(const SplitPayload& payload, const FloatFormat& fmt) {
  std::vector<std::uint8_t> out(payload.element_count * fmt.bytes());
  combine_into(payload, fmt, out);
  return out;
}

}  // namespace enec
