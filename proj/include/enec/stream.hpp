#pragma once

// Block-parallel .enec container.
//
// File layout (all integers little-endian):
//
//   FileHeader (20 bytes)
//     0  magic "ENEC"
//     4  u16 version (1)
//     6  u8  format code (0 FP32, 1 FP16, 2 BF16)
//     7  u8  flags (bit 0: each tensor record starts with its own format byte)
//     8  u32 block size in elements
//     12 u32 tensor count
//     16 u32 CRC-32 of every byte after the header
//   TensorRecord x tensor count
//     [u8 format code, only when header flag bit 0 is set]
//     u32 name length, name bytes (UTF-8)
//     u64 element count
//     u16 b, u8 n, u8 m, u32 L
//     block directory, ceil(count / block size) entries of
//       u64 payload offset (from the start of the payload section)
//       u32 payload size
//       u8  block flags (bit 0: raw fallback)
//   payloads, tensor by tensor, block by block
//
// A coded block of c elements is padded with code 0 to P = max(L, 2^ceil(log2 c))
// elements (full blocks are already a power of two) and stored as
//
//   mask      ceil(P / L / 8) bytes, group g at bit g % 8 of byte g / 8
//   low       hh_pack of the low m bits of all P codes
//   overflow  u32 anomalous group count A, then the high n - m bits of the
//             A * L codes of anomalous groups, hh_pack'ed in power-of-two
//             chunks (largest first)
//   residue   fixed_pack of the c sign+mantissa residues
//
// A raw block stores the original element bytes. A block is stored raw when
// one of its exponents falls outside the (b, n) window or when coding would
// not make it smaller.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cstdint>
#include <cstring>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "enec/analysis.hpp"
#include "enec/bitpack.hpp"
#include "enec/error.hpp"
#include "enec/fpsplit.hpp"
#include "enec/scan.hpp"
#include "enec/transform.hpp"
#include "enec/tuner.hpp"

namespace enec::stream {

using tuner::TunedParams;

inline constexpr std::array<std::uint8_t, 4> kMagic{'E', 'N', 'E', 'C'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 20;
inline constexpr std::uint32_t kDefaultBlockSize = 16384;
inline constexpr std::uint8_t kFlagPerTensorFormat = 0x01;
inline constexpr std::uint8_t kBlockRaw = 0x01;
inline constexpr std::size_t kDirectoryEntrySize = 13;

struct FileHeader {
  FormatId format = FormatId::FP32;
  std::uint8_t flags = 0;
  std::uint32_t block_size = kDefaultBlockSize;
  std::uint32_t tensor_count = 0;
  std::uint32_t checksum = 0;
};

struct BlockEntry {
  std::uint64_t offset = 0;
  std::uint32_t size = 0;
  std::uint8_t flags = 0;

  [[nodiscard]] bool raw() const noexcept { return (flags & kBlockRaw) != 0; }
};

struct TensorRecord {
  std::string name;
  FloatFormat format = kBF16;
  std::uint64_t element_count = 0;
  TunedParams params;
  std::vector<BlockEntry> blocks;
};

struct CodecOptions {
  std::uint32_t block_size = kDefaultBlockSize;
  unsigned workers = 1;
  std::vector<std::uint32_t> group_lengths{tuner::kDefaultGroupLengths.begin(),
                                           tuner::kDefaultGroupLengths.end()};
};

struct TensorInput {
  std::string name;
  FloatFormat format = kBF16;
  std::span<const std::uint8_t> data;
  std::optional<TunedParams> params;  // tuned from the data when empty
};

struct RatioReport {
  std::uint64_t original_bytes = 0;
  std::uint64_t compressed_bytes = 0;
  double compression_ratio = 0.0;
  double exponent_bits_per_element = 0.0;
  std::optional<double> formula_ratio;  // predicted from the exponent histogram; empty when undefined
  std::uint64_t overhead_bytes = 0;     // header + tensor table
  std::uint64_t payload_bytes = 0;
  std::uint64_t raw_blocks = 0;
  std::uint64_t total_blocks = 0;
};

// ---------------------------------------------------------------------------
// Little-endian helpers

namespace detail {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
    }
  }
  void bytes(std::span<const std::uint8_t> data) { out_.insert(out_.end(), data.begin(), data.end()); }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> in, std::size_t pos) : in_(in), pos_(pos) {}

  template <typename T>
  T get(const char* section) {
    need(sizeof(T), section);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::span<const std::uint8_t> bytes(std::size_t n, const char* section) {
    need(n, section);
    auto out = in_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  [[nodiscard]] std::size_t pos() const noexcept { return pos_; }

 private:
  void need(std::size_t n, const char* section) const {
    if (in_.size() - pos_ < n) {
      throw TruncationError(std::string(section) + ": needs " + std::to_string(n) +
                            " bytes at offset " + std::to_string(pos_) + ", file has " +
                            std::to_string(in_.size() - pos_) + " left");
    }
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  while (!data.empty()) {
    const std::size_t piece = std::min<std::size_t>(data.size(), 1u << 30);
    crc = ::crc32(crc, data.data(), static_cast<uInt>(piece));
    data = data.subspan(piece);
  }
  return static_cast<std::uint32_t>(crc);
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads. The exception
/// of the lowest failing index is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(
                                                         std::min<std::size_t>(count, 1024))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::size_t error_index = std::numeric_limits<std::size_t>::max();
  std::exception_ptr error;
  const auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Block layout

/// Byte sizes of the sections of a coded block.
struct BlockLayout {
  std::size_t elements = 0;
  std::size_t padded = 0;
  std::size_t groups = 0;
  std::size_t mask = 0;
  std::size_t low = 0;
  std::size_t overflow = 0;  // including the 4-byte group count
  std::size_t residue = 0;

  [[nodiscard]] std::size_t total() const noexcept { return mask + low + overflow + residue; }
};

[[nodiscard]] inline std::size_t padded_elements(std::size_t count, std::uint32_t group_length) {
  return std::max<std::size_t>(group_length, std::bit_ceil(count));
}

[[nodiscard]] inline BlockLayout block_layout(std::size_t count, const FloatFormat& fmt,
                                              const TunedParams& p, std::size_t anomalous) {
  BlockLayout layout;
  layout.elements = count;
  layout.padded = padded_elements(count, p.group_length);
  layout.groups = layout.padded / p.group_length;
  layout.mask = bitpack::mask_bytes(layout.groups);
  layout.low = bitpack::hh_packed_size(layout.padded, p.m);
  layout.overflow = 4 + (p.n > p.m ? bitpack::hh_chunked_size(anomalous * p.group_length,
                                                              p.n - p.m)
                                   : 0);
  layout.residue = bitpack::fixed_packed_size(count, fmt.residue_bits());
  return layout;
}

struct EncodedBlock {
  std::vector<std::uint8_t> bytes;
  std::uint8_t flags = 0;
};

inline EncodedBlock encode_block(std::span<const std::uint8_t> raw, const FloatFormat& fmt,
                                 const TunedParams& p) {
  const auto raw_block = [&] {
    return EncodedBlock{std::vector<std::uint8_t>(raw.begin(), raw.end()), kBlockRaw};
  };

  SplitPayload fields = split(raw, fmt);
  const std::size_t count = fields.element_count;
  const auto win = transform::window(p.b, p.n);
  const auto [lo, hi] = std::minmax_element(fields.exponents.begin(), fields.exponents.end());
  if (count == 0 || !win.contains(*lo) || !win.contains(*hi)) return raw_block();

  std::vector<std::uint16_t> codes = std::move(fields.exponents);
  transform::forward_map_batch(codes, p.b, p.n);
  codes.resize(padded_elements(count, p.group_length), 0);

  const auto cls = bitpack::group_classify(codes, p.group_length, p.m, p.n);
  const std::size_t anomalous = cls.anomalous_count();
  const auto layout = block_layout(count, fmt, p, anomalous);
  if (layout.total() >= raw.size()) return raw_block();

  EncodedBlock block;
  block.bytes.reserve(layout.total());
  detail::Writer out(block.bytes);
  out.bytes(cls.mask);
  out.bytes(bitpack::hh_pack(cls.low, p.m).bytes);
  out.put(static_cast<std::uint32_t>(anomalous));
  if (p.n > p.m) bitpack::hh_pack_chunked(cls.high, p.n - p.m, block.bytes);
  out.bytes(fields.residue);
  return block;
}

/// Decodes one block payload of `count` elements into `out`.
inline void decode_block(std::span<const std::uint8_t> payload, std::uint8_t flags,
                         std::size_t count, const FloatFormat& fmt, const TunedParams& p,
                         std::span<std::uint8_t> out) {
  if (flags & kBlockRaw) {
    if (payload.size() != out.size()) {
      throw TruncationError("raw block payload: " + std::to_string(payload.size()) +
                            " bytes, expected " + std::to_string(out.size()));
    }
    std::memcpy(out.data(), payload.data(), payload.size());
    return;
  }

  const auto base = block_layout(count, fmt, p, 0);
  detail::Reader in(payload, 0);
  bitpack::GroupClassification cls;
  cls.group_count = base.groups;
  const auto mask = in.bytes(base.mask, "block mask");
  cls.mask.assign(mask.begin(), mask.end());
  const auto low = in.bytes(base.low, "block low-bit stream");
  const auto anomalous = in.get<std::uint32_t>("block overflow count");
  if (anomalous > base.groups) {
    throw ConsistencyError("overflow count " + std::to_string(anomalous) + " exceeds " +
                           std::to_string(base.groups) + " groups");
  }
  const auto layout = block_layout(count, fmt, p, anomalous);
  if (payload.size() != layout.total()) {
    throw TruncationError("coded block payload: " + std::to_string(payload.size()) +
                          " bytes, layout requires " + std::to_string(layout.total()));
  }
  // Bits past the last group must be clear; otherwise popcount disagrees.
  if (cls.anomalous_count() != anomalous) {
    throw ConsistencyError("mask marks " + std::to_string(cls.anomalous_count()) +
                           " anomalous groups, overflow count says " + std::to_string(anomalous));
  }

  cls.low = bitpack::hh_unpack(low, base.padded, p.m);
  if (p.n > p.m) {
    const auto high = in.bytes(layout.overflow - 4, "block overflow stream");
    cls.high = bitpack::hh_unpack_chunked(high, anomalous * p.group_length, p.n - p.m);
  }
  std::vector<std::uint16_t> codes = bitpack::classify_inverse(cls, p.group_length, p.m);
  codes.resize(count);
  transform::inverse_map_batch(codes, p.b, p.n);

  SplitPayload fields;
  fields.element_count = count;
  fields.exponents = std::move(codes);
  const auto residue = in.bytes(layout.residue, "block residue stream");
  fields.residue.assign(residue.begin(), residue.end());
  combine_into(fields, fmt, out);
}

// ---------------------------------------------------------------------------
// Container parsing

/// A parsed, checksum-verified view over container bytes.
class Container {
 public:
  static Container parse(std::span<const std::uint8_t> file) {
    Container c;
    c.file_ = file;
    if (file.size() < kHeaderSize) {
      throw TruncationError("file header: " + std::to_string(file.size()) +
                            " bytes, header needs " + std::to_string(kHeaderSize));
    }
    if (!std::equal(kMagic.begin(), kMagic.end(), file.begin())) {
      throw MagicError("file header: magic is not \"ENEC\"");
    }
    detail::Reader in(file, 4);
    const auto version = in.get<std::uint16_t>("file header");
    if (version != kVersion) {
      throw VersionError("file header: version " + std::to_string(version) + ", expected " +
                         std::to_string(kVersion));
    }
    c.header_.format = format_from_id(in.get<std::uint8_t>("file header")).id;
    c.header_.flags = in.get<std::uint8_t>("file header");
    c.header_.block_size = in.get<std::uint32_t>("file header");
    c.header_.tensor_count = in.get<std::uint32_t>("file header");
    c.header_.checksum = in.get<std::uint32_t>("file header");
    if (c.header_.block_size < 16 || !std::has_single_bit(c.header_.block_size)) {
      throw FormatError("file header: block size " + std::to_string(c.header_.block_size) +
                        " is not a power of two >= 16");
    }

    const auto actual = detail::crc32_of(file.subspan(kHeaderSize));
    if (actual != c.header_.checksum) {
      throw ChecksumError("payload checksum mismatch (stored " +
                          std::to_string(c.header_.checksum) + ", computed " +
                          std::to_string(actual) + ")");
    }

    for (std::uint32_t t = 0; t < c.header_.tensor_count; ++t) {
      TensorRecord rec;
      rec.format = format_from_id(static_cast<std::uint8_t>(c.header_.format));
      if (c.header_.flags & kFlagPerTensorFormat) {
        rec.format = format_from_id(in.get<std::uint8_t>("tensor table"));
      }
      const auto name_len = in.get<std::uint32_t>("tensor table");
      const auto name = in.bytes(name_len, "tensor name");
      rec.name.assign(name.begin(), name.end());
      rec.element_count = in.get<std::uint64_t>("tensor table");
      rec.params.b = in.get<std::uint16_t>("tensor table");
      rec.params.n = in.get<std::uint8_t>("tensor table");
      rec.params.m = in.get<std::uint8_t>("tensor table");
      rec.params.group_length = in.get<std::uint32_t>("tensor table");
      tuner::validate(rec.params, rec.format.exponent_bits, c.header_.block_size);

      const std::uint64_t blocks =
          (rec.element_count + c.header_.block_size - 1) / c.header_.block_size;
      if (blocks > (file.size() - in.pos()) / kDirectoryEntrySize) {
        throw TruncationError("block directory of tensor '" + rec.name + "'");
      }
      rec.blocks.resize(blocks);
      for (auto& entry : rec.blocks) {
        entry.offset = in.get<std::uint64_t>("block directory");
        entry.size = in.get<std::uint32_t>("block directory");
        entry.flags = in.get<std::uint8_t>("block directory");
      }
      c.tensors_.push_back(std::move(rec));
    }

    c.payload_base_ = in.pos();
    const std::uint64_t payload_size = file.size() - c.payload_base_;
    std::uint64_t cursor = 0;
    for (const auto& rec : c.tensors_) {
      for (const auto& entry : rec.blocks) {
        if (entry.offset < cursor || entry.offset > payload_size ||
            entry.size > payload_size - entry.offset) {
          throw TruncationError("block directory of tensor '" + rec.name +
                                "': payload range out of order or past end of file");
        }
        cursor = entry.offset + entry.size;
      }
    }
    return c;
  }

  [[nodiscard]] const FileHeader& header() const noexcept { return header_; }
  [[nodiscard]] const std::vector<TensorRecord>& tensors() const noexcept { return tensors_; }
  [[nodiscard]] std::size_t payload_base() const noexcept { return payload_base_; }
  [[nodiscard]] std::span<const std::uint8_t> bytes() const noexcept { return file_; }

  [[nodiscard]] std::span<const std::uint8_t> payload(const BlockEntry& entry) const {
    return file_.subspan(payload_base_ + entry.offset, entry.size);
  }

  [[nodiscard]] std::size_t block_elements(const TensorRecord& rec, std::size_t block) const {
    const std::uint64_t start = std::uint64_t{block} * header_.block_size;
    return static_cast<std::size_t>(
        std::min<std::uint64_t>(header_.block_size, rec.element_count - start));
  }

  /// Decodes a single block; needs only the header, the record and the block's payload.
  [[nodiscard]] std::vector<std::uint8_t> read_block(std::size_t tensor, std::size_t block) const {
    const auto& rec = tensors_.at(tensor);
    const auto& entry = rec.blocks.at(block);
    const std::size_t count = block_elements(rec, block);
    std::vector<std::uint8_t> out(count * rec.format.bytes());
    decode_block(payload(entry), entry.flags, count, rec.format, rec.params, out);
    return out;
  }

  [[nodiscard]] std::vector<std::uint8_t> read_tensor(std::size_t tensor, unsigned workers = 1) const {
    const auto& rec = tensors_.at(tensor);
    std::vector<std::uint8_t> out(rec.element_count * rec.format.bytes());
    const std::size_t block_bytes = std::size_t{header_.block_size} * rec.format.bytes();
    detail::parallel_for(rec.blocks.size(), workers, [&](std::size_t b) {
      const std::size_t count = block_elements(rec, b);
      decode_block(payload(rec.blocks[b]), rec.blocks[b].flags, count, rec.format, rec.params,
                   std::span<std::uint8_t>(out).subspan(b * block_bytes,
                                                        count * rec.format.bytes()));
    });
    return out;
  }

 private:
  std::span<const std::uint8_t> file_;
  FileHeader header_;
  std::vector<TensorRecord> tensors_;
  std::size_t payload_base_ = 0;
};

// ---------------------------------------------------------------------------
// Compression

/// Parameters the codec would use for one tensor: the given tuple, or the
/// tuned one (group lengths restricted to divisors of the block size).
inline TunedParams resolve_params(const TensorInput& tensor, const CodecOptions& options) {
  if (tensor.params) {
    tuner::validate(*tensor.params, tensor.format.exponent_bits, options.block_size);
    return *tensor.params;
  }
  if (tensor.data.empty()) return TunedParams{};
  std::vector<std::uint32_t> lengths;
  for (const auto l : options.group_lengths)
    if (l <= options.block_size && options.block_size % l == 0) lengths.push_back(l);
  const auto hist = analysis::build_histogram(extract_exponents(tensor.data, tensor.format),
                                              tensor.format.exponent_bits);
  return tuner::tune(hist, lengths);
}

inline std::vector<std::uint8_t> compress(std::span<const TensorInput> tensors,
                                          const CodecOptions& options) {
  if (options.block_size < 16 || !std::has_single_bit(options.block_size)) {
    throw FormatError("block size " + std::to_string(options.block_size) +
                      " is not a power of two >= 16");
  }
  struct Job {
    std::size_t tensor;
    std::size_t block;
  };
  std::vector<TunedParams> params;
  std::vector<Job> jobs;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const auto& tensor = tensors[t];
    if (tensor.data.size() % tensor.format.bytes() != 0) {
      throw LengthError("tensor '" + tensor.name + "': " + std::to_string(tensor.data.size()) +
                        " bytes is not a whole number of " + std::string(tensor.format.name) +
                        " elements");
    }
    params.push_back(resolve_params(tensor, options));
    const std::size_t count = tensor.data.size() / tensor.format.bytes();
    const std::size_t blocks = (count + options.block_size - 1) / options.block_size;
    for (std::size_t b = 0; b < blocks; ++b) jobs.push_back({t, b});
  }

  std::vector<EncodedBlock> encoded(jobs.size());
  detail::parallel_for(jobs.size(), options.workers, [&](std::size_t j) {
    const auto& tensor = tensors[jobs[j].tensor];
    const std::size_t block_bytes = std::size_t{options.block_size} * tensor.format.bytes();
    const std::size_t start = jobs[j].block * block_bytes;
    const std::size_t len = std::min(block_bytes, tensor.data.size() - start);
    encoded[j] = encode_block(tensor.data.subspan(start, len), tensor.format,
                              params[jobs[j].tensor]);
  });

  const bool mixed = std::any_of(tensors.begin(), tensors.end(), [&](const TensorInput& t) {
    return !(t.format == tensors.front().format);
  });

  std::vector<std::uint8_t> file;
  detail::Writer out(file);
  out.bytes(kMagic);
  out.put(kVersion);
  out.put(static_cast<std::uint8_t>(tensors.empty() ? FormatId::FP32 : tensors.front().format.id));
  out.put(static_cast<std::uint8_t>(mixed ? kFlagPerTensorFormat : 0));
  out.put(options.block_size);
  out.put(static_cast<std::uint32_t>(tensors.size()));
  out.put(std::uint32_t{0});  // checksum, patched below

  std::uint64_t offset = 0;
  std::size_t j = 0;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const auto& tensor = tensors[t];
    if (mixed) out.put(static_cast<std::uint8_t>(tensor.format.id));
    out.put(static_cast<std::uint32_t>(tensor.name.size()));
    out.bytes({reinterpret_cast<const std::uint8_t*>(tensor.name.data()), tensor.name.size()});
    out.put(static_cast<std::uint64_t>(tensor.data.size() / tensor.format.bytes()));
    out.put(static_cast<std::uint16_t>(params[t].b));
    out.put(static_cast<std::uint8_t>(params[t].n));
    out.put(static_cast<std::uint8_t>(params[t].m));
    out.put(params[t].group_length);
    for (; j < jobs.size() && jobs[j].tensor == t; ++j) {
      out.put(offset);
      out.put(static_cast<std::uint32_t>(encoded[j].bytes.size()));
      out.put(encoded[j].flags);
      offset += encoded[j].bytes.size();
    }
  }
  file.reserve(file.size() + offset);
  for (auto& block : encoded) {
    out.bytes(block.bytes);
    block.bytes = {};
  }

  const std::uint32_t crc = detail::crc32_of(std::span<const std::uint8_t>(file).subspan(kHeaderSize));
  for (std::size_t i = 0; i < 4; ++i) file[16 + i] = static_cast<std::uint8_t>(crc >> (8 * i));
  return file;
}

inline std::vector<std::uint8_t> compress(std::span<const std::uint8_t> raw, const FloatFormat& fmt,
                                          std::optional<TunedParams> params = std::nullopt,
                                          const CodecOptions& options = {}) {
  const TensorInput input{"", fmt, raw, params};
  return compress(std::span<const TensorInput>(&input, 1), options);
}

// ---------------------------------------------------------------------------
// Decompression and verification

struct DecodedTensor {
  std::string name;
  FloatFormat format = kBF16;
  TunedParams params;
  std::vector<std::uint8_t> data;
};

inline std::vector<DecodedTensor> decompress_tensors(std::span<const std::uint8_t> file,
                                                     unsigned workers = 1) {
  const auto container = Container::parse(file);
  std::vector<DecodedTensor> out;
  for (std::size_t t = 0; t < container.tensors().size(); ++t) {
    const auto& rec = container.tensors()[t];
    out.push_back({rec.name, rec.format, rec.params, container.read_tensor(t, workers)});
  }
  return out;
}

/// All tensors' bytes, concatenated in record order.
inline std::vector<std::uint8_t> decompress(std::span<const std::uint8_t> file,
                                            unsigned workers = 1) {
  const auto container = Container::parse(file);
  std::vector<std::uint8_t> out;
  for (std::size_t t = 0; t < container.tensors().size(); ++t) {
    const auto data = container.read_tensor(t, workers);
    out.insert(out.end(), data.begin(), data.end());
  }
  return out;
}

/// Decompresses, checks bit-identity against `original` and reports ratios.
inline RatioReport verify(std::span<const std::uint8_t> original,
                          std::span<const std::uint8_t> file, unsigned workers = 1) {
  const auto container = Container::parse(file);
  RatioReport report;
  report.original_bytes = original.size();
  report.compressed_bytes = file.size();

  std::uint64_t offset = 0;
  std::uint64_t elements = 0;
  double exponent_bits = 0.0;
  double predicted_bits = 0.0;
  bool formula_defined = true;

  for (std::size_t t = 0; t < container.tensors().size(); ++t) {
    const auto& rec = container.tensors()[t];
    const auto data = container.read_tensor(t, workers);
    const auto expected = original.subspan(std::min<std::uint64_t>(offset, original.size()));
    const std::size_t common = std::min(expected.size(), data.size());
    const auto diff = std::mismatch(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(common),
                                    expected.begin());
    if (diff.first != data.begin() + static_cast<std::ptrdiff_t>(common)) {
      throw MismatchError(offset + static_cast<std::uint64_t>(diff.first - data.begin()));
    }
    if (common < data.size()) throw MismatchError(offset + common);
    offset += data.size();

    for (std::size_t b = 0; b < rec.blocks.size(); ++b) {
      const auto& entry = rec.blocks[b];
      const std::size_t count = container.block_elements(rec, b);
      ++report.total_blocks;
      if (entry.raw()) {
        ++report.raw_blocks;
        exponent_bits += static_cast<double>(count) * rec.format.exponent_bits;
      } else {
        const std::size_t residue = bitpack::fixed_packed_size(count, rec.format.residue_bits());
        exponent_bits += 8.0 * static_cast<double>(entry.size - residue);
      }
      report.payload_bytes += entry.size;
    }
    elements += rec.element_count;

    if (rec.element_count > 0) {
      const auto hist = analysis::build_histogram(extract_exponents(data, rec.format),
                                                  rec.format.exponent_bits);
      try {
        const double ratio = tuner::predicted_ratio(hist, rec.params, rec.format.total_bits,
                                                    rec.format.residue_bits());
        predicted_bits += static_cast<double>(rec.element_count) * rec.format.total_bits / ratio;
      } catch (const WindowError&) {
        formula_defined = false;
      }
    }
  }
  if (offset != original.size()) throw MismatchError(offset);

  report.overhead_bytes = report.compressed_bytes - report.payload_bytes;
  report.compression_ratio = report.compressed_bytes == 0
                                 ? 0.0
                                 : static_cast<double>(report.original_bytes) /
                                       static_cast<double>(report.compressed_bytes);
  report.exponent_bits_per_element = elements == 0 ? 0.0 : exponent_bits / elements;
  if (formula_defined && predicted_bits > 0) {
    report.formula_ratio = 8.0 * static_cast<double>(report.original_bytes) / predicted_bits;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Frequency-table baseline

/// Compression ratio of the frequency-table design, computed without
/// emitting a stream: exponents are replaced by their frequency rank (0 for
/// the most frequent), every group of L codes is stored at the bit width of
/// its largest code plus 4 bits of width metadata, and residues are stored
/// verbatim. Groups do not straddle blocks of `block_size` elements.
inline RatioReport reference_ratio_v0(std::span<const std::uint8_t> raw, const FloatFormat& fmt,
                                      std::uint32_t group_length = 16,
                                      std::uint32_t block_size = 8192) {
  const auto exponents = extract_exponents(raw, fmt);
  RatioReport report;
  report.original_bytes = raw.size();
  if (exponents.empty()) return report;

  const auto hist = analysis::build_histogram(exponents, fmt.exponent_bits);
  std::vector<std::uint16_t> rank(hist.counts.size(), 0);
  for (const auto& [x, r] : analysis::frequency_ranks(hist, 0)) rank[x] = static_cast<std::uint16_t>(r);

  constexpr unsigned kWidthMetadataBits = 4;
  std::uint64_t exponent_bits = 0;
  for (std::size_t block = 0; block < exponents.size(); block += block_size) {
    const std::size_t block_end = std::min<std::size_t>(exponents.size(), block + block_size);
    for (std::size_t g = block; g < block_end; g += group_length) {
      const std::size_t g_end = std::min<std::size_t>(block_end, g + group_length);
      std::uint16_t largest = 0;
      for (std::size_t i = g; i < g_end; ++i) largest = std::max(largest, rank[exponents[i]]);
      exponent_bits += kWidthMetadataBits + std::bit_width(largest) * (g_end - g);
    }
  }
  const std::uint64_t total_bits =
      exponent_bits + std::uint64_t{exponents.size()} * fmt.residue_bits();
  report.compressed_bytes = (total_bits + 7) / 8;
  report.payload_bytes = report.compressed_bytes;
  report.total_blocks = (exponents.size() + block_size - 1) / block_size;
  report.compression_ratio =
      static_cast<double>(report.original_bytes) / static_cast<double>(report.compressed_bytes);
  report.exponent_bits_per_element =
      static_cast<double>(exponent_bits) / static_cast<double>(exponents.size());
  return report;
}

}  // namespace enec::stream
