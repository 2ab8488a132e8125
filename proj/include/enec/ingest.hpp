#pragma once

// Loading of raw weight dumps and safetensors archives as byte ranges.

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "enec/error.hpp"
#include "enec/fpsplit.hpp"

namespace enec::ingest {

struct TensorSource {
  std::string name;
  FloatFormat format = kBF16;
  std::uint64_t offset = 0;  // within LoadedFile::bytes
  std::uint64_t length = 0;
  std::vector<std::uint64_t> shape;
};

struct SkippedTensor {
  std::string name;
  std::string dtype;
};

struct LoadedFile {
  std::vector<std::uint8_t> bytes;
  std::vector<TensorSource> tensors;
  std::vector<SkippedTensor> skipped;

  [[nodiscard]] std::span<const std::uint8_t> data(const TensorSource& t) const {
    return std::span<const std::uint8_t>(bytes).subspan(t.offset, t.length);
  }
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "': " + std::strerror(errno));
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("short read from '" + path.string() + "'");
  }
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create '" + path.string() + "': " + std::strerror(errno));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

/// The whole file as one unnamed tensor.
inline LoadedFile load_raw(const std::filesystem::path& path, const FloatFormat& fmt) {
  LoadedFile file;
  file.bytes = read_file(path);
  if (file.bytes.size() % fmt.bytes() != 0) {
    throw AlignmentError("'" + path.string() + "' has " + std::to_string(file.bytes.size()) +
                         " bytes, not a multiple of the " + std::to_string(fmt.bytes()) +
                         "-byte " + std::string(fmt.name) + " element");
  }
  file.tensors.push_back({"", fmt, 0, file.bytes.size(), {file.bytes.size() / fmt.bytes()}});
  return file;
}

namespace detail {

// Element size of a safetensors dtype string, 0 when unknown.
inline std::uint64_t dtype_size(const std::string& dtype) {
  static const std::pair<const char*, std::uint64_t> kSizes[] = {
      {"BOOL", 1}, {"U8", 1},  {"I8", 1},  {"F8_E4M3", 1}, {"F8_E5M2", 1},
      {"I16", 2},  {"U16", 2}, {"F16", 2}, {"BF16", 2},    {"I32", 4},
      {"U32", 4},  {"F32", 4}, {"I64", 8}, {"U64", 8},     {"F64", 8}};
  for (const auto& [name, size] : kSizes)
    if (dtype == name) return size;
  return 0;
}

}  // namespace detail

/// Parses a safetensors archive held in memory. Tensors with dtypes other
/// than BF16/F16/F32 are listed in `skipped`, or rejected when `strict`.
inline LoadedFile parse_safetensors(std::vector<std::uint8_t> bytes, bool strict = false) {
  LoadedFile file;
  file.bytes = std::move(bytes);
  if (file.bytes.size() < 8) throw HeaderError("file too short for the header length field");
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) header_len |= std::uint64_t{file.bytes[i]} << (8 * i);
  if (header_len > file.bytes.size() - 8) {
    throw HeaderError("header length " + std::to_string(header_len) + " exceeds file size");
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(file.bytes.begin() + 8,
                                   file.bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw HeaderError(std::string("malformed JSON header: ") + e.what());
  }
  if (!header.is_object()) throw HeaderError("header is not a JSON object");

  const std::uint64_t data_start = 8 + header_len;
  const std::uint64_t data_size = file.bytes.size() - data_start;

  struct Range {
    std::uint64_t begin, end;
    std::string name;
  };
  std::vector<Range> ranges;

  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") continue;
    std::string dtype;
    std::vector<std::uint64_t> shape;
    std::uint64_t begin = 0, end = 0;
    try {
      dtype = entry.at("dtype").get<std::string>();
      shape = entry.at("shape").get<std::vector<std::uint64_t>>();
      const auto offsets = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
      if (offsets.size() != 2) throw HeaderError("tensor '" + name + "': data_offsets needs 2 values");
      begin = offsets[0];
      end = offsets[1];
    } catch (const nlohmann::json::exception& e) {
      throw HeaderError("tensor '" + name + "': " + e.what());
    }

    if (begin > end || end > data_size) {
      throw OffsetError("tensor '" + name + "': range [" + std::to_string(begin) + ", " +
                        std::to_string(end) + ") outside the " + std::to_string(data_size) +
                        "-byte data section");
    }
    const std::uint64_t elem = detail::dtype_size(dtype);
    if (elem != 0) {
      std::uint64_t count = 1;
      for (const auto d : shape) count *= d;
      if (count * elem != end - begin) {
        throw OffsetError("tensor '" + name + "': shape implies " + std::to_string(count * elem) +
                          " bytes, data_offsets span " + std::to_string(end - begin));
      }
    }
    ranges.push_back({begin, end, name});

    if (dtype != "BF16" && dtype != "F16" && dtype != "F32") {
      if (strict) throw UnsupportedDtype("tensor '" + name + "' has dtype " + dtype);
      file.skipped.push_back({name, dtype});
      continue;
    }
    file.tensors.push_back({name, format_from_name(dtype), data_start + begin, end - begin, shape});
  }

  std::sort(ranges.begin(), ranges.end(),
            [](const Range& a, const Range& b) { return a.begin < b.begin; });
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    if (ranges[i].begin < ranges[i - 1].end) {
      throw OffsetError("tensors '" + ranges[i - 1].name + "' and '" + ranges[i].name +
                        "' overlap");
    }
  }
  // Archive order, not JSON key order.
  std::sort(file.tensors.begin(), file.tensors.end(),
            [](const TensorSource& a, const TensorSource& b) { return a.offset < b.offset; });
  return file;
}

inline LoadedFile load_safetensors(const std::filesystem::path& path, bool strict = false) {
  return parse_safetensors(read_file(path), strict);
}

}  // namespace enec::ingest
