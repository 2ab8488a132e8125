#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace enec {

/// Base of every error raised by the library. `kind()` is the short error
/// name used in diagnostics ("LengthError", "ChecksumError", ...).
class Error : public std::runtime_error {
 public:
  Error(const char* kind, const std::string& what)
      : std::runtime_error(std::string(kind) + ": " + what), kind_(kind) {}

  [[nodiscard]] const char* kind() const noexcept { return kind_; }

 private:
  const char* kind_;
};

#define ENEC_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(#Name, what) {}   \
  }

// fpsplit / bitpack
ENEC_DEFINE_ERROR(LengthError);
ENEC_DEFINE_ERROR(ConsistencyError);
ENEC_DEFINE_ERROR(RangeError);
ENEC_DEFINE_ERROR(ShapeError);
ENEC_DEFINE_ERROR(AlignmentError);
// analysis / transform / tuner
ENEC_DEFINE_ERROR(EmptyInput);
ENEC_DEFINE_ERROR(DegenerateInput);
ENEC_DEFINE_ERROR(WindowError);
// container
ENEC_DEFINE_ERROR(FormatError);
ENEC_DEFINE_ERROR(MagicError);
ENEC_DEFINE_ERROR(VersionError);
ENEC_DEFINE_ERROR(ChecksumError);
ENEC_DEFINE_ERROR(TruncationError);
// ingest
ENEC_DEFINE_ERROR(IoError);
ENEC_DEFINE_ERROR(HeaderError);
ENEC_DEFINE_ERROR(OffsetError);
ENEC_DEFINE_ERROR(UnsupportedDtype);
// cli
ENEC_DEFINE_ERROR(UsageError);

#undef ENEC_DEFINE_ERROR

/// Raised by verification when a reconstruction differs from the original.
class MismatchError : public Error {
 public:
  explicit MismatchError(std::uint64_t offset)
      : Error("MismatchError",
              "reconstruction differs at byte offset " + std::to_string(offset)),
        offset_(offset) {}

  [[nodiscard]] std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace enec
