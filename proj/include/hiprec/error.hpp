#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hiprec {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define HIPREC_DEFINE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

HIPREC_DEFINE_ERROR(DimensionMismatch);
HIPREC_DEFINE_ERROR(IndexOutOfRange);
HIPREC_DEFINE_ERROR(SingularMatrix);
HIPREC_DEFINE_ERROR(UnsupportedBanner);
HIPREC_DEFINE_ERROR(InvalidTree);
HIPREC_DEFINE_ERROR(RankSaturated);
HIPREC_DEFINE_ERROR(NotCompressible);
HIPREC_DEFINE_ERROR(SingularBlock);
HIPREC_DEFINE_ERROR(TreeMismatch);
HIPREC_DEFINE_ERROR(NoTopSplit);
HIPREC_DEFINE_ERROR(NotWellSeparated);
HIPREC_DEFINE_ERROR(LeafNode);
HIPREC_DEFINE_ERROR(PartitionMismatch);
HIPREC_DEFINE_ERROR(SingularInterior);
HIPREC_DEFINE_ERROR(RankBoundViolated);
HIPREC_DEFINE_ERROR(ZeroRhs);
HIPREC_DEFINE_ERROR(InvalidOption);

#undef HIPREC_DEFINE_ERROR

/// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::int64_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::int64_t line() const { return line_; }

 private:
  std::int64_t line_;
};

}  // namespace hiprec
