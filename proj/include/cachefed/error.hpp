// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cachefed {

// Every failure surfaced by the library derives from Error. The CLI maps the
// category onto its exit code.
class Error : public std::runtime_error {
 public:
  enum class Category { kValidation, kIo, kDivergence };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

#define CACHEFED_DEFINE_ERROR(Name, Cat)                          \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what)                        \
        : Error(Category::Cat, std::string(#Name ": ") + what) {} \
  };

CACHEFED_DEFINE_ERROR(ShapeError, kValidation)
CACHEFED_DEFINE_ERROR(LabelError, kValidation)
CACHEFED_DEFINE_ERROR(DegenerateInputError, kValidation)
CACHEFED_DEFINE_ERROR(NonFiniteError, kDivergence)
CACHEFED_DEFINE_ERROR(BalanceError, kValidation)
CACHEFED_DEFINE_ERROR(InfeasibleError, kValidation)
CACHEFED_DEFINE_ERROR(SamplingError, kValidation)
CACHEFED_DEFINE_ERROR(EmptyShardError, kValidation)
CACHEFED_DEFINE_ERROR(AggregationError, kValidation)
CACHEFED_DEFINE_ERROR(ValidationError, kValidation)
CACHEFED_DEFINE_ERROR(DivergenceError, kDivergence)
CACHEFED_DEFINE_ERROR(IoError, kIo)

#undef CACHEFED_DEFINE_ERROR

// Malformed binary input. Carries the byte offset at which parsing failed.
class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& what)
      : Error(Category::kIo, "FormatError at byte offset " +
                                 std::to_string(offset) + ": " + what),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace cachefed
