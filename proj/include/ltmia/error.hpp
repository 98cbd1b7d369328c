#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ltmia {

enum class ErrorKind {
  malformed_record,
  malformed_base64,
  wrong_array_length,
  unknown_schema,
  rank_out_of_range,
  ordering_violation,
  invariant_violation,
  duplicate_id,
  io,
  empty_sequence,
  vocab_too_small,
  invalid_argument,
  single_class,
  divergence,
  shape_mismatch,
  insufficient_data,
};

std::string_view to_string(ErrorKind kind);

/// Data or validation failure. Every error the library raises for bad input
/// carries a kind so callers (and tests) can tell failure modes apart.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ltmia
