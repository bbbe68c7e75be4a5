#pragma once

#include <stdexcept>
#include <string>

namespace actpred {

/// Input data that violates a documented contract (bad record, bad shape,
/// out-of-range code). Messages name the offending record.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of an API or command-line surface.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace actpred
