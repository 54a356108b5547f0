#pragma once

#include <stdexcept>
#include <string>

namespace atbp {

/// Rejected input: domain violations, inadmissible parameters, malformed files.
class invalid_input : public std::runtime_error {
 public:
  explicit invalid_input(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: overflow of a closed form, non-convergence, singularity.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

/// Broken internal invariant; indicates a bug, not a user error.
class internal_error : public std::logic_error {
 public:
  explicit internal_error(const std::string& what) : std::logic_error(what) {}
};

}  // namespace atbp
