#pragma once

#include <stdexcept>
#include <string>

namespace rgdiff {

/// Invalid configuration, CLI usage, or unreadable/corrupt input file.
/// The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure (NaN/Inf during sampling or training divergence).
/// The CLI maps this to exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rgdiff
