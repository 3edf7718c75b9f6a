#pragma once

#include <stdexcept>
#include <string>

namespace semfusion {

/// Malformed or inconsistent input data (bad files, rasters that do not
/// line up, unparsable records). The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value; message carries the offending field path.
/// The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace semfusion
