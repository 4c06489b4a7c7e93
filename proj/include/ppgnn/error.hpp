#pragma once

#include <stdexcept>
#include <string>

namespace ppgnn {

// Error taxonomy mirrors the CLI exit codes:
//   ConfigError -> 1 (usage / configuration)
//   DataError   -> 2 (bad or inconsistent input data)
//   NumericError-> 3 (non-finite values, divergence)
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ppgnn
