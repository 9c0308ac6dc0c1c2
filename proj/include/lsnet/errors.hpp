#pragma once

#include <stdexcept>

namespace lsnet {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// stable process exit codes: ConfigError/ContractError -> 2, IoError -> 3,
// NumericError -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lsnet
