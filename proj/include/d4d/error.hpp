#pragma once

#include <stdexcept>
#include <string>

namespace d4d {

// Data/config/shape problems. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Mutation operator cannot be applied to the given model (skipped during
// corpus sweeps, fatal elsewhere).
class InapplicableError : public Error {
 public:
  explicit InapplicableError(const std::string& what) : Error(what) {}
};

}  // namespace d4d
