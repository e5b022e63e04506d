#pragma once

#include <stdexcept>
#include <string>

namespace aknn {

// Malformed or inconsistent input data (files, datasets, distributions).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace aknn
