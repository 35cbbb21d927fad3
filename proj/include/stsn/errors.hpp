#pragma once

#include <stdexcept>
#include <string>

namespace stsn {

// Error taxonomy used across the library. All derive from std::runtime_error
// so callers may catch coarsely or precisely.

struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct contract_error : std::runtime_error {
  explicit contract_error(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct format_error : std::runtime_error {
  explicit format_error(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

struct generation_error : std::runtime_error {
  explicit generation_error(const std::string& msg) : std::runtime_error("generation error: " + msg) {}
};

}  // namespace stsn
