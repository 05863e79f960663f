#pragma once

#include <stdexcept>
#include <string>

namespace recal {

/// Invalid configuration detected before any round is played (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// predict/observe called out of order.
class ProtocolError : public std::logic_error {
 public:
  explicit ProtocolError(const std::string& what) : std::logic_error(what) {}
};

inline void check_label(int y) {
  if (y != 0 && y != 1) {
    throw std::domain_error("label must be 0 or 1, got " + std::to_string(y));
  }
}

inline void check_probability(double p, const char* name = "probability") {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::domain_error(std::string(name) + " must lie in [0,1], got " + std::to_string(p));
  }
}

}  // namespace recal
