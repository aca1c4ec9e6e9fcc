#ifndef PERSRANK_ERRORS_HPP_
#define PERSRANK_ERRORS_HPP_

#include <iostream>
#include <stdexcept>
#include <string>

namespace persrank {

// Malformed input, missing files, schema violations. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses, impossible numeric states. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void warn(const std::string& message) {
  std::cerr << "warning: " << message << "\n";
}

}  // namespace persrank

#endif  // PERSRANK_ERRORS_HPP_
