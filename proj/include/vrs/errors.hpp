#ifndef VRS_ERRORS_HPP
#define VRS_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vrs {

class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (b > n, L_i <= 0, ...).
class domain_error : public error {
 public:
  using error::error;
};

// Dense materialization or enumeration requested beyond its cap.
class size_error : public error {
 public:
  using error::error;
};

// Approximate independent sampling with k <= 1; callers fall back to independent.
class degenerate_sampling_error : public error {
 public:
  using error::error;
};

class input_error : public error {
 public:
  using error::error;
};

class config_error : public error {
 public:
  using error::error;
};

class parse_error : public error {
 public:
  parse_error(std::size_t line, const std::string& what)
      : error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace vrs

#endif
