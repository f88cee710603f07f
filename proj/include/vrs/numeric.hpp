#ifndef VRS_NUMERIC_HPP
#define VRS_NUMERIC_HPP

#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <system_error>

#include <Eigen/Dense>

#include "errors.hpp"

namespace vrs {

using rng_type = std::mt19937_64;

/// Seeds a generator from a 64-bit seed and a stream tag so that independent
/// consumers inside one run (subset draws, iterate selection, replicates) do
/// not share a sequence.
inline rng_type make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return rng_type(seq);
}

inline double uniform01(rng_type& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Neumaier's variant of Kahan summation.
class compensated_sum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

class compensated_vector {
 public:
  explicit compensated_vector(Eigen::Index d) : sum_(Eigen::VectorXd::Zero(d)), comp_(Eigen::VectorXd::Zero(d)) {}

  void add(Eigen::Index j, double x) noexcept {
    double& s = sum_[j];
    const double t = s + x;
    if (std::abs(s) >= std::abs(x))
      comp_[j] += (s - t) + x;
    else
      comp_[j] += (x - t) + s;
    s = t;
  }
  void add(const Eigen::VectorXd& x) noexcept {
    for (Eigen::Index j = 0; j < x.size(); ++j) add(j, x[j]);
  }
  Eigen::VectorXd value() const { return sum_ + comp_; }

 private:
  Eigen::VectorXd sum_;
  Eigen::VectorXd comp_;
};

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw input_error("not a number: '" + std::string(s) + "'");
  return x;
}

inline std::uint64_t parse_unsigned(std::string_view s) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw input_error("not an unsigned integer: '" + std::string(s) + "'");
  return x;
}

}  // namespace vrs

#endif
