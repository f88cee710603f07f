#ifndef VRS_PROBLEMS_HPP
#define VRS_PROBLEMS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "numeric.hpp"
#include "sampling.hpp"

namespace vrs {

struct sparse_entry {
  std::uint32_t index;  // 0-based feature index
  double value;
};

/// n sparse rows a_i with labels y_i in {-1, +1}, stored in CSR layout with
/// strictly increasing column indices per row.
class dataset {
 public:
  struct row_view {
    std::span<const std::uint32_t> index;
    std::span<const double> value;

    double dot(const Eigen::VectorXd& x) const noexcept {
      double s = 0.0;
      for (std::size_t k = 0; k < index.size(); ++k) s += value[k] * x[index[k]];
      return s;
    }
    double squared_norm() const noexcept {
      double s = 0.0;
      for (double v : value) s += v * v;
      return s;
    }
    std::size_t nnz() const noexcept { return index.size(); }
  };

  dataset() = default;

  dataset(std::size_t d, std::vector<std::size_t> row_ptr, std::vector<std::uint32_t> cols, std::vector<double> vals,
          std::vector<double> labels)
      : d_(d), row_ptr_(std::move(row_ptr)), cols_(std::move(cols)), vals_(std::move(vals)), labels_(std::move(labels)) {
    validate();
  }

  static dataset from_rows(std::size_t d, const std::vector<std::vector<sparse_entry>>& rows,
                           std::vector<double> labels) {
    std::vector<std::size_t> ptr{0};
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
    for (const auto& r : rows) {
      for (const auto& e : r) {
        cols.push_back(e.index);
        vals.push_back(e.value);
      }
      ptr.push_back(cols.size());
    }
    return dataset(d, std::move(ptr), std::move(cols), std::move(vals), std::move(labels));
  }

  std::size_t n() const noexcept { return labels_.size(); }
  std::size_t d() const noexcept { return d_; }
  std::size_t nnz() const noexcept { return cols_.size(); }

  row_view row(std::size_t i) const {
    const std::size_t lo = row_ptr_[i], hi = row_ptr_[i + 1];
    return {std::span<const std::uint32_t>(cols_).subspan(lo, hi - lo),
            std::span<const double>(vals_).subspan(lo, hi - lo)};
  }
  double label(std::size_t i) const { return labels_[i]; }
  std::span<const double> labels() const noexcept { return labels_; }

  friend bool operator==(const dataset&, const dataset&) = default;

 private:
  void validate() const {
    if (labels_.empty()) throw domain_error("dataset: at least one example is required");
    if (row_ptr_.size() != labels_.size() + 1 || row_ptr_.front() != 0 || row_ptr_.back() != cols_.size() ||
        cols_.size() != vals_.size())
      throw input_error("dataset: inconsistent CSR layout");
    for (double y : labels_)
      if (y != 1.0 && y != -1.0) throw domain_error("dataset: labels must be -1 or +1");
    for (std::size_t i = 0; i + 1 < row_ptr_.size(); ++i) {
      if (row_ptr_[i] > row_ptr_[i + 1]) throw input_error("dataset: row pointers must be nondecreasing");
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        if (cols_[k] >= d_) throw domain_error("dataset: feature index out of range in row " + std::to_string(i));
        if (k > row_ptr_[i] && cols_[k] <= cols_[k - 1])
          throw domain_error("dataset: feature indices not strictly increasing in row " + std::to_string(i));
        if (!std::isfinite(vals_[k])) throw domain_error("dataset: non-finite feature value in row " + std::to_string(i));
      }
    }
  }

  std::size_t d_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> cols_;
  std::vector<double> vals_;
  std::vector<double> labels_;
};

enum class loss_kind { sigmoid_squared, quadratic };

inline std::string_view to_string(loss_kind kind) {
  return kind == loss_kind::sigmoid_squared ? "sigmoid_squared" : "quadratic";
}

inline loss_kind parse_loss_kind(std::string_view s) {
  if (s == "sigmoid_squared" || s == "sigmoid") return loss_kind::sigmoid_squared;
  if (s == "quadratic" || s == "ridge") return loss_kind::quadratic;
  throw input_error("unknown loss '" + std::string(s) + "'");
}

/// sup over z and y in {-1, +1} of |d^2/dz^2 (1 - y sigmoid(z))^2|. Attained
/// for y = -1 at z ~ -0.9470219081.
inline constexpr double sigmoid_squared_curvature = 0.3083684825722767;

inline double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace loss {

inline double value(loss_kind kind, double z, double y) noexcept {
  if (kind == loss_kind::sigmoid_squared) {
    const double r = 1.0 - y * sigmoid(z);
    return r * r;
  }
  const double r = z - y;
  return 0.5 * r * r;
}

// d/dz of the scalar loss.
inline double derivative(loss_kind kind, double z, double y) noexcept {
  if (kind == loss_kind::sigmoid_squared) {
    const double s = sigmoid(z);
    return -2.0 * y * s * (1.0 - s) * (1.0 - y * s);
  }
  return z - y;
}

inline double second_derivative(loss_kind kind, double z, double y) noexcept {
  if (kind == loss_kind::sigmoid_squared) {
    const double s = sigmoid(z);
    const double ds = s * (1.0 - s);
    return -2.0 * y * ds * (1.0 - 2.0 * s) * (1.0 - y * s) + 2.0 * ds * ds;
  }
  return 1.0;
}

}  // namespace loss

/// L_i = c * ||a_i||^2 (+ mu for the quadratic loss), floored relative to max L.
inline std::vector<double> smoothness_constants(const dataset& data, loss_kind kind, double mu = 0.0) {
  std::vector<double> L(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double sq = data.row(i).squared_norm();
    L[i] = kind == loss_kind::sigmoid_squared ? sigmoid_squared_curvature * sq : sq + mu;
  }
  return floor_smoothness(L);
}

/// Finite-sum objective f(x) = (1/n) sum_i f_i(x) over a linear-composite loss:
///   sigmoid_squared: f_i(x) = (1 - y_i sigmoid(a_i^T x))^2
///   quadratic:       f_i(x) = 0.5 (a_i^T x - y_i)^2 + 0.5 mu ||x||^2
/// Immutable after construction.
class problem {
 public:
  problem(dataset data, loss_kind kind, double mu = 0.0) : data_(std::move(data)), kind_(kind), mu_(mu) {
    if (!(mu_ >= 0.0) || !std::isfinite(mu_)) throw domain_error("problem: mu must be finite and nonnegative");
    if (kind_ == loss_kind::sigmoid_squared && mu_ != 0.0)
      throw domain_error("problem: the sigmoid-squared loss carries no strong-convexity term");
    L_ = smoothness_constants(data_, kind_, mu_);
    compensated_sum s;
    for (double l : L_) s.add(l);
    Lbar_ = s.value() / static_cast<double>(L_.size());
    Lmax_ = *std::max_element(L_.begin(), L_.end());
  }

  const dataset& data() const noexcept { return data_; }
  loss_kind loss() const noexcept { return kind_; }
  double mu() const noexcept { return mu_; }
  std::size_t n() const noexcept { return data_.n(); }
  std::size_t d() const noexcept { return data_.d(); }
  std::span<const double> L() const noexcept { return L_; }
  double Lbar() const noexcept { return Lbar_; }
  double Lmax() const noexcept { return Lmax_; }

  double margin(std::size_t i, const Eigen::VectorXd& x) const { return data_.row(i).dot(x); }

  /// Scalar s with grad f_i(x) = s a_i (+ mu x).
  double derivative_at(std::size_t i, double margin) const noexcept {
    return loss::derivative(kind_, margin, data_.label(i));
  }
  double scale(std::size_t i, const Eigen::VectorXd& x) const { return derivative_at(i, margin(i, x)); }

  void add_row(std::size_t i, double coef, Eigen::VectorXd& out) const {
    const auto r = data_.row(i);
    for (std::size_t k = 0; k < r.nnz(); ++k) out[r.index[k]] += coef * r.value[k];
  }

  double value(const Eigen::VectorXd& x) const {
    check_dim(x);
    compensated_sum s;
    for (std::size_t i = 0; i < n(); ++i) s.add(loss::value(kind_, margin(i, x), data_.label(i)));
    double f = s.value() / static_cast<double>(n());
    if (mu_ > 0.0) f += 0.5 * mu_ * x.squaredNorm();
    return f;
  }

  double component_value(std::size_t i, const Eigen::VectorXd& x) const {
    check_index(i);
    double f = loss::value(kind_, margin(i, x), data_.label(i));
    if (mu_ > 0.0) f += 0.5 * mu_ * x.squaredNorm();
    return f;
  }

  Eigen::VectorXd component_gradient(std::size_t i, const Eigen::VectorXd& x) const {
    check_index(i);
    check_dim(x);
    Eigen::VectorXd g = mu_ > 0.0 ? Eigen::VectorXd(mu_ * x) : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d()));
    add_row(i, scale(i, x), g);
    return g;
  }

  /// Mean of component gradients, accumulated index-ascending with compensated
  /// summation. When scales is non-empty it receives the per-component scalars.
  Eigen::VectorXd full_gradient(const Eigen::VectorXd& x, std::span<double> scales = {}) const {
    check_dim(x);
    const auto dim = static_cast<Eigen::Index>(d());
    compensated_vector acc(dim);
    for (std::size_t i = 0; i < n(); ++i) {
      const double s = scale(i, x);
      if (!scales.empty()) scales[i] = s;
      const auto r = data_.row(i);
      if (mu_ > 0.0) {
        Eigen::VectorXd g = mu_ * x;
        for (std::size_t k = 0; k < r.nnz(); ++k) g[r.index[k]] += s * r.value[k];
        acc.add(g);
      } else {
        for (std::size_t k = 0; k < r.nnz(); ++k) acc.add(r.index[k], s * r.value[k]);
      }
    }
    return acc.value() / static_cast<double>(n());
  }

 private:
  void check_dim(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != d())
      throw domain_error("problem: x has dimension " + std::to_string(x.size()) + ", expected " + std::to_string(d()));
  }
  void check_index(std::size_t i) const {
    if (i >= n()) throw domain_error("problem: component index out of range");
  }

  dataset data_;
  loss_kind kind_;
  double mu_;
  std::vector<double> L_;
  double Lbar_ = 0.0;
  double Lmax_ = 0.0;
};

/// Dense Gaussian rows rescaled so that ||a_i||^2 runs geometrically from 1
/// (i = 0) to skew (i = n - 1); labels are fair coin flips. Deterministic per seed.
inline dataset synthesize(std::size_t n, std::size_t d, double skew, std::uint64_t seed) {
  if (n == 0 || d == 0) throw domain_error("synthesize: n and d must be positive");
  if (!(skew >= 1.0)) throw domain_error("synthesize: skew must be >= 1");
  auto rng = make_rng(seed, 0x5157);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<sparse_entry>> rows(n);
  std::vector<double> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> a(d);
    double sq = 0.0;
    do {
      sq = 0.0;
      for (double& v : a) {
        v = gauss(rng);
        sq += v * v;
      }
    } while (sq == 0.0);
    const double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    const double target = std::pow(skew, t);
    const double c = std::sqrt(target / sq);
    rows[i].reserve(d);
    for (std::size_t j = 0; j < d; ++j) rows[i].push_back({static_cast<std::uint32_t>(j), a[j] * c});
    labels[i] = uniform01(rng) < 0.5 ? -1.0 : 1.0;
  }
  return dataset::from_rows(d, rows, std::move(labels));
}

}  // namespace vrs

#endif
