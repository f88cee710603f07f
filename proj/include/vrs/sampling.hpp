#ifndef VRS_SAMPLING_HPP
#define VRS_SAMPLING_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "numeric.hpp"

namespace vrs {

enum class sampling_kind { uniform_minibatch, independent, approximate_independent };

inline std::string_view to_string(sampling_kind kind) {
  switch (kind) {
    case sampling_kind::uniform_minibatch:
      return "uniform";
    case sampling_kind::independent:
      return "independent";
    case sampling_kind::approximate_independent:
      return "approx";
  }
  return "?";
}

inline sampling_kind parse_sampling_kind(std::string_view s) {
  if (s == "uniform" || s == "uniform_minibatch" || s == "nice") return sampling_kind::uniform_minibatch;
  if (s == "independent" || s == "optimal" || s == "importance") return sampling_kind::independent;
  if (s == "approx" || s == "approximate_independent" || s == "approximate") return sampling_kind::approximate_independent;
  throw input_error("unknown sampling kind '" + std::string(s) + "'");
}

/// Relative floor applied to smoothness constants so that every optimal
/// probability stays strictly positive.
inline constexpr double smoothness_floor_ratio = 1e-12;

inline std::vector<double> floor_smoothness(std::span<const double> L) {
  double max_l = 0.0;
  for (double l : L) {
    if (!std::isfinite(l) || l < 0.0) throw domain_error("smoothness constants must be finite and nonnegative");
    max_l = std::max(max_l, l);
  }
  if (max_l <= 0.0) throw domain_error("all smoothness constants are zero");
  const double floor = smoothness_floor_ratio * max_l;
  std::vector<double> out(L.begin(), L.end());
  for (double& l : out) l = std::max(l, floor);
  return out;
}

/// Largest b with b * max(L) <= sum(L): the range of minibatch sizes over which
/// optimal independent sampling keeps every p_i < 1.
inline std::size_t max_superlinear_batch(std::span<const double> L) {
  if (L.empty()) throw domain_error("empty smoothness vector");
  const double sum = std::accumulate(L.begin(), L.end(), 0.0);
  const double max_l = *std::max_element(L.begin(), L.end());
  return static_cast<std::size_t>(std::floor(sum / max_l * (1.0 + 1e-12)));
}

/// Minibatch probabilities minimizing alpha among all samplings with E|S| = b.
///
/// With L sorted ascending, the first k entries get p_i = (b + k - n) L_i / sum_{j<=k} L_j
/// and the rest get p_i = 1, where k is the largest integer with
/// 0 < b + k - n <= sum_{j<=k} L_j / L_k. Input order is preserved in the output;
/// ties are resolved by a stable sort.
inline std::vector<double> optimal_probabilities(std::span<const double> L, double b) {
  const std::size_t n = L.size();
  if (n == 0) throw domain_error("optimal_probabilities: empty smoothness vector");
  if (!(b > 0.0) || b > static_cast<double>(n))
    throw domain_error("optimal_probabilities: minibatch size must lie in (0, n]");
  for (double l : L)
    if (!(l > 0.0) || !std::isfinite(l)) throw domain_error("optimal_probabilities: every L_i must be positive");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return L[i] < L[j]; });

  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] + L[order[j]];

  std::size_t k = 0;
  double head = 0.0;  // b + k - n
  for (std::size_t kk = n; kk >= 1; --kk) {
    const double c = b + static_cast<double>(kk) - static_cast<double>(n);
    if (c <= 0.0) break;
    if (c <= prefix[kk] / L[order[kk - 1]] * (1.0 + 1e-12)) {
      k = kk;
      head = c;
      break;
    }
  }
  if (k == 0) throw domain_error("optimal_probabilities: no admissible k (numerical failure)");

  std::vector<double> p(n, 1.0);
  for (std::size_t j = 0; j < k; ++j) p[order[j]] = std::min(1.0, head * L[order[j]] / prefix[k]);
  return p;
}

namespace detail {

inline std::size_t approximate_batch(std::size_t k, double max_partial_p) {
  const double x = static_cast<double>(k) * max_partial_p;
  auto a = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
  return std::clamp<std::size_t>(a, 1, k);
}

inline double sum_of(std::span<const double> p) {
  compensated_sum s;
  for (double x : p) s.add(x);
  return s.value();
}

}  // namespace detail

/// Closed-form ESO certificate v for the given sampling kind and marginals.
///
/// uniform: (n - b)/(n - 1); independent: 1 - p_i;
/// approx: 1 - p_i (1 - s) on the k entries with p_i < 1 and 0 elsewhere,
/// s = (k - a)/(a (k - 1)), a = ceil(k max p_i).
inline std::vector<double> compute_v(sampling_kind kind, std::span<const double> p) {
  const std::size_t n = p.size();
  for (double x : p)
    if (!(x > 0.0)) throw domain_error("compute_v: sampling is not proper (some p_i <= 0)");
  std::vector<double> v(n, 0.0);
  switch (kind) {
    case sampling_kind::uniform_minibatch: {
      const double b = detail::sum_of(p);
      const double value = n > 1 ? std::max(0.0, (static_cast<double>(n) - b) / static_cast<double>(n - 1)) : 0.0;
      std::fill(v.begin(), v.end(), value);
      break;
    }
    case sampling_kind::independent:
      for (std::size_t i = 0; i < n; ++i) v[i] = std::max(0.0, 1.0 - p[i]);
      break;
    case sampling_kind::approximate_independent: {
      std::size_t k = 0;
      double max_partial = 0.0;
      for (double x : p)
        if (x < 1.0) {
          ++k;
          max_partial = std::max(max_partial, x);
        }
      if (k <= 1) throw degenerate_sampling_error("approximate independent sampling needs at least two entries with p_i < 1");
      const std::size_t a = detail::approximate_batch(k, max_partial);
      const double kd = static_cast<double>(k), ad = static_cast<double>(a);
      const double s = (kd - ad) / (ad * (kd - 1.0));
      for (std::size_t i = 0; i < n; ++i) v[i] = p[i] < 1.0 ? 1.0 - p[i] * (1.0 - s) : 0.0;
      break;
    }
  }
  return v;
}

/// An immutable random-subset law over {0, ..., n-1}.
class sampling_scheme {
 public:
  static sampling_scheme uniform(std::size_t n, double b) {
    if (n == 0) throw domain_error("uniform sampling: n must be positive");
    if (!(b >= 1.0) || b > static_cast<double>(n)) throw domain_error("uniform sampling: b must lie in [1, n]");
    if (std::abs(b - std::round(b)) > 1e-9) throw domain_error("uniform sampling: b must be an integer");
    const double bi = std::round(b);
    return sampling_scheme(sampling_kind::uniform_minibatch,
                           std::vector<double>(n, bi / static_cast<double>(n)), bi);
  }

  static sampling_scheme independent(std::vector<double> p) {
    return sampling_scheme(sampling_kind::independent, std::move(p));
  }

  /// Falls back to an independent scheme when k <= 1 or a = k, where the two
  /// laws coincide or the approximate construction is undefined.
  static sampling_scheme approximate_independent(std::vector<double> p) {
    sampling_scheme s(sampling_kind::independent, std::move(p));
    if (s.k_ <= 1) return s;
    std::size_t a = detail::approximate_batch(s.k_, s.max_partial_p());
    if (a == s.k_) return s;
    s.kind_ = sampling_kind::approximate_independent;
    s.a_ = a;
    s.v_ = compute_v(s.kind_, s.p_);
    return s;
  }

  static sampling_scheme make(sampling_kind kind, std::vector<double> p) {
    switch (kind) {
      case sampling_kind::uniform_minibatch: {
        if (p.empty()) throw domain_error("sampling: empty probability vector");
        for (double x : p)
          if (std::abs(x - p.front()) > 1e-12) throw domain_error("uniform sampling requires equal marginals");
        return uniform(p.size(), detail::sum_of(p));
      }
      case sampling_kind::independent:
        return independent(std::move(p));
      case sampling_kind::approximate_independent:
        return approximate_independent(std::move(p));
    }
    throw domain_error("sampling: unknown kind");
  }

  sampling_kind kind() const noexcept { return kind_; }
  std::size_t n() const noexcept { return p_.size(); }
  double b() const noexcept { return b_; }
  std::size_t k() const noexcept { return k_; }
  // Size of the uniform first stage; 0 unless kind() is approximate_independent.
  std::size_t a() const noexcept { return a_; }
  std::span<const double> p() const noexcept { return p_; }
  std::span<const double> v() const noexcept { return v_; }
  std::span<const std::size_t> partial_indices() const noexcept { return partial_; }
  std::span<const std::size_t> full_indices() const noexcept { return full_; }

  double thinning_probability(std::size_t i) const {
    if (kind_ != sampling_kind::approximate_independent) return p_[i];
    return std::min(1.0, static_cast<double>(k_) * p_[i] / static_cast<double>(a_));
  }

  // P_ij / (p_i p_j) for two distinct indices with p < 1 (the factor t).
  double pair_factor() const noexcept {
    const double nd = static_cast<double>(n());
    switch (kind_) {
      case sampling_kind::uniform_minibatch:
        return n() > 1 ? (b_ - 1.0) * nd / (b_ * (nd - 1.0)) : 1.0;
      case sampling_kind::independent:
        return 1.0;
      case sampling_kind::approximate_independent: {
        const double kd = static_cast<double>(k_), ad = static_cast<double>(a_);
        return (ad - 1.0) * kd / (ad * (kd - 1.0));
      }
    }
    return 1.0;
  }

 private:
  sampling_scheme(sampling_kind kind, std::vector<double> p, double b = -1.0) : kind_(kind), p_(std::move(p)) {
    if (p_.empty()) throw domain_error("sampling: empty probability vector");
    for (double& x : p_) {
      if (!std::isfinite(x) || !(x > 0.0)) throw domain_error("sampling: every p_i must be positive (proper sampling)");
      if (x > 1.0 + 1e-12) throw domain_error("sampling: p_i must not exceed 1");
      x = std::min(x, 1.0);
    }
    b_ = b > 0.0 ? b : detail::sum_of(p_);
    for (std::size_t i = 0; i < p_.size(); ++i) (p_[i] < 1.0 ? partial_ : full_).push_back(i);
    k_ = partial_.size();
    v_ = compute_v(kind_, p_);
  }

  double max_partial_p() const {
    double m = 0.0;
    for (std::size_t i : partial_) m = std::max(m, p_[i]);
    return m;
  }

  sampling_kind kind_;
  std::vector<double> p_;
  double b_ = 0.0;
  std::size_t k_ = 0;
  std::size_t a_ = 0;
  std::vector<double> v_;
  std::vector<std::size_t> partial_;
  std::vector<std::size_t> full_;
};

struct complexity_constants {
  double K = 0.0;
  double alpha = 0.0;
  double Lbar = 0.0;
};

/// K = (b/n^2) sum v_i L_i^2 / p_i and alpha = K / Lbar^2.
inline complexity_constants compute_alpha(std::span<const double> L, const sampling_scheme& scheme) {
  const std::size_t n = scheme.n();
  if (L.size() != n) throw domain_error("compute_alpha: length mismatch between L and the sampling");
  compensated_sum lsum, ksum;
  for (std::size_t i = 0; i < n; ++i) {
    lsum.add(L[i]);
    ksum.add(scheme.v()[i] * L[i] * L[i] / scheme.p()[i]);
  }
  const double nd = static_cast<double>(n);
  complexity_constants c;
  c.Lbar = lsum.value() / nd;
  c.K = scheme.b() / (nd * nd) * ksum.value();
  c.alpha = c.K / (c.Lbar * c.Lbar);
  return c;
}

inline constexpr std::size_t default_dense_cap = 64;

/// Dense P_ij = Prob({i, j} in S).
inline Eigen::MatrixXd probability_matrix(const sampling_scheme& scheme, std::size_t max_n = default_dense_cap) {
  const std::size_t n = scheme.n();
  if (n > max_n) throw size_error("probability_matrix: n = " + std::to_string(n) + " exceeds cap " + std::to_string(max_n));
  const auto p = scheme.p();
  Eigen::MatrixXd P(n, n);
  const double t = scheme.pair_factor();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        P(i, j) = p[i];
      } else if (scheme.kind() == sampling_kind::uniform_minibatch) {
        const double b = scheme.b(), nd = static_cast<double>(n);
        P(i, j) = b * (b - 1.0) / (nd * (nd - 1.0));
      } else if (scheme.kind() == sampling_kind::approximate_independent && p[i] < 1.0 && p[j] < 1.0) {
        P(i, j) = t * p[i] * p[j];
      } else {
        P(i, j) = p[i] * p[j];
      }
    }
  }
  return P;
}

/// Smallest eigenvalue of Diag(p o v) - (P - p p^T).
inline double eso_margin(const Eigen::MatrixXd& P, std::span<const double> p, std::span<const double> v) {
  const auto n = static_cast<Eigen::Index>(p.size());
  if (P.rows() != n || P.cols() != n || static_cast<Eigen::Index>(v.size()) != n)
    throw input_error("eso check: dimension mismatch");
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw input_error("eso check: P is not symmetric");
  Eigen::Map<const Eigen::VectorXd> pv(p.data(), n);
  Eigen::Map<const Eigen::VectorXd> vv(v.data(), n);
  Eigen::MatrixXd M = -(P - pv * pv.transpose());
  M.diagonal() += pv.cwiseProduct(vv);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

inline bool verify_eso(const Eigen::MatrixXd& P, std::span<const double> p, std::span<const double> v,
                       double tol = 1e-10) {
  return eso_margin(P, p, v) >= -tol;
}

/// Draws subsets from a scheme. Keeps an index buffer across draws so that
/// uniform b-subsets cost O(b) swaps; each sampler belongs to one thread.
class subset_sampler {
 public:
  explicit subset_sampler(sampling_scheme scheme) : scheme_(std::move(scheme)) {
    if (scheme_.kind() == sampling_kind::uniform_minibatch) {
      buffer_.resize(scheme_.n());
      std::iota(buffer_.begin(), buffer_.end(), std::size_t{0});
    } else if (scheme_.kind() == sampling_kind::approximate_independent) {
      buffer_.assign(scheme_.partial_indices().begin(), scheme_.partial_indices().end());
    }
  }

  const sampling_scheme& scheme() const noexcept { return scheme_; }

  /// Writes the drawn indices to out in ascending order.
  void draw(rng_type& rng, std::vector<std::size_t>& out) {
    out.clear();
    switch (scheme_.kind()) {
      case sampling_kind::uniform_minibatch: {
        const auto b = static_cast<std::size_t>(scheme_.b());
        partial_shuffle(rng, b);
        out.assign(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(b));
        break;
      }
      case sampling_kind::independent: {
        const auto p = scheme_.p();
        for (std::size_t i = 0; i < p.size(); ++i)
          if (p[i] >= 1.0 || uniform01(rng) < p[i]) out.push_back(i);
        break;
      }
      case sampling_kind::approximate_independent: {
        const std::size_t a = scheme_.a();
        partial_shuffle(rng, a);
        for (std::size_t j = 0; j < a; ++j) {
          const std::size_t i = buffer_[j];
          if (uniform01(rng) < scheme_.thinning_probability(i)) out.push_back(i);
        }
        out.insert(out.end(), scheme_.full_indices().begin(), scheme_.full_indices().end());
        break;
      }
    }
    std::sort(out.begin(), out.end());
  }

 private:
  void partial_shuffle(rng_type& rng, std::size_t count) {
    const std::size_t m = buffer_.size();
    for (std::size_t j = 0; j < count; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, m - 1);
      std::swap(buffer_[j], buffer_[pick(rng)]);
    }
  }

  sampling_scheme scheme_;
  std::vector<std::size_t> buffer_;
};

inline std::vector<std::size_t> draw(const sampling_scheme& scheme, rng_type& rng) {
  subset_sampler sampler(scheme);
  std::vector<std::size_t> out;
  sampler.draw(rng, out);
  return out;
}

/// Plain-text key-value block:
///   kind = independent
///   n = 4
///   b = 2
///   p = 0.2 0.4 0.6 0.8
inline std::string to_text(const sampling_scheme& scheme) {
  std::string s;
  s += "kind = ";
  s += to_string(scheme.kind());
  s += "\nn = " + std::to_string(scheme.n());
  s += "\nb = " + format_double(scheme.b());
  s += "\np =";
  for (double x : scheme.p()) s += " " + format_double(x);
  s += "\n";
  return s;
}

inline sampling_scheme scheme_from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::string kind_text;
  std::size_t n = 0;
  double b = -1.0;
  std::vector<double> p;
  bool have_p = false;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto first = s.find_first_not_of(" \t\r");
      const auto last = s.find_last_not_of(" \t\r");
      return first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "kind") {
      kind_text = value;
    } else if (key == "n") {
      n = static_cast<std::size_t>(parse_unsigned(value));
    } else if (key == "b") {
      b = parse_double(value);
    } else if (key == "p") {
      std::istringstream ps(value);
      std::string tok;
      while (ps >> tok) p.push_back(parse_double(tok));
      have_p = true;
    }
  }
  if (kind_text.empty() || !have_p) throw input_error("sampling block needs 'kind' and 'p'");
  if (n != 0 && n != p.size()) throw input_error("sampling block: n does not match the length of p");
  auto scheme = sampling_scheme::make(parse_sampling_kind(kind_text), std::move(p));
  if (b > 0.0 && std::abs(scheme.b() - b) > 1e-12 * std::max(1.0, b))
    throw input_error("sampling block: b does not equal sum(p)");
  return scheme;
}

}  // namespace vrs

#endif
