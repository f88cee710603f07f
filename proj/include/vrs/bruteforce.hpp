#ifndef VRS_BRUTEFORCE_HPP
#define VRS_BRUTEFORCE_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "numeric.hpp"
#include "sampling.hpp"

namespace vrs {

struct outcome {
  std::vector<std::size_t> subset;  // ascending
  double probability;
};

/// The full support of a sampling, with exact probabilities. Outcomes of
/// probability zero are omitted.
struct enumerated_law {
  std::size_t n = 0;
  std::vector<outcome> outcomes;
};

inline constexpr std::size_t enumeration_cap = 16;
inline constexpr std::size_t uniform_enumeration_cap = std::size_t{1} << 20;  // C(n, b)

namespace detail {

inline std::vector<std::size_t> mask_to_subset(std::uint64_t mask, std::span<const std::size_t> labels) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < labels.size(); ++j)
    if (mask >> j & 1U) out.push_back(labels[j]);
  return out;
}

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t j = 1; j <= k; ++j) c = c * static_cast<double>(n - k + j) / static_cast<double>(j);
  return std::round(c);
}

// e_0..e_r of the values in x.
inline std::vector<double> elementary_symmetric(std::span<const double> x, std::size_t r) {
  std::vector<double> e(r + 1, 0.0);
  e[0] = 1.0;
  for (double v : x)
    for (std::size_t j = r; j >= 1; --j) e[j] += v * e[j - 1];
  return e;
}

}  // namespace detail

inline enumerated_law enumerate_law(const sampling_scheme& scheme) {
  const std::size_t n = scheme.n();
  const auto p = scheme.p();
  enumerated_law law;
  law.n = n;
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  switch (scheme.kind()) {
    case sampling_kind::uniform_minibatch: {
      const auto b = static_cast<std::size_t>(scheme.b());
      const double count = detail::binomial(n, b);
      if (count > static_cast<double>(uniform_enumeration_cap))
        throw size_error("enumerate_law: C(n, b) = " + format_double(count) + " exceeds the enumeration cap");
      std::vector<bool> pick(n, false);
      std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(b), true);
      do {
        std::vector<std::size_t> s;
        for (std::size_t i = 0; i < n; ++i)
          if (pick[i]) s.push_back(i);
        law.outcomes.push_back({std::move(s), 1.0 / count});
      } while (std::prev_permutation(pick.begin(), pick.end()));
      break;
    }
    case sampling_kind::independent: {
      if (n > enumeration_cap) throw size_error("enumerate_law: n = " + std::to_string(n) + " exceeds 16");
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        double prob = 1.0;
        for (std::size_t i = 0; i < n; ++i) prob *= (mask >> i & 1U) ? p[i] : 1.0 - p[i];
        if (prob > 0.0) law.outcomes.push_back({detail::mask_to_subset(mask, all), prob});
      }
      break;
    }
    case sampling_kind::approximate_independent: {
      if (n > enumeration_cap) throw size_error("enumerate_law: n = " + std::to_string(n) + " exceeds 16");
      // Prob(T) = C(k,a)^{-1} prod_{i in T} q_i * e_{a-|T|}({1 - q_j : j not in T}),
      // summing the uniform first stage out analytically.
      const auto partial = scheme.partial_indices();
      const auto full = scheme.full_indices();
      const std::size_t k = partial.size();
      const std::size_t a = scheme.a();
      const double first_stage = detail::binomial(k, a);
      std::vector<double> q(k);
      for (std::size_t j = 0; j < k; ++j) q[j] = scheme.thinning_probability(partial[j]);
      std::vector<double> misses;
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << k); ++mask) {
        const auto t = static_cast<std::size_t>(std::popcount(mask));
        if (t > a) continue;
        double hit = 1.0;
        misses.clear();
        for (std::size_t j = 0; j < k; ++j) {
          if (mask >> j & 1U) hit *= q[j];
          else misses.push_back(1.0 - q[j]);
        }
        const double prob = hit * detail::elementary_symmetric(misses, a - t)[a - t] / first_stage;
        if (!(prob > 0.0)) continue;
        auto s = detail::mask_to_subset(mask, partial);
        s.insert(s.end(), full.begin(), full.end());
        std::sort(s.begin(), s.end());
        law.outcomes.push_back({std::move(s), prob});
      }
      break;
    }
  }
  return law;
}

inline double total_probability(const enumerated_law& law) {
  compensated_sum s;
  for (const auto& o : law.outcomes) s.add(o.probability);
  return s.value();
}

/// Prob({i, j} in S) accumulated from the enumeration.
inline Eigen::MatrixXd law_probability_matrix(const enumerated_law& law) {
  const auto n = static_cast<Eigen::Index>(law.n);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (const auto& o : law.outcomes)
    for (std::size_t i : o.subset)
      for (std::size_t j : o.subset) P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += o.probability;
  return P;
}

/// E[f(S)] for a vector-valued f.
template <class F>
Eigen::VectorXd law_mean(const enumerated_law& law, F&& f) {
  std::optional<compensated_vector> acc;
  for (const auto& o : law.outcomes) {
    const Eigen::VectorXd x = f(std::span<const std::size_t>(o.subset));
    if (!acc) acc.emplace(x.size());
    acc->add(o.probability * x);
  }
  return acc ? acc->value() : Eigen::VectorXd();
}

/// E[f(S)] for a scalar f.
template <class F>
double law_expectation(const enumerated_law& law, F&& f) {
  compensated_sum acc;
  for (const auto& o : law.outcomes) acc.add(o.probability * f(std::span<const std::size_t>(o.subset)));
  return acc.value();
}

struct estimator_moments {
  Eigen::VectorXd mean;
  double variance;  // E||X - EX||^2
};

/// Moments of X = sum_{i in S} zeta_i / (n p_i).
inline estimator_moments exact_estimator_moments(const enumerated_law& law, std::span<const double> p,
                                                 std::span<const Eigen::VectorXd> zeta) {
  const std::size_t n = law.n;
  if (p.size() != n || zeta.size() != n) throw domain_error("exact_estimator_moments: size mismatch");
  const Eigen::Index d = n ? zeta[0].size() : 0;
  auto draw = [&](std::span<const std::size_t> s) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    for (std::size_t i : s) x += zeta[i] / (static_cast<double>(n) * p[i]);
    return x;
  };
  estimator_moments m;
  m.mean = law_mean(law, draw);
  m.variance = law_expectation(law, [&](std::span<const std::size_t> s) { return (draw(s) - m.mean).squaredNorm(); });
  return m;
}

struct key_inequality_check {
  double lhs;
  double rhs;
  bool holds;
};

/// E||X - zeta_bar||^2 <= (1/n^2) sum_i v_i / p_i ||zeta_i||^2, with the
/// scheme's v unless an override is given.
inline key_inequality_check check_key_inequality(const enumerated_law& law, const sampling_scheme& scheme,
                                                 std::span<const Eigen::VectorXd> zeta,
                                                 std::span<const double> v_override = {}) {
  const std::size_t n = scheme.n();
  const auto p = scheme.p();
  const auto v = v_override.empty() ? scheme.v() : v_override;
  if (v.size() != n) throw domain_error("check_key_inequality: v has the wrong length");
  const Eigen::Index d = zeta[0].size();
  compensated_vector bar(d);
  for (const auto& z : zeta) bar.add(z);
  const Eigen::VectorXd zbar = bar.value() / static_cast<double>(n);
  const double lhs = law_expectation(law, [&](std::span<const std::size_t> s) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    for (std::size_t i : s) x += zeta[i] / (static_cast<double>(n) * p[i]);
    return (x - zbar).squaredNorm();
  });
  compensated_sum r;
  for (std::size_t i = 0; i < n; ++i) r.add(v[i] / p[i] * zeta[i].squaredNorm());
  const double rhs = r.value() / static_cast<double>(n * n);
  return {lhs, rhs, lhs <= rhs + 1e-12};
}

/// Scales w to sum b and caps entries at 1, handing the excess to the rest.
inline std::vector<double> water_fill(std::vector<double> w, double b) {
  const std::size_t n = w.size();
  std::vector<double> p(n, 0.0);
  std::vector<bool> capped(n, false);
  double budget = b;
  for (;;) {
    double free_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!capped[i]) free_mass += w[i];
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (capped[i]) continue;
      p[i] = budget * w[i] / free_mass;
      if (p[i] >= 1.0) {
        p[i] = 1.0;
        capped[i] = true;
        budget -= 1.0;
        changed = true;
      }
    }
    if (!changed || budget <= 0.0) break;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (capped[i]) p[i] = 1.0;
  return p;
}

struct alpha_search_result {
  std::vector<double> p;
  double alpha;
};

/// Random search over independent samplings with E|S| = b. Each trial draws a
/// Dirichlet vector with a random concentration from its own substream.
inline alpha_search_result search_alpha_optimum(std::span<const double> L, double b, std::size_t trials,
                                                std::uint64_t seed) {
  const std::size_t n = L.size();
  if (n == 0 || n > 12) throw size_error("search_alpha_optimum: n must lie in [1, 12]");
  if (!(b > 0.0) || b > static_cast<double>(n)) throw domain_error("search_alpha_optimum: infeasible b");
  alpha_search_result best{std::vector<double>(n, b / static_cast<double>(n)), 0.0};
  best.alpha = compute_alpha(L, sampling_scheme::independent(best.p)).alpha;
  for (std::size_t t = 0; t < trials; ++t) {
    auto rng = make_rng(seed, t);
    const double conc = std::exp(std::uniform_real_distribution<double>(std::log(0.1), std::log(1000.0))(rng));
    std::gamma_distribution<double> gamma(conc, 1.0);
    std::vector<double> w(n);
    for (double& x : w) x = std::max(gamma(rng), 1e-12);
    auto p = water_fill(std::move(w), b);
    const double a = compute_alpha(L, sampling_scheme::independent(p)).alpha;
    if (a < best.alpha) best = {std::move(p), a};
  }
  return best;
}

}  // namespace vrs

#endif
