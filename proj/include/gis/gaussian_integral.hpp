#pragma once

// Exact expectations of polynomials under a multivariate Gaussian.
//
// With P = S diag(c) S^T, a Gaussian vector is x = mean + S z where the z_j
// are independent N(0, c_j). Each power x_i^m expands multinomially over the
// n+1 "slots" (mean_i, S_i1 z_1, ..., S_in z_n); multiplying the expansions
// of all variables gives a polynomial in z whose expectation is a sum of
// products of 1-D central moments, nonzero only when every z exponent is even.

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gis/core.hpp"
#include "gis/polynomial.hpp"

namespace gis {

/// Any single-variable power above this is refused; double factorials lose
/// precision soon after.
inline constexpr std::uint32_t kMaxVariablePower = 30;

class DegreeLimitExceeded : public Error {
 public:
  using Error::Error;
};

/// E[z^m] for z ~ N(0, variance): 0 for odd m, (m-1)!! variance^(m/2) for
/// even m. Variance 0 is the Dirac case (1 for m = 0, 0 otherwise).
inline double gaussian_moment_1d(std::uint32_t m, double variance) {
  if (!(variance >= 0.0)) {
    throw InvalidParameter("gaussian_moment_1d: variance must be nonnegative, got " +
                           std::to_string(variance));
  }
  if (m == 0) return 1.0;
  if (m % 2 == 1 || variance == 0.0) return 0.0;
  double double_factorial = 1.0;
  for (std::uint32_t k = m - 1; k > 1; k -= 2) double_factorial *= static_cast<double>(k);
  return double_factorial * std::pow(variance, static_cast<int>(m / 2));
}

/**
 * All nonnegative integer vectors (a_1..a_s) with sum t, each paired with its
 * multinomial coefficient t!/(a_1!...a_s!). Entries are stored flat: entry k
 * occupies parts[k*s .. k*s+s).
 */
class CompositionTable {
 public:
  CompositionTable(std::uint32_t total, std::uint32_t slots)
      : total_(total), slots_(slots) {
    if (slots == 0) throw InvalidParameter("CompositionTable: slots must be positive");
    std::vector<std::uint32_t> current(slots, 0);
    enumerate(0, total, 1.0, current);
  }

  std::uint32_t total() const { return total_; }
  std::uint32_t slots() const { return slots_; }
  std::size_t size() const { return coefficients_.size(); }

  const std::uint32_t* parts(std::size_t k) const { return parts_.data() + k * slots_; }
  double coefficient(std::size_t k) const { return coefficients_[k]; }

 private:
  // Multinomial built as a running product of binomials C(remaining, a).
  void enumerate(std::uint32_t slot, std::uint32_t remaining, double coef,
                 std::vector<std::uint32_t>& current) {
    if (slot + 1 == slots_) {
      current[slot] = remaining;
      parts_.insert(parts_.end(), current.begin(), current.end());
      coefficients_.push_back(coef);
      return;
    }
    double binom = 1.0;  // C(remaining, a)
    for (std::uint32_t a = 0; a <= remaining; ++a) {
      current[slot] = a;
      enumerate(slot + 1, remaining - a, coef * binom, current);
      binom = binom * static_cast<double>(remaining - a) / static_cast<double>(a + 1);
    }
  }

  std::uint32_t total_;
  std::uint32_t slots_;
  std::vector<std::uint32_t> parts_;
  std::vector<double> coefficients_;
};

/// Memoizes composition tables by (total, slots).
class CompositionCache {
 public:
  const CompositionTable& get(std::uint32_t total, std::uint32_t slots) {
    auto it = tables_.find({total, slots});
    if (it == tables_.end()) {
      it = tables_.emplace(std::pair{total, slots}, CompositionTable(total, slots)).first;
    }
    return it->second;
  }

  std::size_t size() const { return tables_.size(); }

 private:
  std::map<std::pair<std::uint32_t, std::uint32_t>, CompositionTable> tables_;
};

/**
 * Computes Gaussian expectations of polynomials for one fixed belief.
 *
 * Holds the spectral decomposition, the composition tables, and the
 * expansions of each (variable, power) pair, so that every term of every
 * polynomial evaluated through the same integrator reuses them. An
 * integrator is cheap to build and is not meant to be shared across threads.
 */
class GaussianIntegrator {
 public:
  explicit GaussianIntegrator(const GaussianBelief& belief)
      : GaussianIntegrator(belief.mean(), spectral_decompose(belief.covariance())) {}

  /// Uses the given decomposition as-is; any orthonormal eigenbasis paired
  /// with its eigenvalues yields the same expectations.
  GaussianIntegrator(Vector mean, SpectralDecomposition decomposition)
      : mean_(std::move(mean)), dec_(std::move(decomposition)) {
    if (dec_.basis.rows() != mean_.size() || dec_.basis.cols() != mean_.size() ||
        dec_.eigenvalues.size() != mean_.size()) {
      throw DimensionError("GaussianIntegrator: decomposition does not match mean of length " +
                           std::to_string(mean_.size()));
    }
    if (mean_.size() == 0) throw DimensionError("GaussianIntegrator: empty belief");
    if (dec_.eigenvalues.minCoeff() < 0.0) {
      throw NotPsd("GaussianIntegrator: negative eigenvalue");
    }
    moments_.resize(static_cast<std::size_t>(mean_.size()));
  }

  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  const SpectralDecomposition& decomposition() const { return dec_; }

  /// E[prod_i x_i^exponents_i].
  double monomial(const Exponents& exponents) {
    const std::size_t n = dim();
    if (exponents.size() != n) {
      throw DimensionError("monomial_expectation: exponent vector has length " +
                           std::to_string(exponents.size()) + ", belief dimension is " +
                           std::to_string(n));
    }
    std::uint32_t total = 0;
    for (auto m : exponents) {
      if (m > kMaxVariablePower) {
        throw DegreeLimitExceeded("monomial_expectation: variable power " + std::to_string(m) +
                                  " exceeds the limit of " + std::to_string(kMaxVariablePower));
      }
      total += m;
    }
    if (total == 0) return 1.0;

    // Polynomial in z, keyed by its exponent vector packed in base total+1.
    const std::uint64_t radix = total + 1;
    if (!dense_fits(radix, n)) return monomial_sparse(exponents);
    std::vector<std::uint64_t> place(n);
    place[0] = 1;
    for (std::size_t j = 1; j < n; ++j) place[j] = place[j - 1] * radix;

    std::vector<Term> current{{0, 1.0}};
    std::vector<Term> next;
    buffer_.assign(static_cast<std::size_t>(pow_u64(radix, n)), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (exponents[i] == 0) continue;
      const Expansion& ex = expansion(i, exponents[i]);
      const std::size_t count = ex.coefficients.size();
      std::vector<std::uint64_t> keys(count);
      for (std::size_t t = 0; t < count; ++t) {
        std::uint64_t key = 0;
        const std::uint32_t* z = ex.z_exponents.data() + t * n;
        for (std::size_t j = 0; j < n; ++j) key += z[j] * place[j];
        keys[t] = key;
      }
      next.clear();
      for (const Term& lhs : current) {
        for (std::size_t t = 0; t < count; ++t) {
          const std::uint64_t key = lhs.key + keys[t];
          double& slot = buffer_[key];
          if (slot == 0.0) next.push_back({key, 0.0});
          slot += lhs.coefficient * ex.coefficients[t];
        }
      }
      // Collect and reset the touched slots. A slot that cancels to exactly
      // zero is listed once and read back as zero, which is harmless.
      for (Term& term : next) {
        term.coefficient = buffer_[term.key];
        buffer_[term.key] = 0.0;
      }
      std::swap(current, next);
    }

    double sum = 0.0;
    std::vector<std::uint32_t> z(n);
    for (const Term& term : current) {
      if (term.coefficient == 0.0) continue;
      std::uint64_t key = term.key;
      bool even = true;
      for (std::size_t j = 0; j < n; ++j) {
        z[j] = static_cast<std::uint32_t>(key % radix);
        key /= radix;
        if (z[j] % 2 != 0) {
          even = false;
          break;
        }
      }
      if (!even) continue;
      double value = term.coefficient;
      for (std::size_t j = 0; j < n && value != 0.0; ++j) value *= moment(j, z[j]);
      sum += value;
    }
    return sum;
  }

  double polynomial(const Polynomial& p) {
    check_arity(p.arity(), "polynomial_expectation");
    double sum = 0.0;
    for (const auto& [e, c] : p.terms()) sum += c * monomial(e);
    return sum;
  }

  Vector map(const PolynomialMap& f) {
    check_arity(f.arity(), "map_expectation");
    Vector out(static_cast<Eigen::Index>(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) out(static_cast<Eigen::Index>(i)) = polynomial(f[i]);
    return out;
  }

  /// Entry (g, g') = E[x_g f_g'(x)]; shape dim x f.size().
  Matrix cross_moment(const PolynomialMap& f) {
    check_arity(f.arity(), "cross_moment_matrix");
    const std::size_t n = dim();
    Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f.size()));
    for (std::size_t g = 0; g < n; ++g) {
      for (std::size_t gp = 0; gp < f.size(); ++gp) {
        out(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(gp)) =
            polynomial(f[gp].multiply_by_coordinate(g));
      }
    }
    return out;
  }

  /// Entry (i, j) = E[f_i(x) f_j(x)]; computed on the upper triangle and mirrored.
  Matrix second_moment(const PolynomialMap& f) {
    check_arity(f.arity(), "second_moment_matrix");
    const auto m = static_cast<Eigen::Index>(f.size());
    Matrix out(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = i; j < m; ++j) {
        const double v = polynomial(f[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(j)]);
        out(i, j) = v;
        out(j, i) = v;
      }
    }
    return out;
  }

 private:
  struct Term {
    std::uint64_t key;
    double coefficient;
  };

  // (mean_i + sum_j S_ij z_j)^m as a list of z exponent vectors (flat, n per
  // term) and coefficients; zero coefficients are dropped.
  struct Expansion {
    std::vector<std::uint32_t> z_exponents;
    std::vector<double> coefficients;
  };

  static std::uint64_t pow_u64(std::uint64_t base, std::size_t e) {
    std::uint64_t r = 1;
    for (std::size_t k = 0; k < e; ++k) r *= base;
    return r;
  }

  static bool dense_fits(std::uint64_t radix, std::size_t n) {
    constexpr std::uint64_t kMaxDense = std::uint64_t{1} << 20;
    std::uint64_t r = 1;
    for (std::size_t k = 0; k < n; ++k) {
      r *= radix;
      if (r > kMaxDense) return false;
    }
    return true;
  }

  void check_arity(std::size_t arity, const char* who) const {
    if (arity != dim()) {
      throw DimensionError(std::string(who) + ": polynomial arity " + std::to_string(arity) +
                           " does not match belief dimension " + std::to_string(dim()));
    }
  }

  const Expansion& expansion(std::size_t i, std::uint32_t power) {
    auto it = expansions_.find({i, power});
    if (it != expansions_.end()) return it->second;
    const std::size_t n = dim();
    const CompositionTable& table = compositions_.get(power, static_cast<std::uint32_t>(n + 1));
    Expansion ex;
    ex.z_exponents.reserve(table.size() * n);
    ex.coefficients.reserve(table.size());
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k < table.size(); ++k) {
      const std::uint32_t* a = table.parts(k);
      double c = table.coefficient(k) * std::pow(mean_(row), static_cast<int>(a[0]));
      for (std::size_t j = 0; j < n && c != 0.0; ++j) {
        c *= std::pow(dec_.basis(row, static_cast<Eigen::Index>(j)), static_cast<int>(a[j + 1]));
      }
      if (c == 0.0) continue;
      ex.z_exponents.insert(ex.z_exponents.end(), a + 1, a + 1 + n);
      ex.coefficients.push_back(c);
    }
    return expansions_.emplace(std::pair{i, power}, std::move(ex)).first->second;
  }

  double moment(std::size_t j, std::uint32_t power) {
    auto& table = moments_[j];
    while (table.size() <= power) {
      table.push_back(gaussian_moment_1d(static_cast<std::uint32_t>(table.size()),
                                         dec_.eigenvalues(static_cast<Eigen::Index>(j))));
    }
    return table[power];
  }

  // Fallback for very high dimension: merge like terms in an ordered map.
  double monomial_sparse(const Exponents& exponents) {
    const std::size_t n = dim();
    using Key = std::vector<std::uint32_t>;
    std::map<Key, double> current{{Key(n, 0), 1.0}};
    for (std::size_t i = 0; i < n; ++i) {
      if (exponents[i] == 0) continue;
      const Expansion& ex = expansion(i, exponents[i]);
      std::map<Key, double> next;
      for (const auto& [key, coef] : current) {
        for (std::size_t t = 0; t < ex.coefficients.size(); ++t) {
          Key k = key;
          for (std::size_t j = 0; j < n; ++j) k[j] += ex.z_exponents[t * n + j];
          next[std::move(k)] += coef * ex.coefficients[t];
        }
      }
      current = std::move(next);
    }
    double sum = 0.0;
    for (const auto& [key, coef] : current) {
      bool even = true;
      for (auto e : key) even = even && e % 2 == 0;
      if (!even || coef == 0.0) continue;
      double value = coef;
      for (std::size_t j = 0; j < n; ++j) value *= moment(j, key[j]);
      sum += value;
    }
    return sum;
  }

  Vector mean_;
  SpectralDecomposition dec_;
  CompositionCache compositions_;
  std::map<std::pair<std::size_t, std::uint32_t>, Expansion> expansions_;
  std::vector<std::vector<double>> moments_;
  std::vector<double> buffer_;
};

inline double monomial_expectation(const Exponents& exponents, const GaussianBelief& belief) {
  return GaussianIntegrator(belief).monomial(exponents);
}

inline double polynomial_expectation(const Polynomial& p, const GaussianBelief& belief) {
  return GaussianIntegrator(belief).polynomial(p);
}

inline Vector map_expectation(const PolynomialMap& f, const GaussianBelief& belief) {
  return GaussianIntegrator(belief).map(f);
}

inline Matrix cross_moment_matrix(const PolynomialMap& f, const GaussianBelief& belief) {
  return GaussianIntegrator(belief).cross_moment(f);
}

inline Matrix second_moment_matrix(const PolynomialMap& f, const GaussianBelief& belief) {
  return GaussianIntegrator(belief).second_moment(f);
}

}  // namespace gis
