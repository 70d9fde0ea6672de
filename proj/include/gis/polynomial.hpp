#pragma once

// Sparse multivariate polynomials with real coefficients.
//
// Variables are addressed by 0-based index in the C++ API. The text format
// uses 1-based names (x1, x2, ...), e.g. "1.5*x1^2*x2 + -3*x3 + 0.25".

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gis/core.hpp"

namespace gis {

using Exponents = std::vector<std::uint32_t>;

struct Monomial {
  double coefficient = 0.0;
  Exponents exponents;

  std::uint32_t total_degree() const {
    return std::accumulate(exponents.begin(), exponents.end(), 0u);
  }
};

/**
 * Polynomial in a fixed number of variables, stored as a map from exponent
 * vector to coefficient.
 *
 * Canonical form: keys sorted lexicographically, like terms merged, and terms
 * whose coefficient is exactly 0.0 removed. No epsilon pruning is done, so two
 * polynomials compare equal only if every coefficient matches bit for bit.
 */
class Polynomial {
 public:
  using TermMap = std::map<Exponents, double>;

  explicit Polynomial(std::size_t arity = 1) : arity_(arity) {
    if (arity_ == 0) throw InvalidParameter("Polynomial: arity must be positive");
  }

  Polynomial(std::size_t arity, const std::vector<Monomial>& monomials)
      : Polynomial(arity) {
    for (const auto& m : monomials) add_term(m.exponents, m.coefficient);
  }

  static Polynomial constant(std::size_t arity, double value) {
    Polynomial p(arity);
    p.add_term(Exponents(arity, 0), value);
    return p;
  }

  /// The coordinate polynomial x_index (0-based).
  static Polynomial variable(std::size_t arity, std::size_t index) {
    Polynomial p(arity);
    p.check_index(index, "variable");
    Exponents e(arity, 0);
    e[index] = 1;
    p.add_term(e, 1.0);
    return p;
  }

  /// Adds coefficient * x^exponents, merging with an existing like term.
  void add_term(const Exponents& exponents, double coefficient) {
    if (exponents.size() != arity_) {
      throw DimensionError("Polynomial: exponent vector has length " +
                           std::to_string(exponents.size()) + ", arity is " +
                           std::to_string(arity_));
    }
    if (coefficient == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(exponents, coefficient);
    if (!inserted) {
      it->second += coefficient;
      if (it->second == 0.0) terms_.erase(it);
    }
  }

  std::size_t arity() const { return arity_; }
  const TermMap& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool is_zero() const { return terms_.empty(); }

  /// Total degree; 0 for the zero polynomial.
  std::uint32_t degree() const {
    std::uint32_t d = 0;
    for (const auto& [e, c] : terms_) {
      d = std::max(d, std::accumulate(e.begin(), e.end(), 0u));
    }
    return d;
  }

  /// Highest power of any single variable.
  std::uint32_t max_variable_power() const {
    std::uint32_t d = 0;
    for (const auto& [e, c] : terms_) {
      for (auto v : e) d = std::max(d, v);
    }
    return d;
  }

  double evaluate(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != arity_) {
      throw DimensionError("Polynomial::evaluate: point has length " +
                           std::to_string(x.size()) + ", arity is " +
                           std::to_string(arity_));
    }
    double sum = 0.0;
    for (const auto& [e, c] : terms_) {
      double term = c;
      for (std::size_t i = 0; i < arity_; ++i) {
        for (std::uint32_t k = 0; k < e[i]; ++k) term *= x(static_cast<Eigen::Index>(i));
      }
      sum += term;
    }
    return sum;
  }

  /// Every exponent vector gets component `index` incremented by one.
  Polynomial multiply_by_coordinate(std::size_t index) const {
    check_index(index, "multiply_by_coordinate");
    Polynomial out(arity_);
    for (const auto& [e, c] : terms_) {
      Exponents shifted = e;
      ++shifted[index];
      out.terms_.emplace_hint(out.terms_.end(), std::move(shifted), c);
    }
    return out;
  }

  Polynomial differentiate(std::size_t index) const {
    check_index(index, "differentiate");
    Polynomial out(arity_);
    for (const auto& [e, c] : terms_) {
      if (e[index] == 0) continue;
      Exponents lowered = e;
      --lowered[index];
      out.add_term(lowered, c * static_cast<double>(e[index]));
    }
    return out;
  }

  Polynomial& operator+=(const Polynomial& rhs) {
    check_same_arity(rhs, "operator+");
    for (const auto& [e, c] : rhs.terms_) add_term(e, c);
    return *this;
  }

  Polynomial& operator-=(const Polynomial& rhs) {
    check_same_arity(rhs, "operator-");
    for (const auto& [e, c] : rhs.terms_) add_term(e, -c);
    return *this;
  }

  Polynomial& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto it = terms_.begin(); it != terms_.end();) {
      it->second *= s;
      it = it->second == 0.0 ? terms_.erase(it) : std::next(it);
    }
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
  friend Polynomial operator*(double s, Polynomial a) { return a *= s; }
  friend Polynomial operator-(Polynomial a) { return a *= -1.0; }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    a.check_same_arity(b, "operator*");
    Polynomial out(a.arity_);
    Exponents e(a.arity_);
    for (const auto& [ea, ca] : a.terms_) {
      for (const auto& [eb, cb] : b.terms_) {
        for (std::size_t i = 0; i < a.arity_; ++i) e[i] = ea[i] + eb[i];
        out.add_term(e, ca * cb);
      }
    }
    return out;
  }

  friend bool operator==(const Polynomial& a, const Polynomial& b) {
    return a.arity_ == b.arity_ && a.terms_ == b.terms_;
  }

 private:
  void check_index(std::size_t index, const char* who) const {
    if (index >= arity_) {
      throw DimensionError(std::string("Polynomial::") + who + ": index " +
                           std::to_string(index) + " out of range for arity " +
                           std::to_string(arity_));
    }
  }

  void check_same_arity(const Polynomial& other, const char* who) const {
    if (other.arity_ != arity_) {
      throw DimensionError(std::string("Polynomial ") + who + ": arity " +
                           std::to_string(arity_) + " vs " +
                           std::to_string(other.arity_));
    }
  }

  std::size_t arity_;
  TermMap terms_;
};

inline double evaluate(const Polynomial& p, const Vector& x) { return p.evaluate(x); }
inline Polynomial multiply(const Polynomial& p, const Polynomial& q) { return p * q; }
inline Polynomial multiply_by_coordinate(const Polynomial& p, std::size_t index) {
  return p.multiply_by_coordinate(index);
}
inline Polynomial differentiate(const Polynomial& p, std::size_t index) {
  return p.differentiate(index);
}

/// An ordered list of polynomials sharing one input arity: x -> R^m.
class PolynomialMap {
 public:
  PolynomialMap() = default;

  PolynomialMap(std::size_t arity, std::vector<Polynomial> components)
      : arity_(arity), components_(std::move(components)) {
    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (components_[i].arity() != arity_) {
        throw DimensionError("PolynomialMap: component " + std::to_string(i) +
                             " has arity " +
                             std::to_string(components_[i].arity()) +
                             ", expected " + std::to_string(arity_));
      }
    }
  }

  static PolynomialMap identity(std::size_t n) {
    std::vector<Polynomial> c;
    c.reserve(n);
    for (std::size_t i = 0; i < n; ++i) c.push_back(Polynomial::variable(n, i));
    return PolynomialMap(n, std::move(c));
  }

  /// x -> F x + b.
  static PolynomialMap affine(const Matrix& f, const Vector& b) {
    if (b.size() != f.rows()) {
      throw DimensionError("PolynomialMap::affine: offset length mismatch");
    }
    const auto n = static_cast<std::size_t>(f.cols());
    std::vector<Polynomial> c;
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
      Polynomial p = Polynomial::constant(n, b(r));
      for (std::size_t j = 0; j < n; ++j) {
        Exponents e(n, 0);
        e[j] = 1;
        p.add_term(e, f(r, static_cast<Eigen::Index>(j)));
      }
      c.push_back(std::move(p));
    }
    return PolynomialMap(n, std::move(c));
  }

  static PolynomialMap linear(const Matrix& f) {
    return affine(f, Vector::Zero(f.rows()));
  }

  std::size_t arity() const { return arity_; }
  std::size_t size() const { return components_.size(); }
  const Polynomial& operator[](std::size_t i) const { return components_[i]; }
  const std::vector<Polynomial>& components() const { return components_; }

  std::uint32_t degree() const {
    std::uint32_t d = 0;
    for (const auto& c : components_) d = std::max(d, c.degree());
    return d;
  }

  Vector evaluate(const Vector& x) const {
    Vector out(static_cast<Eigen::Index>(components_.size()));
    for (std::size_t i = 0; i < components_.size(); ++i) {
      out(static_cast<Eigen::Index>(i)) = components_[i].evaluate(x);
    }
    return out;
  }

  /// Exact Jacobian at x: entry (i, j) = d f_i / d x_j.
  Matrix jacobian(const Vector& x) const {
    Matrix j(static_cast<Eigen::Index>(components_.size()),
             static_cast<Eigen::Index>(arity_));
    for (std::size_t r = 0; r < components_.size(); ++r) {
      for (std::size_t c = 0; c < arity_; ++c) {
        j(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            components_[r].differentiate(c).evaluate(x);
      }
    }
    return j;
  }

 private:
  std::size_t arity_ = 0;
  std::vector<Polynomial> components_;
};

/// Row-major matrix of polynomials, as produced by outer_product.
struct PolynomialMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Polynomial> entries;

  const Polynomial& operator()(std::size_t i, std::size_t j) const {
    return entries[i * cols + j];
  }
};

/// Entry (i, j) = f_i * g_j.
inline PolynomialMatrix outer_product(const PolynomialMap& f, const PolynomialMap& g) {
  if (f.arity() != g.arity()) {
    throw DimensionError("outer_product: arity " + std::to_string(f.arity()) +
                         " vs " + std::to_string(g.arity()));
  }
  PolynomialMatrix out{f.size(), g.size(), {}};
  out.entries.reserve(f.size() * g.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (std::size_t j = 0; j < g.size(); ++j) out.entries.push_back(f[i] * g[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text format.
//
//   polynomial := ['+'|'-'] term (('+'|'-') term)*
//   term       := factor ('*' factor)*
//   factor     := number | 'x' index ['^' exponent]
//
// Numbers are decimal with optional sign and exponent ("-3", "2.5e-3").
// Whitespace is ignored everywhere.
// ---------------------------------------------------------------------------

class ParseError : public Error {
 public:
  using Error::Error;
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_string(const Polynomial& p) {
  if (p.is_zero()) return "0";
  std::string out;
  for (const auto& [e, c] : p.terms()) {
    if (!out.empty()) out += " + ";
    out += format_double(c);
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (e[i] == 0) continue;
      out += "*x" + std::to_string(i + 1);
      if (e[i] > 1) out += "^" + std::to_string(e[i]);
    }
  }
  return out;
}

namespace detail {

class PolynomialParser {
 public:
  PolynomialParser(std::string_view text, std::size_t arity) : arity_(arity) {
    for (char ch : text) {
      if (!std::isspace(static_cast<unsigned char>(ch))) text_ += ch;
    }
  }

  Polynomial parse() {
    if (text_.empty()) fail("empty polynomial");
    Polynomial out(arity_);
    double sign = read_sign();
    parse_term(out, sign);
    while (pos_ < text_.size()) {
      const char op = text_[pos_];
      if (op != '+' && op != '-') fail("expected '+' or '-'");
      sign = read_sign();
      parse_term(out, sign);
    }
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("polynomial parse error at offset " + std::to_string(pos_) +
                     " in \"" + text_ + "\": " + msg);
  }

  // Consumes a run of '+'/'-' and returns the resulting sign.
  double read_sign() {
    double sign = 1.0;
    while (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
      if (text_[pos_] == '-') sign = -sign;
      ++pos_;
    }
    return sign;
  }

  void parse_term(Polynomial& out, double sign) {
    double coefficient = sign;
    Exponents e(arity_, 0);
    parse_factor(coefficient, e);
    while (pos_ < text_.size() && text_[pos_] == '*') {
      ++pos_;
      parse_factor(coefficient, e);
    }
    out.add_term(e, coefficient);
  }

  void parse_factor(double& coefficient, Exponents& e) {
    if (pos_ >= text_.size()) fail("unexpected end of input");
    if (text_[pos_] == 'x') {
      ++pos_;
      const auto index = read_unsigned("variable index");
      if (index < 1 || index > arity_) {
        fail("variable x" + std::to_string(index) + " out of range for arity " +
             std::to_string(arity_));
      }
      std::uint32_t power = 1;
      if (pos_ < text_.size() && text_[pos_] == '^') {
        ++pos_;
        power = static_cast<std::uint32_t>(read_unsigned("exponent"));
      }
      e[index - 1] += power;
      return;
    }
    const char* begin = text_.c_str() + pos_;
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin) fail("expected a number or a variable");
    pos_ += static_cast<std::size_t>(end - begin);
    coefficient *= value;
  }

  std::size_t read_unsigned(const char* what) {
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(text_[pos_] - '0');
      if (value > 1'000'000) fail(std::string(what) + " too large");
      ++pos_;
    }
    if (pos_ == start) fail(std::string("expected ") + what);
    return value;
  }

  std::string text_;
  std::size_t pos_ = 0;
  std::size_t arity_;
};

}  // namespace detail

inline Polynomial parse_polynomial(std::string_view text, std::size_t arity) {
  return detail::PolynomialParser(text, arity).parse();
}

}  // namespace gis
