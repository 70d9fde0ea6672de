#pragma once

// Monte Carlo harness: configuration file, per-run filtering and smoothing
// over every requested strategy, RMSE/RET reduction and CSV reports.
//
// Config grammar (one entry per line, '#' starts a comment):
//
//   entry   := key '=' value
//   value   := expr | text
//   expr    := term (('+'|'-') term)*
//   term    := unary (('*'|'/') unary)*
//   unary   := ('+'|'-') unary | atom
//   atom    := number | 'pi' | '(' expr ')' | '[' rows ']' | 'diag' '[' row ']'
//            | 'eye' '(' expr ')'
//   rows    := row (';' row)*
//   row     := expr (',' expr)*
//
// Scalars and matrices mix as expected (scalar * matrix, matrix + matrix).
// A one-row or one-column matrix is accepted wherever a vector is needed.
//
// Keys:
//   model         vdp | polynomial
//   vdp.A, vdp.lambda, vdp.delta                     (model = vdp)
//   state_dim, f.1 .. f.n, h.1 .. h.m, forcing        (model = polynomial)
//       forcing = [component, amplitude, angular_step], component 1-based;
//       adds amplitude * cos(angular_step * (k - 1)) to that component of f_k.
//   Q, R, steps, runs, seed, x0, init.mean, init.cov
//   strategies    comma-separated subset of gi, ckf, ukf, ekf (default: all)
//   ukf.kappa     default -1
//   out           output directory (default: results)

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "gis/core.hpp"
#include "gis/models.hpp"
#include "gis/polynomial.hpp"
#include "gis/smoother.hpp"
#include "gis/strategies.hpp"

namespace gis {

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Caps the Monte Carlo worker pool; unset or invalid means hardware concurrency.
inline constexpr const char* kWorkersEnv = "GIS_WORKERS";

/// A covariance eigenvalue above this marks a run as diverged.
inline constexpr double kDivergenceEigenvalue = 1e12;

struct ExperimentConfig {
  std::string model = "vdp";
  double vdp_amplitude = 100.0;
  double vdp_frequency = 1.85 * M_PI / 2.0;
  double vdp_delta = 0.01;

  std::size_t state_dim = 0;
  std::vector<std::string> dynamics_text;
  std::vector<std::string> measurement_text;
  std::optional<Forcing> forcing;

  Matrix q, r;
  int steps = 0;
  int runs = 0;
  std::uint64_t seed = 0;
  Vector x0;
  Vector init_mean;
  Matrix init_cov;
  std::vector<std::string> strategies{"gi", "ckf", "ukf", "ekf"};
  double ukf_kappa = -1.0;
  std::string out = "results";
};

// ---------------------------------------------------------------------------
// Config parsing.

namespace detail {

struct ConfigValue {
  bool is_matrix = false;
  double scalar = 0.0;
  Matrix matrix;
};

class ExprParser {
 public:
  ExprParser(std::string_view text, std::string where) : text_(text), where_(std::move(where)) {}

  ConfigValue parse() {
    ConfigValue v = expr();
    skip();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(where_ + ": " + msg + " at column " + std::to_string(pos_ + 1));
  }

  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  bool accept_word(std::string_view w) {
    skip();
    if (text_.substr(pos_, w.size()) != w) return false;
    const std::size_t end = pos_ + w.size();
    if (end < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[end])) || text_[end] == '_')) {
      return false;
    }
    pos_ = end;
    return true;
  }

  ConfigValue combine(char op, ConfigValue a, ConfigValue b) {
    ConfigValue out;
    if (!a.is_matrix && !b.is_matrix) {
      switch (op) {
        case '+': out.scalar = a.scalar + b.scalar; break;
        case '-': out.scalar = a.scalar - b.scalar; break;
        case '*': out.scalar = a.scalar * b.scalar; break;
        default: out.scalar = a.scalar / b.scalar; break;
      }
      return out;
    }
    out.is_matrix = true;
    if (op == '+' || op == '-') {
      if (!a.is_matrix || !b.is_matrix) fail("cannot add a scalar and a matrix");
      if (a.matrix.rows() != b.matrix.rows() || a.matrix.cols() != b.matrix.cols()) {
        fail("matrix sizes differ");
      }
      out.matrix = op == '+' ? Matrix(a.matrix + b.matrix) : Matrix(a.matrix - b.matrix);
    } else if (op == '*') {
      if (a.is_matrix && b.is_matrix) fail("matrix products are not supported");
      out.matrix = a.is_matrix ? Matrix(a.matrix * b.scalar) : Matrix(b.matrix * a.scalar);
    } else {
      if (b.is_matrix) fail("cannot divide by a matrix");
      out.matrix = a.matrix / b.scalar;
    }
    return out;
  }

  ConfigValue expr() {
    ConfigValue v = term();
    while (true) {
      if (accept('+')) {
        v = combine('+', v, term());
      } else if (accept('-')) {
        v = combine('-', v, term());
      } else {
        return v;
      }
    }
  }

  ConfigValue term() {
    ConfigValue v = unary();
    while (true) {
      if (accept('*')) {
        v = combine('*', v, unary());
      } else if (accept('/')) {
        v = combine('/', v, unary());
      } else {
        return v;
      }
    }
  }

  ConfigValue unary() {
    if (accept('-')) {
      ConfigValue v = unary();
      if (v.is_matrix) {
        v.matrix = -v.matrix;
      } else {
        v.scalar = -v.scalar;
      }
      return v;
    }
    if (accept('+')) return unary();
    return atom();
  }

  double scalar_expr() {
    const ConfigValue v = expr();
    if (v.is_matrix) fail("expected a scalar");
    return v.scalar;
  }

  std::vector<double> row() {
    std::vector<double> out{scalar_expr()};
    while (accept(',')) out.push_back(scalar_expr());
    return out;
  }

  ConfigValue atom() {
    skip();
    if (pos_ >= text_.size()) fail("unexpected end of value");
    ConfigValue v;
    if (accept('(')) {
      v = expr();
      expect(')');
      return v;
    }
    if (accept_word("pi")) {
      v.scalar = M_PI;
      return v;
    }
    if (accept_word("eye")) {
      expect('(');
      const double n = scalar_expr();
      expect(')');
      if (!(n >= 1) || n != std::floor(n)) fail("eye() needs a positive integer");
      v.is_matrix = true;
      v.matrix = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      return v;
    }
    if (accept_word("diag")) {
      expect('[');
      const std::vector<double> d = row();
      expect(']');
      v.is_matrix = true;
      v.matrix = Matrix::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.size()));
      for (std::size_t i = 0; i < d.size(); ++i) {
        v.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = d[i];
      }
      return v;
    }
    if (accept('[')) {
      std::vector<std::vector<double>> rows{row()};
      while (accept(';')) rows.push_back(row());
      expect(']');
      for (const auto& r : rows) {
        if (r.size() != rows.front().size()) fail("ragged matrix literal");
      }
      v.is_matrix = true;
      v.matrix.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
          v.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
      }
      return v;
    }
    const char* begin = text_.data() + pos_;
    char* end = nullptr;
    // text_ is a view into a std::string, so strtod stops at its terminator.
    const double d = std::strtod(begin, &end);
    if (end == begin) fail("expected a number");
    pos_ += static_cast<std::size_t>(end - begin);
    v.scalar = d;
    return v;
  }

  std::string_view text_;
  std::string where_;
  std::size_t pos_ = 0;
};

struct RawEntry {
  std::string value;
  int line = 0;
};

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

class ConfigReader {
 public:
  ConfigReader(std::map<std::string, RawEntry> entries, std::string source)
      : entries_(std::move(entries)), source_(std::move(source)) {}

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  const RawEntry& raw(const std::string& key) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(source_ + ": missing required key '" + key + "'");
    used_.insert(key);
    return it->second;
  }

  std::string text(const std::string& key) { return raw(key).value; }

  ConfigValue value(const std::string& key) {
    const RawEntry& e = raw(key);
    return ExprParser(e.value, where(key)).parse();
  }

  double scalar(const std::string& key) {
    const ConfigValue v = value(key);
    if (v.is_matrix) throw ConfigError(where(key) + ": expected a scalar");
    return v.scalar;
  }

  long long integer(const std::string& key) {
    const double v = scalar(key);
    if (v != std::floor(v) || std::abs(v) > 9e15) {
      throw ConfigError(where(key) + ": expected an integer");
    }
    return static_cast<long long>(v);
  }

  Matrix matrix(const std::string& key) {
    ConfigValue v = value(key);
    if (!v.is_matrix) throw ConfigError(where(key) + ": expected a matrix");
    return v.matrix;
  }

  Vector vector(const std::string& key) {
    const Matrix m = matrix(key);
    if (m.rows() != 1 && m.cols() != 1) throw ConfigError(where(key) + ": expected a vector");
    return Eigen::Map<const Vector>(m.data(), m.size());
  }

  std::string where(const std::string& key) const {
    const auto it = entries_.find(key);
    return source_ + ":" + std::to_string(it == entries_.end() ? 0 : it->second.line) + " (" + key + ")";
  }

  void reject_unused() const {
    for (const auto& [key, entry] : entries_) {
      if (!used_.count(key)) {
        throw ConfigError(source_ + ":" + std::to_string(entry.line) + ": unknown key '" + key + "'");
      }
    }
  }

 private:
  std::map<std::string, RawEntry> entries_;
  std::set<std::string> used_;
  std::string source_;
};

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

/// Parses config text; `source` names it in error messages.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "config") {
  std::map<std::string, detail::RawEntry> entries;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const std::size_t eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError(source + ":" + std::to_string(number) + ": empty key or value");
    }
    if (!entries.emplace(key, detail::RawEntry{value, number}).second) {
      throw ConfigError(source + ":" + std::to_string(number) + ": duplicate key '" + key + "'");
    }
  }

  detail::ConfigReader rd(std::move(entries), source);
  ExperimentConfig cfg;
  cfg.model = rd.text("model");
  if (cfg.model == "vdp") {
    cfg.vdp_amplitude = rd.scalar("vdp.A");
    cfg.vdp_frequency = rd.scalar("vdp.lambda");
    cfg.vdp_delta = rd.scalar("vdp.delta");
  } else if (cfg.model == "polynomial") {
    const long long n = rd.integer("state_dim");
    if (n < 1) throw ConfigError(rd.where("state_dim") + ": must be at least 1");
    cfg.state_dim = static_cast<std::size_t>(n);
    for (std::size_t i = 1; i <= cfg.state_dim; ++i) {
      cfg.dynamics_text.push_back(rd.text("f." + std::to_string(i)));
    }
    for (std::size_t i = 1; rd.has("h." + std::to_string(i)); ++i) {
      cfg.measurement_text.push_back(rd.text("h." + std::to_string(i)));
    }
    if (cfg.measurement_text.empty()) throw ConfigError(source + ": missing required key 'h.1'");
    if (rd.has("forcing")) {
      const Vector fv = rd.vector("forcing");
      if (fv.size() != 3 || fv(0) < 1 || fv(0) != std::floor(fv(0))) {
        throw ConfigError(rd.where("forcing") +
                          ": expected [component, amplitude, angular_step] with component >= 1");
      }
      cfg.forcing = Forcing{static_cast<std::size_t>(fv(0)) - 1, fv(1), fv(2)};
    }
  } else {
    throw ConfigError(rd.where("model") + ": unknown model '" + cfg.model +
                      "' (expected vdp or polynomial)");
  }
  cfg.q = rd.matrix("Q");
  cfg.r = rd.matrix("R");
  const long long steps = rd.integer("steps");
  const long long runs = rd.integer("runs");
  if (steps < 1 || steps > 100000000) throw ConfigError(rd.where("steps") + ": out of range");
  if (runs < 1 || runs > 100000000) throw ConfigError(rd.where("runs") + ": out of range");
  cfg.steps = static_cast<int>(steps);
  cfg.runs = static_cast<int>(runs);
  if (rd.has("seed")) {
    const long long seed = rd.integer("seed");
    if (seed < 0) throw ConfigError(rd.where("seed") + ": must be non-negative");
    cfg.seed = static_cast<std::uint64_t>(seed);
  }
  cfg.x0 = rd.vector("x0");
  cfg.init_mean = rd.vector("init.mean");
  cfg.init_cov = rd.matrix("init.cov");
  if (rd.has("strategies")) cfg.strategies = detail::split_list(rd.text("strategies"));
  if (rd.has("ukf.kappa")) cfg.ukf_kappa = rd.scalar("ukf.kappa");
  if (rd.has("out")) cfg.out = rd.text("out");
  rd.reject_unused();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

/// Builds the model the config describes.
inline StateSpaceModel build_model(const ExperimentConfig& cfg) {
  if (cfg.model == "vdp") {
    return vdp_model(cfg.vdp_amplitude, cfg.vdp_frequency, cfg.vdp_delta, cfg.q, cfg.r);
  }
  std::vector<Polynomial> f, h;
  for (const auto& t : cfg.dynamics_text) f.push_back(parse_polynomial(t, cfg.state_dim));
  for (const auto& t : cfg.measurement_text) h.push_back(parse_polynomial(t, cfg.state_dim));
  std::vector<Forcing> forcing;
  if (cfg.forcing) forcing.push_back(*cfg.forcing);
  return StateSpaceModel(PolynomialMap(cfg.state_dim, std::move(f)),
                         PolynomialMap(cfg.state_dim, std::move(h)), cfg.q, cfg.r,
                         std::move(forcing));
}

/// Checks every invariant a run relies on, returning the model.
inline StateSpaceModel validate(const ExperimentConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("steps must be at least 1");
  if (cfg.runs < 1) throw ConfigError("runs must be at least 1");
  std::set<std::string> seen;
  for (const auto& s : cfg.strategies) {
    if (!is_strategy_name(s)) {
      throw ConfigError("unknown strategy '" + s + "' (expected gi, ckf, ukf or ekf)");
    }
    if (!seen.insert(s).second) throw ConfigError("strategy '" + s + "' listed twice");
  }
  StateSpaceModel model = build_model(cfg);
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  if (cfg.x0.size() != n) {
    throw ConfigError("x0 has length " + std::to_string(cfg.x0.size()) + ", state dimension is " +
                      std::to_string(n));
  }
  if (cfg.init_mean.size() != n) {
    throw ConfigError("init.mean has length " + std::to_string(cfg.init_mean.size()) +
                      ", state dimension is " + std::to_string(n));
  }
  if (cfg.init_cov.rows() != n || cfg.init_cov.cols() != n) {
    throw ConfigError("init.cov must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  spectral_decompose(cfg.init_cov);
  if (std::find(cfg.strategies.begin(), cfg.strategies.end(), "ukf") != cfg.strategies.end() &&
      !(static_cast<double>(n) + cfg.ukf_kappa > 0.0)) {
    throw ConfigError("ukf.kappa must exceed -" + std::to_string(n));
  }
  return model;
}

namespace detail {

inline std::string format_matrix(const Matrix& m) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) s += "; ";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) s += ", ";
      s += format_double(m(i, j));
    }
  }
  return s + "]";
}

inline std::string format_vector(const Vector& v) { return format_matrix(v.transpose()); }

}  // namespace detail

/// The effective configuration, in the config grammar; parses back to the same values.
inline std::string config_echo(const ExperimentConfig& cfg) {
  std::string s;
  auto put = [&](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
  put("model", cfg.model);
  if (cfg.model == "vdp") {
    put("vdp.A", format_double(cfg.vdp_amplitude));
    put("vdp.lambda", format_double(cfg.vdp_frequency));
    put("vdp.delta", format_double(cfg.vdp_delta));
  } else {
    put("state_dim", std::to_string(cfg.state_dim));
    for (std::size_t i = 0; i < cfg.dynamics_text.size(); ++i) {
      put("f." + std::to_string(i + 1),
          to_string(parse_polynomial(cfg.dynamics_text[i], cfg.state_dim)));
    }
    for (std::size_t i = 0; i < cfg.measurement_text.size(); ++i) {
      put("h." + std::to_string(i + 1),
          to_string(parse_polynomial(cfg.measurement_text[i], cfg.state_dim)));
    }
    if (cfg.forcing) {
      put("forcing", "[" + std::to_string(cfg.forcing->component + 1) + ", " +
                         format_double(cfg.forcing->amplitude) + ", " +
                         format_double(cfg.forcing->angular_step) + "]");
    }
  }
  put("Q", detail::format_matrix(cfg.q));
  put("R", detail::format_matrix(cfg.r));
  put("steps", std::to_string(cfg.steps));
  put("runs", std::to_string(cfg.runs));
  put("seed", std::to_string(cfg.seed));
  put("x0", detail::format_vector(cfg.x0));
  put("init.mean", detail::format_vector(cfg.init_mean));
  put("init.cov", detail::format_matrix(cfg.init_cov));
  std::string list;
  for (const auto& st : cfg.strategies) list += (list.empty() ? "" : ", ") + st;
  if (!list.empty()) put("strategies", list);
  put("ukf.kappa", format_double(cfg.ukf_kappa));
  put("out", cfg.out);
  return s;
}

// ---------------------------------------------------------------------------
// Monte Carlo run.

struct MethodReport {
  std::string method;
  bool present = false;         // false when every run diverged
  int diverged = 0;
  int completed = 0;
  Matrix filter_rmse;           // steps x n
  Matrix smoother_rmse;         // steps x n
  Vector filter_average;        // n, mean over steps
  Vector smoother_average;
  double forward_seconds = 0;   // summed over completed runs
  double backward_seconds = 0;
  double filter_ret = std::nan("");
  double smoother_ret = std::nan("");
  std::string diagnostic;       // first divergence message
};

struct RmseReport {
  int steps = 0;
  std::size_t state_dim = 0;
  int runs = 0;
  std::vector<MethodReport> methods;
};

/// GIS_WORKERS if set to a positive integer, else hardware concurrency (at least 1).
inline unsigned worker_count() {
  if (const char* env = std::getenv(kWorkersEnv)) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

struct MethodRun {
  bool diverged = false;
  std::string diagnostic;
  Matrix filter_sq;    // squared errors, steps x n
  Matrix smoother_sq;
  double forward_seconds = 0;
  double backward_seconds = 0;
};

inline bool covariance_blew_up(const Matrix& p) {
  if (!p.allFinite()) return true;
  if (p.trace() <= kDivergenceEigenvalue) return false;
  return Eigen::SelfAdjointEigenSolver<Matrix>(p, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff() >
         kDivergenceEigenvalue;
}

inline MethodRun run_method(const StateSpaceModel& model, const SimulatedTrajectory& traj,
                            const GaussianBelief& init, const AnyStrategy& strategy) {
  MethodRun out;
  SmoothingResult res;
  try {
    res = smooth(model, traj.measurements, init, strategy);
  } catch (const NumericalFailure& e) {
    out.diverged = true;
    out.diagnostic = e.what();
    return out;
  }
  const auto steps = static_cast<Eigen::Index>(traj.states.size());
  const auto n = static_cast<Eigen::Index>(model.state_dim());
  out.filter_sq.resize(steps, n);
  out.smoother_sq.resize(steps, n);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    const Vector& truth = traj.states[idx];
    const GaussianBelief& f = res.forward[idx].filtered;
    const GaussianBelief& s = res.smoothed[idx];
    if (covariance_blew_up(f.covariance()) || covariance_blew_up(s.covariance()) ||
        !f.mean().allFinite() || !s.mean().allFinite()) {
      out.diverged = true;
      out.diagnostic = "step " + std::to_string(k + 1) + ": covariance eigenvalue above " +
                       format_double(kDivergenceEigenvalue) + " or non-finite estimate";
      return out;
    }
    out.filter_sq.row(k) = (f.mean() - truth).array().square().transpose();
    out.smoother_sq.row(k) = (s.mean() - truth).array().square().transpose();
  }
  out.forward_seconds = res.forward_seconds;
  out.backward_seconds = res.backward_seconds;
  return out;
}

}  // namespace detail

/// Runs the configured Monte Carlo study. Runs execute on a bounded worker
/// pool but are folded into the sums strictly in run order, so the report
/// does not depend on the worker count (timings aside).
inline RmseReport run_experiment(const ExperimentConfig& cfg, unsigned workers = worker_count()) {
  const StateSpaceModel model = validate(cfg);
  const GaussianBelief init(cfg.init_mean, cfg.init_cov);
  std::vector<AnyStrategy> strategies;
  for (const auto& s : cfg.strategies) strategies.push_back(make_strategy(s, cfg.ukf_kappa));
  const std::size_t methods = strategies.size();
  const auto n = static_cast<Eigen::Index>(model.state_dim());

  RmseReport report;
  report.steps = cfg.steps;
  report.state_dim = model.state_dim();
  report.runs = cfg.runs;
  std::vector<Matrix> filter_sum(methods, Matrix::Zero(cfg.steps, n));
  std::vector<Matrix> smoother_sum(methods, Matrix::Zero(cfg.steps, n));
  report.methods.resize(methods);
  for (std::size_t m = 0; m < methods; ++m) report.methods[m].method = cfg.strategies[m];

  const auto total = static_cast<std::size_t>(cfg.runs);
  std::vector<std::optional<std::vector<detail::MethodRun>>> pending(total);
  std::size_t next_fold = 0;
  std::mutex mu;
  std::atomic<std::size_t> next_run{0};
  std::exception_ptr failure;

  auto fold_ready = [&] {
    // Caller holds mu.
    while (next_fold < total && pending[next_fold]) {
      auto& runs = *pending[next_fold];
      for (std::size_t m = 0; m < methods; ++m) {
        MethodReport& mr = report.methods[m];
        detail::MethodRun& run = runs[m];
        if (run.diverged) {
          if (mr.diverged++ == 0) mr.diagnostic = "run " + std::to_string(next_fold + 1) + ": " + run.diagnostic;
          continue;
        }
        ++mr.completed;
        filter_sum[m] += run.filter_sq;
        smoother_sum[m] += run.smoother_sq;
        mr.forward_seconds += run.forward_seconds;
        mr.backward_seconds += run.backward_seconds;
      }
      pending[next_fold].reset();
      ++next_fold;
    }
  };

  auto worker = [&] {
    while (true) {
      const std::size_t r = next_run.fetch_add(1);
      if (r >= total) return;
      try {
        const auto traj = simulate(model, cfg.x0, cfg.steps, mix_seed(cfg.seed, r));
        std::vector<detail::MethodRun> runs;
        runs.reserve(methods);
        for (const auto& s : strategies) runs.push_back(detail::run_method(model, traj, init, s));
        std::lock_guard<std::mutex> lock(mu);
        pending[r] = std::move(runs);
        fold_ready();
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        next_run.store(total);
        return;
      }
    }
  };

  const unsigned pool = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(total)));
  if (pool == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < pool; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  const MethodReport* ekf = nullptr;
  for (std::size_t m = 0; m < methods; ++m) {
    MethodReport& mr = report.methods[m];
    mr.present = mr.completed > 0;
    if (!mr.present) continue;
    mr.filter_rmse = (filter_sum[m] / mr.completed).cwiseSqrt();
    mr.smoother_rmse = (smoother_sum[m] / mr.completed).cwiseSqrt();
    mr.filter_average = mr.filter_rmse.colwise().mean().transpose();
    mr.smoother_average = mr.smoother_rmse.colwise().mean().transpose();
    if (mr.method == "ekf") ekf = &mr;
  }
  if (ekf != nullptr) {
    const double ekf_filter = ekf->forward_seconds;
    const double ekf_smoother = ekf->forward_seconds + ekf->backward_seconds;
    for (MethodReport& mr : report.methods) {
      if (!mr.present) continue;
      mr.filter_ret = mr.forward_seconds / ekf_filter;
      mr.smoother_ret = (mr.forward_seconds + mr.backward_seconds) / ekf_smoother;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reports.

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << body;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::string rmse_csv(const RmseReport& report, bool smoother) {
  std::string s = "step,method,state_index,rmse\n";
  for (const MethodReport& mr : report.methods) {
    if (!mr.present) continue;
    const Matrix& rmse = smoother ? mr.smoother_rmse : mr.filter_rmse;
    for (Eigen::Index k = 0; k < rmse.rows(); ++k) {
      for (Eigen::Index i = 0; i < rmse.cols(); ++i) {
        s += std::to_string(k + 1) + "," + mr.method + "," + std::to_string(i + 1) + "," +
             format_double(rmse(k, i)) + "\n";
      }
    }
  }
  return s;
}

}  // namespace detail

/// Summary table: one filter row and one smoother row per method. An absent
/// method (all runs diverged) keeps its rows with empty RMSE and RET fields.
inline std::string summary_csv(const RmseReport& report) {
  std::string s = "method,kind";
  for (std::size_t i = 1; i <= report.state_dim; ++i) s += ",state" + std::to_string(i);
  s += ",ret,diverged\n";
  for (const MethodReport& mr : report.methods) {
    for (const bool smoother : {false, true}) {
      s += mr.method + (smoother ? ",smoother" : ",filter");
      const Vector& avg = smoother ? mr.smoother_average : mr.filter_average;
      for (std::size_t i = 0; i < report.state_dim; ++i) {
        s += ",";
        if (mr.present) s += format_double(avg(static_cast<Eigen::Index>(i)));
      }
      s += ",";
      if (mr.present) s += format_double(smoother ? mr.smoother_ret : mr.filter_ret);
      s += "," + std::to_string(mr.diverged) + "\n";
    }
  }
  return s;
}

/// Writes rmse_filter.csv, rmse_smoother.csv, summary.csv and config_echo.
inline void write_reports(const RmseReport& report, const ExperimentConfig& cfg,
                          const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoError("cannot create directory " + directory.string() + ": " + ec.message());
  detail::write_file(directory / "rmse_filter.csv", detail::rmse_csv(report, false));
  detail::write_file(directory / "rmse_smoother.csv", detail::rmse_csv(report, true));
  detail::write_file(directory / "summary.csv", summary_csv(report));
  detail::write_file(directory / "config_echo", config_echo(cfg));
}

}  // namespace gis
