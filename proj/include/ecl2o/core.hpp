#ifndef ECL2O_CORE_HPP
#define ECL2O_CORE_HPP

#include <charconv>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ecl2o {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Thrown when a ratio would divide by an (effectively) zero optimal cost.
class ZeroOptimalCost : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline void require_dim(const Vec& v, Eigen::Index d, const char* what) {
  if (v.size() != d) {
    std::ostringstream os;
    os << what << ": expected dimension " << d << ", got " << v.size();
    throw DimensionError(os.str());
  }
}

/// Shortest decimal that round-trips a double.
/// Shortest text that parses back to exactly `v`.
inline std::string fmt_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Initial action plus the context sequence y_1..y_T of one episode.
class ProblemInstance {
 public:
  ProblemInstance() = default;

  ProblemInstance(Vec x0, std::vector<Vec> contexts, std::string id = {})
      : x0_(std::move(x0)), contexts_(std::move(contexts)), id_(std::move(id)) {
    if (contexts_.empty()) throw ValidationError("ProblemInstance: T must be >= 1");
    if (x0_.size() == 0) throw ValidationError("ProblemInstance: empty action vector");
    if (!detail::all_finite(x0_)) throw ValidationError("ProblemInstance: non-finite x0");
    const auto q = contexts_.front().size();
    for (std::size_t t = 0; t < contexts_.size(); ++t) {
      if (contexts_[t].size() != q)
        throw DimensionError("ProblemInstance: inconsistent context dimension at step " +
                             std::to_string(t + 1));
      if (!detail::all_finite(contexts_[t]))
        throw ValidationError("ProblemInstance: non-finite context at step " +
                              std::to_string(t + 1));
    }
  }

  /// Scalar convenience for the d = q = 1 case.
  static ProblemInstance scalar(double x0, const std::vector<double>& ys, std::string id = {}) {
    std::vector<Vec> ctx;
    ctx.reserve(ys.size());
    for (double y : ys) ctx.push_back(Vec::Constant(1, y));
    return ProblemInstance(Vec::Constant(1, x0), std::move(ctx), std::move(id));
  }

  const Vec& x0() const { return x0_; }
  const std::vector<Vec>& contexts() const { return contexts_; }
  const Vec& context(std::size_t t) const { return contexts_.at(t); }
  const std::string& id() const { return id_; }
  std::size_t horizon() const { return contexts_.size(); }
  Eigen::Index action_dim() const { return x0_.size(); }
  Eigen::Index context_dim() const { return contexts_.front().size(); }

  ProblemInstance with_x0(Vec x0) const { return ProblemInstance(std::move(x0), contexts_, id_); }

 private:
  Vec x0_;
  std::vector<Vec> contexts_;
  std::string id_;
};

/// Per-step record of one played episode.
struct EpisodeTrace {
  std::vector<Vec> predictions;
  std::vector<Vec> actions;
  std::vector<double> hitting_costs;
  std::vector<double> switching_costs;

  std::size_t size() const { return actions.size(); }

  void validate() const {
    const auto T = actions.size();
    if (predictions.size() != T || hitting_costs.size() != T || switching_costs.size() != T)
      throw ValidationError("EpisodeTrace: sequence lengths differ");
    for (std::size_t t = 0; t < T; ++t)
      if (!(hitting_costs[t] >= 0.0) || !(switching_costs[t] >= 0.0))
        throw ValidationError("EpisodeTrace: negative or NaN cost at step " +
                              std::to_string(t + 1));
  }
};

inline double total_cost(const EpisodeTrace& trace) {
  double s = 0.0;
  for (double h : trace.hitting_costs) s += h;
  for (double c : trace.switching_costs) s += c;
  return s;
}

inline double total_switching(const EpisodeTrace& trace) {
  double s = 0.0;
  for (double c : trace.switching_costs) s += c;
  return s;
}

/// Aggregate metrics of one policy over a dataset.
struct EvalResult {
  std::string policy;
  double avg_cost = 0.0;
  double oracle_avg_cost = 0.0;
  double normalized_avg_cost = 0.0;
  double empirical_cr = 0.0;
  std::map<double, double> tail_ratios;
  std::vector<double> per_instance_ratios;
  std::vector<double> per_instance_costs;
  std::vector<double> per_instance_oracle_costs;
  std::size_t excluded = 0;
};

/// Writes `step,x_tilde,x,f_cost,c_cost`. Vector entries are joined with ';' when d > 1.
inline void write_trace_csv(std::ostream& os, const EpisodeTrace& trace) {
  trace.validate();
  auto join = [](const Vec& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (i) s += ';';
      s += detail::fmt_real(v[i]);
    }
    return s;
  };
  os << "step,x_tilde,x,f_cost,c_cost\n";
  for (std::size_t t = 0; t < trace.size(); ++t) {
    os << (t + 1) << ',' << join(trace.predictions[t]) << ',' << join(trace.actions[t]) << ','
       << detail::fmt_real(trace.hitting_costs[t]) << ','
       << detail::fmt_real(trace.switching_costs[t]) << '\n';
  }
}

inline EpisodeTrace read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "step,x_tilde,x,f_cost,c_cost")
    throw ValidationError("trace CSV: bad header");
  auto parse_vec = [](const std::string& cell) {
    std::vector<double> vals;
    std::stringstream ss(cell);
    std::string tok;
    while (std::getline(ss, tok, ';')) vals.push_back(std::stod(tok));
    return Vec(Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size())));
  };
  EpisodeTrace tr;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw ValidationError("trace CSV: row " + std::to_string(row) +
                                                 " has " + std::to_string(cells.size()) +
                                                 " columns");
    tr.predictions.push_back(parse_vec(cells[1]));
    tr.actions.push_back(parse_vec(cells[2]));
    tr.hitting_costs.push_back(std::stod(cells[3]));
    tr.switching_costs.push_back(std::stod(cells[4]));
  }
  tr.validate();
  return tr;
}

}  // namespace ecl2o

#endif  // ECL2O_CORE_HPP
