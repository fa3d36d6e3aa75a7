#ifndef ECL2O_EVAL_HPP
#define ECL2O_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ecl2o/baselines.hpp"
#include "ecl2o/calibrator.hpp"
#include "ecl2o/core.hpp"
#include "ecl2o/mlopt.hpp"
#include "ecl2o/oracle.hpp"
#include "ecl2o/parallel.hpp"

namespace ecl2o {

enum class PolicyKind { Oracle, ROBD, Greedy, FtP, MLAROBD, PureML, ECL2O, Switch };

/// An online policy (or the offline oracle) ready to be rolled over instances.
struct Policy {
  PolicyKind kind = PolicyKind::Oracle;
  std::string name = "oracle";
  CalibratorParams params{};
  std::shared_ptr<const PolicyWeights> weights;
  SwitchState switch_init{};
  std::optional<ActionBounds> bounds;

  bool uses_predictor() const {
    return kind == PolicyKind::FtP || kind == PolicyKind::MLAROBD || kind == PolicyKind::PureML ||
           kind == PolicyKind::ECL2O || kind == PolicyKind::Switch;
  }

  static Policy oracle() { return {}; }
  static Policy robd(const CostModel& model) {
    return {PolicyKind::ROBD, "robd", robd_params(model), nullptr, {}, {}};
  }
  static Policy greedy() { return {PolicyKind::Greedy, "greedy", CalibratorParams::greedy(), nullptr, {}, {}}; }
  static Policy ftp(PolicyWeights w) {
    return {PolicyKind::FtP, "ftp", CalibratorParams::follow_the_prediction(),
            std::make_shared<const PolicyWeights>(std::move(w)), {}, {}};
  }
  /// Calibrator with explicit weights around a predictor.
  static Policy calibrated(PolicyWeights w, CalibratorParams p, std::string name = "mlarobd") {
    return {PolicyKind::MLAROBD, std::move(name), p,
            std::make_shared<const PolicyWeights>(std::move(w)), {}, {}};
  }
  static Policy mla_robd(const CostModel& model, PolicyWeights w, double theta) {
    return calibrated(std::move(w), params_for_trust(model, theta), "mlarobd");
  }
  static Policy ecl2o(const CostModel& model, PolicyWeights w, double theta) {
    Policy p = calibrated(std::move(w), params_for_trust(model, theta), "ecl2o");
    p.kind = PolicyKind::ECL2O;
    return p;
  }
  static Policy pureml(PolicyWeights w) {
    return {PolicyKind::PureML, "pureml", {}, std::make_shared<const PolicyWeights>(std::move(w)),
            {}, {}};
  }
  static Policy switching(const CostModel& model, PolicyWeights w, double gamma = 1.5,
                          double gamma_growth = 2.0, SwitchSide initial = SwitchSide::ML) {
    SwitchState s;
    s.active = initial;
    s.gamma = gamma;
    s.gamma_growth = gamma_growth;
    s.validate();
    return {PolicyKind::Switch, "switch", robd_params(model),
            std::make_shared<const PolicyWeights>(std::move(w)), s, {}};
  }
};

namespace detail {

inline void push_step(EpisodeTrace& tr, const CostModel& model, const Vec& y, const Vec& prev,
                      Vec pred, Vec x) {
  tr.hitting_costs.push_back(model.hitting.value(x, y));
  tr.switching_costs.push_back(model.switching.value(x, prev));
  tr.predictions.push_back(std::move(pred));
  tr.actions.push_back(std::move(x));
}

}  // namespace detail

/// Plays a fixed action sequence (e.g. raw predictions) and records the costs.
inline EpisodeTrace run_actions(const ProblemInstance& inst, const CostModel& model,
                                const std::vector<Vec>& actions) {
  if (actions.size() != inst.horizon()) throw DimensionError("run_actions: length mismatch");
  EpisodeTrace tr;
  Vec prev = inst.x0();
  for (std::size_t t = 0; t < actions.size(); ++t) {
    detail::push_step(tr, model, inst.context(t), prev, actions[t], actions[t]);
    prev = actions[t];
  }
  return tr;
}

/// Calibrates a given prediction sequence online.
inline EpisodeTrace run_calibrated(const ProblemInstance& inst, const CostModel& model,
                                   const CalibratorParams& params,
                                   const std::vector<Vec>& predictions,
                                   const std::optional<ActionBounds>& bounds = std::nullopt) {
  if (predictions.size() != inst.horizon()) throw DimensionError("run_calibrated: length mismatch");
  EpisodeTrace tr;
  Vec prev = inst.x0();
  for (std::size_t t = 0; t < inst.horizon(); ++t) {
    const Vec& y = inst.context(t);
    Vec x = calibrate_step(model, params, y, prev, predictions[t], bounds);
    detail::push_step(tr, model, y, prev, predictions[t], x);
    prev = std::move(x);
  }
  return tr;
}

inline EpisodeTrace run_policy(const Policy& policy, const ProblemInstance& inst,
                               const CostModel& model) {
  if (policy.uses_predictor() && !policy.weights)
    throw ValidationError("run_policy: policy '" + policy.name + "' needs predictor weights");
  EpisodeTrace tr;
  if (policy.kind == PolicyKind::Oracle) {
    auto sol = offline_optimal(inst, model);
    return run_actions(inst, model, sol.actions);
  }
  Vec prev = inst.x0();
  SwitchState sw = policy.switch_init;
  for (std::size_t t = 0; t < inst.horizon(); ++t) {
    const Vec& y = inst.context(t);
    switch (policy.kind) {
      case PolicyKind::ROBD:
      case PolicyKind::Greedy: {
        Vec x = calibrate_step(model, policy.params, y, prev, prev, policy.bounds);
        detail::push_step(tr, model, y, prev, prev, x);
        prev = std::move(x);
        break;
      }
      case PolicyKind::FtP:
      case PolicyKind::MLAROBD:
      case PolicyKind::ECL2O: {
        Vec pred = forward(*policy.weights, y, prev).x_tilde;
        Vec x = calibrate_step(model, policy.params, y, prev, pred, policy.bounds);
        detail::push_step(tr, model, y, prev, std::move(pred), x);
        prev = std::move(x);
        break;
      }
      case PolicyKind::PureML: {
        Vec x = forward(*policy.weights, y, prev).x_tilde;
        detail::push_step(tr, model, y, prev, x, x);
        prev = std::move(x);
        break;
      }
      case PolicyKind::Switch: {
        auto st = switch_step(sw, model, y, prev, *policy.weights, policy.params);
        sw = st.state;
        detail::push_step(tr, model, y, prev, std::move(st.ml_prediction), st.x);
        prev = std::move(st.x);
        break;
      }
      case PolicyKind::Oracle:
        break;
    }
  }
  return tr;
}

struct EvalOptions {
  bool chain_x0 = false;
  std::vector<double> percentiles{99.0, 99.9};
  unsigned jobs = 1;
  double floor_factor = 1e-9;  // nu_floor = floor_factor * median oracle cost
};

/// Nearest-rank percentile (pct in (0, 100]).
inline double percentile_nearest_rank(std::vector<double> v, double pct) {
  if (v.empty()) throw ValidationError("percentile: empty sample");
  if (!(pct > 0.0 && pct <= 100.0)) throw ValidationError("percentile: pct must lie in (0, 100]");
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(v.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

/// Order-independent sum (sorts first).
inline double stable_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

/// Per-instance records of an evaluation run, in dataset order.
struct EvalRun {
  std::vector<double> costs;
  std::vector<double> oracle_costs;
  std::vector<EpisodeTrace> traces;
};

inline EvalRun run_dataset(const Policy& policy, const std::vector<ProblemInstance>& data,
                           const CostModel& model, const EvalOptions& opt) {
  EvalRun run;
  const auto n = data.size();
  run.costs.resize(n);
  run.oracle_costs.resize(n);
  run.traces.resize(n);
  if (opt.chain_x0) {
    // Continuous testing: each episode starts where this policy's previous episode ended.
    std::optional<Vec> carry;
    for (std::size_t i = 0; i < n; ++i) {
      const auto inst = carry ? data[i].with_x0(*carry) : data[i];
      run.traces[i] = run_policy(policy, inst, model);
      run.costs[i] = total_cost(run.traces[i]);
      run.oracle_costs[i] = offline_optimal(inst, model).cost;
      carry = run.traces[i].actions.back();
    }
  } else {
    parallel_for(n, opt.jobs, [&](std::size_t i) {
      run.traces[i] = run_policy(policy, data[i], model);
      run.costs[i] = total_cost(run.traces[i]);
      run.oracle_costs[i] = offline_optimal(data[i], model).cost;
    });
  }
  return run;
}

inline EvalResult summarize(const std::string& name, const EvalRun& run,
                            const EvalOptions& opt) {
  const auto n = run.costs.size();
  if (n == 0) throw ValidationError("evaluate: empty dataset");
  EvalResult res;
  res.policy = name;
  res.per_instance_costs = run.costs;
  res.per_instance_oracle_costs = run.oracle_costs;
  const double median = percentile_nearest_rank(run.oracle_costs, 50.0);
  const double floor = opt.floor_factor * median;
  std::vector<double> ratios;
  res.per_instance_ratios.assign(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < n; ++i) {
    if (!(run.oracle_costs[i] > floor) || run.oracle_costs[i] <= 0.0) {
      ++res.excluded;
      continue;
    }
    res.per_instance_ratios[i] = run.costs[i] / run.oracle_costs[i];
    ratios.push_back(res.per_instance_ratios[i]);
  }
  if (ratios.empty())
    throw ZeroOptimalCost("evaluate: every instance has an oracle cost below the floor");
  res.avg_cost = stable_sum(run.costs) / static_cast<double>(n);
  res.oracle_avg_cost = stable_sum(run.oracle_costs) / static_cast<double>(n);
  res.normalized_avg_cost = res.avg_cost / res.oracle_avg_cost;
  res.empirical_cr = *std::max_element(ratios.begin(), ratios.end());
  for (double p : opt.percentiles) res.tail_ratios[p] = percentile_nearest_rank(ratios, p);
  return res;
}

inline EvalResult evaluate(const Policy& policy, const std::vector<ProblemInstance>& data,
                           const CostModel& model, const EvalOptions& opt = {}) {
  return summarize(policy.name, run_dataset(policy, data, model, opt), opt);
}

/// Online cost minus the cost of the L-constrained offline optimum.
inline double l_constrained_regret(const EpisodeTrace& trace, const ProblemInstance& inst,
                                   const CostModel& model, double L) {
  return total_cost(trace) - l_constrained_optimal(inst, model, L).cost;
}

/// "99" -> "p99", "99.9" -> "p99_9".
inline std::string percentile_column(double p) {
  std::string s = detail::fmt_real(p);
  std::replace(s.begin(), s.end(), '.', '_');
  return "p" + s;
}

inline void write_metrics_header(std::ostream& os, const std::vector<double>& percentiles) {
  os << "policy,avg_cost,norm_avg,emp_cr";
  for (double p : percentiles) os << ',' << percentile_column(p);
  os << ",excluded\n";
}

inline void write_metrics_row(std::ostream& os, const EvalResult& r,
                              const std::vector<double>& percentiles) {
  os << r.policy << ',' << detail::fmt_real(r.avg_cost) << ','
     << detail::fmt_real(r.normalized_avg_cost) << ',' << detail::fmt_real(r.empirical_cr);
  for (double p : percentiles) os << ',' << detail::fmt_real(r.tail_ratios.at(p));
  os << ',' << r.excluded << '\n';
}

inline void write_per_instance_csv(std::ostream& os, const EvalResult& r,
                                   const std::vector<ProblemInstance>& data) {
  os << "policy,instance,cost,oracle_cost,ratio\n";
  for (std::size_t i = 0; i < r.per_instance_costs.size(); ++i)
    os << r.policy << ',' << (i < data.size() ? data[i].id() : std::to_string(i)) << ','
       << detail::fmt_real(r.per_instance_costs[i]) << ','
       << detail::fmt_real(r.per_instance_oracle_costs[i]) << ','
       << detail::fmt_real(r.per_instance_ratios[i]) << '\n';
}

}  // namespace ecl2o

#endif  // ECL2O_EVAL_HPP
