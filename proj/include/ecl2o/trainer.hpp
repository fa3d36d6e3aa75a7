#ifndef ECL2O_TRAINER_HPP
#define ECL2O_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ecl2o/calibrator.hpp"
#include "ecl2o/core.hpp"
#include "ecl2o/mlopt.hpp"
#include "ecl2o/oracle.hpp"
#include "ecl2o/parallel.hpp"

namespace ecl2o {

/// An episode together with its cached offline optimum.
struct TrainingInstance {
  ProblemInstance instance;
  OracleSolution oracle;
};

inline std::vector<TrainingInstance> attach_oracles(const std::vector<ProblemInstance>& insts,
                                                    const CostModel& model, unsigned jobs = 1) {
  std::vector<TrainingInstance> out(insts.size());
  parallel_for(insts.size(), jobs, [&](std::size_t i) {
    out[i] = {insts[i], offline_optimal(insts[i], model)};
  });
  return out;
}

/// Non-finite loss, gradient or network output during training.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int epoch, const std::string& detail)
      : Error("training diverged at epoch " + std::to_string(epoch) +
              (detail.empty() ? std::string() : ": " + detail)),
        epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Removes episodes whose offline optimum costs at most `floor`; their ratio-based losses are
/// undefined. Returns the number removed.
inline std::size_t drop_zero_cost(std::vector<TrainingInstance>& set, double floor = 1e-12) {
  const auto before = set.size();
  std::erase_if(set, [&](const TrainingInstance& ti) { return !(ti.oracle.cost > floor); });
  return before - set.size();
}

struct OptimizerConfig {
  int epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  NetArchitecture arch{};
};

struct TrainConfig {
  double mu = 0.6;
  double rho_bar = 0.1;
  double theta = 0.5;
  double lambda1 = 1.0;
  std::optional<ActionBounds> bounds;
  OptimizerConfig optim;

  void validate() const {
    if (!(mu >= 0.0 && mu <= 1.0)) throw ValidationError("TrainConfig: mu must lie in [0, 1]");
    if (!(rho_bar >= 0.0)) throw ValidationError("TrainConfig: rho_bar must be >= 0");
    if (!(theta >= 0.0)) throw ValidationError("TrainConfig: theta must be >= 0");
  }
};

struct PureMLConfig {
  double kappa = 0.0;
  OptimizerConfig optim;

  void validate() const {
    if (!(kappa >= 0.0 && kappa <= 1.0))
      throw ValidationError("PureMLConfig: kappa must lie in [0, 1]");
  }
};

/// relu(rho - rho_bar), rho measured against the offline optimum.
inline double prediction_loss(const std::vector<Vec>& predictions, const OracleSolution& oracle,
                              double rho_bar) {
  return std::max(0.0, prediction_error_rho(predictions, oracle) - rho_bar);
}

struct EpisodeLoss {
  double loss = 0.0;
  double rho = 0.0;
  double cost = 0.0;
  EpisodeTrace trace;
};

namespace detail {

struct Rollout {
  EpisodeTrace trace;
  std::vector<ForwardTape> tapes;
};

inline Rollout rollout_calibrated(const PolicyWeights& w, const ProblemInstance& inst,
                                  const CostModel& model, const CalibratorParams& params,
                                  const std::optional<ActionBounds>& bounds, bool keep_tapes) {
  Rollout r;
  const auto T = inst.horizon();
  r.trace.predictions.reserve(T);
  r.trace.actions.reserve(T);
  if (keep_tapes) r.tapes.reserve(T);
  Vec prev = inst.x0();
  for (std::size_t t = 0; t < T; ++t) {
    const Vec& y = inst.context(t);
    auto fwd = forward(w, y, prev);
    Vec x = calibrate_step(model, params, y, prev, fwd.x_tilde, hitting_minimizer(model, y), bounds);
    r.trace.hitting_costs.push_back(model.hitting.value(x, y));
    r.trace.switching_costs.push_back(model.switching.value(x, prev));
    r.trace.predictions.push_back(std::move(fwd.x_tilde));
    if (keep_tapes) r.tapes.push_back(std::move(fwd.tape));
    prev = x;
    r.trace.actions.push_back(std::move(x));
  }
  return r;
}

inline Rollout rollout_pure(const PolicyWeights& w, const ProblemInstance& inst,
                            const CostModel& model, bool keep_tapes) {
  Rollout r;
  Vec prev = inst.x0();
  for (std::size_t t = 0; t < inst.horizon(); ++t) {
    const Vec& y = inst.context(t);
    auto fwd = forward(w, y, prev);
    r.trace.hitting_costs.push_back(model.hitting.value(fwd.x_tilde, y));
    r.trace.switching_costs.push_back(model.switching.value(fwd.x_tilde, prev));
    r.trace.predictions.push_back(fwd.x_tilde);
    r.trace.actions.push_back(fwd.x_tilde);
    if (keep_tapes) r.tapes.push_back(std::move(fwd.tape));
    prev = std::move(fwd.x_tilde);
  }
  return r;
}

/// d cost / d x_t for the realized trajectory (hitting at t, switching at t and t+1).
inline std::vector<Vec> cost_adjoints(const ProblemInstance& inst, const CostModel& model,
                                      const std::vector<Vec>& xs, double scale) {
  auto g = trajectory_gradient(inst, model, xs, 1.0);
  for (auto& v : g) v *= scale;
  return g;
}

}  // namespace detail

/// Rolls the prediction -> calibration pipeline and returns mu * prediction_loss + (1 - mu) * cost.
inline EpisodeLoss episode_loss(const PolicyWeights& w, const ProblemInstance& inst,
                                const CostModel& model, const CalibratorParams& params, double mu,
                                double rho_bar, const OracleSolution& oracle,
                                const std::optional<ActionBounds>& bounds = std::nullopt) {
  auto r = detail::rollout_calibrated(w, inst, model, params, bounds, false);
  EpisodeLoss out;
  out.cost = total_cost(r.trace);
  out.rho = prediction_error_rho(r.trace.predictions, oracle);
  out.loss = mu * std::max(0.0, out.rho - rho_bar) + (1.0 - mu) * out.cost;
  out.trace = std::move(r.trace);
  return out;
}

struct EpisodeGradient {
  PolicyWeights grad;
  double loss = 0.0;
  double rho = 0.0;
  double cost = 0.0;
};

/// Reverse-mode gradient of `episode_loss` through the calibrator's implicit Jacobians and
/// the recurrence x_{t-1} -> (network, calibrator) -> x_t.
inline EpisodeGradient grad_episode(const PolicyWeights& w, const ProblemInstance& inst,
                                    const CostModel& model, const CalibratorParams& params,
                                    double mu, double rho_bar, const OracleSolution& oracle,
                                    const std::optional<ActionBounds>& bounds = std::nullopt) {
  auto r = detail::rollout_calibrated(w, inst, model, params, bounds, true);
  const auto& xs = r.trace.actions;
  const auto& preds = r.trace.predictions;
  const auto T = inst.horizon();
  if (bounds) {
    for (std::size_t t = 0; t < T; ++t)
      if (!bounds->interior(xs[t]))
        throw Error("grad_episode: calibrated action at step " + std::to_string(t + 1) +
                    " lies on the action-set boundary; implicit Jacobians are undefined there");
  }

  EpisodeGradient out{w.zeros_like(), 0.0, 0.0, total_cost(r.trace)};
  out.rho = prediction_error_rho(preds, oracle);
  out.loss = mu * std::max(0.0, out.rho - rho_bar) + (1.0 - mu) * out.cost;
  const double pred_coef = out.rho > rho_bar ? mu / oracle.cost : 0.0;

  auto adj = detail::cost_adjoints(inst, model, xs, 1.0 - mu);
  for (std::size_t t = T; t-- > 0;) {
    const Vec& prev = t == 0 ? inst.x0() : xs[t - 1];
    const auto J = step_jacobians(model, params, inst.context(t), prev, preds[t], xs[t]);
    Vec pred_adj = J.pred.transpose() * adj[t];
    if (pred_coef != 0.0) pred_adj += pred_coef * 2.0 * (preds[t] - oracle.actions[t]);
    auto [gy, gx] = backward_accumulate(w, r.tapes[t], pred_adj, out.grad);
    if (t > 0) adj[t - 1] += J.prev.transpose() * adj[t] + gx;
  }
  return out;
}

/// Standalone optimizer loss kappa * cost / cost* + (1 - kappa) * cost.
inline EpisodeLoss pureml_episode_loss(const PolicyWeights& w, const ProblemInstance& inst,
                                       const CostModel& model, double kappa,
                                       const OracleSolution& oracle) {
  auto r = detail::rollout_pure(w, inst, model, false);
  EpisodeLoss out;
  out.cost = total_cost(r.trace);
  out.rho = prediction_error_rho(r.trace.predictions, oracle);
  out.loss = kappa * out.cost / oracle.cost + (1.0 - kappa) * out.cost;
  out.trace = std::move(r.trace);
  return out;
}

inline EpisodeGradient grad_pureml_episode(const PolicyWeights& w, const ProblemInstance& inst,
                                           const CostModel& model, double kappa,
                                           const OracleSolution& oracle) {
  auto r = detail::rollout_pure(w, inst, model, true);
  const auto T = inst.horizon();
  EpisodeGradient out{w.zeros_like(), 0.0, 0.0, total_cost(r.trace)};
  out.rho = prediction_error_rho(r.trace.predictions, oracle);
  const double scale = kappa / oracle.cost + (1.0 - kappa);
  out.loss = scale * out.cost;
  auto adj = detail::cost_adjoints(inst, model, r.trace.actions, scale);
  for (std::size_t t = T; t-- > 0;) {
    auto [gy, gx] = backward_accumulate(w, r.tapes[t], adj[t], out.grad);
    if (t > 0) adj[t - 1] += gx;
  }
  return out;
}

struct AdamState {
  Vec m;
  Vec v;
  long step = 0;

  explicit AdamState(Eigen::Index n = 0) : m(Vec::Zero(n)), v(Vec::Zero(n)) {}
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(AdamState& state, Vec& params, const Vec& grad, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (grad.size() != params.size() || state.m.size() != params.size())
    throw DimensionError("adam_step: size mismatch");
  ++state.step;
  state.m = beta1 * state.m + (1.0 - beta1) * grad;
  state.v = beta2 * state.v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

struct TrainLogRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_avg_cost = 0.0;
  double val_mean_rho = 0.0;
};

struct TrainResult {
  PolicyWeights weights;
  std::vector<TrainLogRow> log;
  int best_epoch = 0;
};

inline void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& log) {
  os << "epoch,train_loss,val_loss,val_avg_cost,val_mean_rho\n";
  for (const auto& r : log)
    os << r.epoch << ',' << detail::fmt_real(r.train_loss) << ',' << detail::fmt_real(r.val_loss)
       << ',' << detail::fmt_real(r.val_avg_cost) << ',' << detail::fmt_real(r.val_mean_rho)
       << '\n';
}

namespace detail {

using GradFn = std::function<EpisodeGradient(const PolicyWeights&, const TrainingInstance&)>;
using LossFn = std::function<EpisodeLoss(const PolicyWeights&, const TrainingInstance&)>;

/// Mini-batch Adam over episodes; keeps the weights with the lowest validation loss
/// (training loss when there is no validation set).
inline TrainResult run_training(const std::vector<TrainingInstance>& train,
                                const std::vector<TrainingInstance>& val,
                                const OptimizerConfig& cfg, const GradFn& grad_fn,
                                const LossFn& loss_fn,
                                const std::function<void(const TrainLogRow&)>& on_epoch) {
  if (train.empty()) throw ValidationError("training: empty training set");
  if (cfg.batch_size == 0) throw ValidationError("training: batch_size must be >= 1");
  TrainResult res;
  PolicyWeights w = init_weights(cfg.arch, cfg.seed);
  Vec params = w.flatten();
  AdamState adam(params.size());
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  auto evaluate = [&](const std::vector<TrainingInstance>& set, TrainLogRow& row) {
    std::vector<EpisodeLoss> losses(set.size());
    parallel_for(set.size(), cfg.jobs, [&](std::size_t i) { losses[i] = loss_fn(w, set[i]); });
    double l = 0.0, c = 0.0, rho = 0.0;
    for (const auto& e : losses) {
      l += e.loss;
      c += e.cost;
      rho += e.rho;
    }
    const double n = static_cast<double>(set.size());
    row.val_loss = l / n;
    row.val_avg_cost = c / n;
    row.val_mean_rho = rho / n;
  };

  const auto& select_set = val.empty() ? train : val;
  double best = std::numeric_limits<double>::infinity();
  {
    TrainLogRow row{0, 0.0};
    evaluate(select_set, row);
    row.train_loss = row.val_loss;
    if (!val.empty()) {
      TrainLogRow tr;
      evaluate(train, tr);
      row.train_loss = tr.val_loss;
    }
    best = row.val_loss;
    res.weights = w;
    res.best_epoch = 0;
    res.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    TrainLogRow row;
    row.epoch = epoch;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
        std::vector<EpisodeGradient> grads(stop - start);
        parallel_for(grads.size(), cfg.jobs,
                     [&](std::size_t i) { grads[i] = grad_fn(w, train[order[start + i]]); });
        Vec g = Vec::Zero(params.size());
        for (const auto& eg : grads) {
          g += eg.grad.flatten();
          epoch_loss += eg.loss;
        }
        g /= static_cast<double>(grads.size());
        if (!g.allFinite() || !std::isfinite(epoch_loss))
          throw TrainingDiverged(epoch, "non-finite loss or gradient");
        adam_step(adam, params, g, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
        if (!params.allFinite()) throw TrainingDiverged(epoch, "non-finite weights");
        w.assign(params);
      }
      row.train_loss = epoch_loss / static_cast<double>(train.size());
      evaluate(select_set, row);
    } catch (const TrainingDiverged&) {
      throw;
    } catch (const ValidationError& e) {
      // Raised by the forward pass on non-finite outputs.
      throw TrainingDiverged(epoch, e.what());
    }
    if (!std::isfinite(row.val_loss)) throw TrainingDiverged(epoch, "non-finite validation loss");
    if (row.val_loss < best) {
      best = row.val_loss;
      res.weights = w;
      res.best_epoch = epoch;
    }
    res.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return res;
}

}  // namespace detail

/// Trains the predictor end to end through the calibrator (trust theta, bound-optimal lambda2).
inline TrainResult train_ecl2o(const std::vector<TrainingInstance>& train,
                               const std::vector<TrainingInstance>& val, const CostModel& model,
                               const TrainConfig& cfg,
                               const std::function<void(const TrainLogRow&)>& on_epoch = {}) {
  cfg.validate();
  const auto params = params_for_trust(model, cfg.theta, cfg.lambda1);
  auto grad_fn = [&](const PolicyWeights& w, const TrainingInstance& ti) {
    return grad_episode(w, ti.instance, model, params, cfg.mu, cfg.rho_bar, ti.oracle, cfg.bounds);
  };
  auto loss_fn = [&](const PolicyWeights& w, const TrainingInstance& ti) {
    return episode_loss(w, ti.instance, model, params, cfg.mu, cfg.rho_bar, ti.oracle, cfg.bounds);
  };
  return detail::run_training(train, val, cfg.optim, grad_fn, loss_fn, on_epoch);
}

/// Trains the standalone predictor whose outputs are played directly.
inline TrainResult train_pureml(const std::vector<TrainingInstance>& train,
                                const std::vector<TrainingInstance>& val, const CostModel& model,
                                const PureMLConfig& cfg,
                                const std::function<void(const TrainLogRow&)>& on_epoch = {}) {
  cfg.validate();
  auto grad_fn = [&](const PolicyWeights& w, const TrainingInstance& ti) {
    return grad_pureml_episode(w, ti.instance, model, cfg.kappa, ti.oracle);
  };
  auto loss_fn = [&](const PolicyWeights& w, const TrainingInstance& ti) {
    return pureml_episode_loss(w, ti.instance, model, cfg.kappa, ti.oracle);
  };
  return detail::run_training(train, val, cfg.optim, grad_fn, loss_fn, on_epoch);
}

}  // namespace ecl2o

#endif  // ECL2O_TRAINER_HPP
