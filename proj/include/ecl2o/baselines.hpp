#ifndef ECL2O_BASELINES_HPP
#define ECL2O_BASELINES_HPP

#include <utility>

#include "ecl2o/calibrator.hpp"
#include "ecl2o/mlopt.hpp"

namespace ecl2o {

// R-OBD, greedy and Follow-the-Prediction are calibrator parameterizations; see
// robd_params(), CalibratorParams::greedy() and CalibratorParams::follow_the_prediction().

enum class SwitchSide { Expert, ML };

/// Threshold switching between R-OBD and a standalone predictor.
///
/// This is a reimplementation: each step both candidates are computed from the same x_{t-1},
/// the played one charges its realized step cost to `cum_cost_active` and the other charges
/// its hypothetical step cost to `cum_cost_shadow`. Once the active side costs more than
/// gamma times the shadow, the roles flip, gamma is multiplied by `gamma_growth` and both
/// accumulators restart.
struct SwitchState {
  SwitchSide active = SwitchSide::ML;
  double gamma = 1.5;
  double gamma_growth = 2.0;
  double cum_cost_active = 0.0;
  double cum_cost_shadow = 0.0;
  int switches = 0;

  void validate() const {
    if (!(gamma > 1.0)) throw ValidationError("SwitchState: gamma must be > 1");
    if (!(gamma_growth > 1.0)) throw ValidationError("SwitchState: gamma_growth must be > 1");
  }
};

struct SwitchStep {
  Vec x;
  Vec ml_prediction;
  SwitchState state;
};

inline SwitchStep switch_step(SwitchState state, const CostModel& model, const Vec& y,
                              const Vec& x_prev, const PolicyWeights& pureml_weights,
                              const CalibratorParams& robd) {
  state.validate();
  Vec expert = calibrate_step(model, robd, y, x_prev, x_prev);
  Vec ml = forward(pureml_weights, y, x_prev).x_tilde;
  auto step_cost = [&](const Vec& x) {
    return model.hitting.value(x, y) + model.switching.value(x, x_prev);
  };
  const double expert_cost = step_cost(expert);
  const double ml_cost = step_cost(ml);
  const bool ml_active = state.active == SwitchSide::ML;
  Vec played = ml_active ? ml : expert;
  state.cum_cost_active += ml_active ? ml_cost : expert_cost;
  state.cum_cost_shadow += ml_active ? expert_cost : ml_cost;
  if (state.cum_cost_active > state.gamma * state.cum_cost_shadow) {
    state.active = ml_active ? SwitchSide::Expert : SwitchSide::ML;
    state.gamma *= state.gamma_growth;
    state.cum_cost_active = 0.0;
    state.cum_cost_shadow = 0.0;
    ++state.switches;
  }
  return {std::move(played), std::move(ml), state};
}

}  // namespace ecl2o

#endif  // ECL2O_BASELINES_HPP
