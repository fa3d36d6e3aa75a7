#ifndef ECL2O_ECL2O_HPP
#define ECL2O_ECL2O_HPP

#include "ecl2o/baselines.hpp"
#include "ecl2o/bounds.hpp"
#include "ecl2o/calibrator.hpp"
#include "ecl2o/core.hpp"
#include "ecl2o/costmodel.hpp"
#include "ecl2o/demand.hpp"
#include "ecl2o/eval.hpp"
#include "ecl2o/mlopt.hpp"
#include "ecl2o/oracle.hpp"
#include "ecl2o/parallel.hpp"
#include "ecl2o/trainer.hpp"

#endif  // ECL2O_ECL2O_HPP
