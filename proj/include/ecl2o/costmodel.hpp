#ifndef ECL2O_COSTMODEL_HPP
#define ECL2O_COSTMODEL_HPP

#include <functional>
#include <memory>
#include <random>
#include <string>

#include <json.hpp>

#include "ecl2o/core.hpp"

namespace ecl2o {

struct EigBounds {
  double alpha;  // 2 * lambda_min(Q)
  double beta;   // 2 * lambda_max(Q)
};

/// alpha = 2 lambda_min(Q), beta = 2 lambda_max(Q). Throws on non-PD or asymmetric Q.
inline EigBounds eig_bounds(const Mat& Q) {
  if (Q.rows() != Q.cols() || Q.rows() == 0) throw DimensionError("eig_bounds: Q must be square");
  if (!Q.allFinite()) throw ValidationError("eig_bounds: non-finite Q");
  const double scale = std::max(1.0, Q.cwiseAbs().maxCoeff());
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ValidationError("eig_bounds: Q is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(Q, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceError("eig_bounds: eigen-solve failed");
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) throw ValidationError("eig_bounds: Q is not positive definite");
  return {2.0 * lo, 2.0 * hi};
}

/// c(x, x') = (x - x')^T Q (x - x').
class SwitchingCost {
 public:
  SwitchingCost() : SwitchingCost(Mat::Constant(1, 1, 1.0)) {}

  explicit SwitchingCost(Mat Q) : Q_(std::move(Q)) {
    const auto b = eig_bounds(Q_);
    alpha_ = b.alpha;
    beta_ = b.beta;
  }

  /// Q = sigma * I_d.
  static SwitchingCost scalar(double sigma, Eigen::Index d = 1) {
    return SwitchingCost(sigma * Mat::Identity(d, d));
  }

  const Mat& Q() const { return Q_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  Eigen::Index dim() const { return Q_.rows(); }

  double value(const Vec& x, const Vec& x_prev) const {
    detail::require_dim(x, dim(), "switching_cost(x)");
    detail::require_dim(x_prev, dim(), "switching_cost(x_prev)");
    const Vec u = x - x_prev;
    return std::max(0.0, u.dot(Q_ * u));
  }

 private:
  Mat Q_;
  double alpha_ = 0.0;
  double beta_ = 0.0;
};

enum class HittingKind { QuadraticTracking, Custom };

/// Callbacks for a user-supplied m-strongly convex hitting cost.
struct CustomHitting {
  std::function<double(const Vec&, const Vec&)> value;
  std::function<Vec(const Vec&, const Vec&)> grad;
  std::function<Mat(const Vec&, const Vec&)> hessian;
};

class HittingCost {
 public:
  /// f(x, y) = 1/2 ||x - y||^2, m = 1.
  static HittingCost quadratic_tracking() { return HittingCost(); }

  static HittingCost custom(CustomHitting cb, double m) {
    if (!cb.value || !cb.grad || !cb.hessian)
      throw ValidationError("HittingCost: custom cost needs value, grad and hessian");
    if (!(m > 0.0)) throw ValidationError("HittingCost: strong-convexity constant must be > 0");
    HittingCost h;
    h.kind_ = HittingKind::Custom;
    h.m_ = m;
    h.custom_ = std::make_shared<const CustomHitting>(std::move(cb));
    return h;
  }

  HittingKind kind() const { return kind_; }
  bool is_quadratic_tracking() const { return kind_ == HittingKind::QuadraticTracking; }
  double m() const { return m_; }

  double value(const Vec& x, const Vec& y) const {
    if (is_quadratic_tracking()) {
      check_same(x, y);
      return 0.5 * (x - y).squaredNorm();
    }
    return custom_->value(x, y);
  }

  Vec grad(const Vec& x, const Vec& y) const {
    if (is_quadratic_tracking()) {
      check_same(x, y);
      return x - y;
    }
    return custom_->grad(x, y);
  }

  Mat hessian(const Vec& x, const Vec& y) const {
    if (is_quadratic_tracking()) {
      check_same(x, y);
      return Mat::Identity(x.size(), x.size());
    }
    return custom_->hessian(x, y);
  }

 private:
  HittingCost() = default;

  static void check_same(const Vec& x, const Vec& y) {
    if (x.size() != y.size())
      throw DimensionError("quadratic tracking cost needs dim(x) == dim(y), got " +
                           std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }

  HittingKind kind_ = HittingKind::QuadraticTracking;
  double m_ = 1.0;
  std::shared_ptr<const CustomHitting> custom_;
};

struct CostModel {
  HittingCost hitting = HittingCost::quadratic_tracking();
  SwitchingCost switching;

  Eigen::Index dim() const { return switching.dim(); }
  double m() const { return hitting.m(); }
  double alpha() const { return switching.alpha(); }
  double beta() const { return switching.beta(); }
  const Mat& Q() const { return switching.Q(); }

  /// The case-study model: quadratic tracking and c = (alpha/2)||.||^2.
  static CostModel tracking(double alpha, Eigen::Index d = 1) {
    return CostModel{HittingCost::quadratic_tracking(), SwitchingCost::scalar(alpha / 2.0, d)};
  }
};

inline double switching_cost(const CostModel& model, const Vec& x, const Vec& x_prev) {
  return model.switching.value(x, x_prev);
}

inline double hitting_cost(const CostModel& model, const Vec& x, const Vec& y) {
  detail::require_dim(x, model.dim(), "hitting_cost(x)");
  return model.hitting.value(x, y);
}

inline Vec hitting_grad(const CostModel& model, const Vec& x, const Vec& y) {
  detail::require_dim(x, model.dim(), "hitting_grad(x)");
  return model.hitting.grad(x, y);
}

inline Mat hitting_hessian(const CostModel& model, const Vec& x, const Vec& y) {
  detail::require_dim(x, model.dim(), "hitting_hessian(x)");
  return model.hitting.hessian(x, y);
}

/// Probabilistic check of the declared strong-convexity constant and non-negativity.
/// `sample_y` draws contexts; actions are drawn from N(0, spread^2 I).
inline bool check_strong_convexity(const CostModel& model,
                                   const std::function<Vec(std::mt19937_64&)>& sample_y,
                                   int pairs, std::uint64_t seed, double spread = 2.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, spread);
  const auto d = model.dim();
  const double m = model.m();
  for (int i = 0; i < pairs; ++i) {
    const Vec y = sample_y(rng);
    Vec a(d), b(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      a[k] = n(rng);
      b[k] = n(rng);
    }
    const double fa = model.hitting.value(a, y);
    const double fb = model.hitting.value(b, y);
    if (fa < 0.0 || fb < 0.0) return false;
    const double rhs = fa + model.hitting.grad(a, y).dot(b - a) + 0.5 * m * (b - a).squaredNorm();
    if (fb < rhs - 1e-9 * std::max(1.0, std::abs(fb))) return false;
  }
  return true;
}

/// Accepts {"hitting": {"kind": "quadratic_tracking"}, "switching": {"q_scalar": s, "dim": d}}
/// or {"switching": {"matrix": [[...], ...]}}.
inline CostModel cost_model_from_json(const nlohmann::json& j) {
  CostModel model;
  if (j.contains("hitting")) {
    const auto kind = j.at("hitting").value("kind", std::string("quadratic_tracking"));
    if (kind != "quadratic_tracking")
      throw ValidationError("cost model config: unsupported hitting kind '" + kind + "'");
  }
  if (j.contains("switching")) {
    const auto& s = j.at("switching");
    if (s.contains("matrix")) {
      const auto& rows = s.at("matrix");
      const auto d = static_cast<Eigen::Index>(rows.size());
      Mat Q(d, d);
      for (Eigen::Index r = 0; r < d; ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != d)
          throw DimensionError("cost model config: switching matrix is not square");
        for (Eigen::Index c = 0; c < d; ++c) Q(r, c) = rows[r][c].get<double>();
      }
      model.switching = SwitchingCost(Q);
    } else if (s.contains("q_scalar")) {
      model.switching =
          SwitchingCost::scalar(s.at("q_scalar").get<double>(), s.value("dim", Eigen::Index{1}));
    } else {
      throw ValidationError("cost model config: switching needs 'q_scalar' or 'matrix'");
    }
  }
  return model;
}

inline nlohmann::json cost_model_to_json(const CostModel& model) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < model.dim(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < model.dim(); ++c) row.push_back(model.Q()(r, c));
    rows.push_back(row);
  }
  return {{"hitting", {{"kind", model.hitting.is_quadratic_tracking() ? "quadratic_tracking"
                                                                        : "custom"}}},
          {"switching", {{"matrix", rows}}}};
}

}  // namespace ecl2o

#endif  // ECL2O_COSTMODEL_HPP
