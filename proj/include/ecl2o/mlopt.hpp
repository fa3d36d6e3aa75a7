#ifndef ECL2O_MLOPT_HPP
#define ECL2O_MLOPT_HPP

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ecl2o/core.hpp"

namespace ecl2o {

/// Feed-forward relu network mapping (y_t, x_{t-1}) to a predicted action.
struct NetArchitecture {
  Eigen::Index context_dim = 1;
  Eigen::Index action_dim = 1;
  std::vector<Eigen::Index> hidden{10, 10, 10};
  // Prediction = output_scale * network_output + output_offset.
  double output_scale = 1.0;
  double output_offset = 0.0;

  Eigen::Index input_dim() const { return context_dim + action_dim; }
  Eigen::Index output_dim() const { return action_dim; }
  std::size_t num_layers() const { return hidden.size() + 1; }

  void validate() const {
    if (context_dim < 1 || action_dim < 1)
      throw ValidationError("NetArchitecture: dimensions must be >= 1");
    for (auto w : hidden)
      if (w < 1) throw ValidationError("NetArchitecture: hidden widths must be >= 1");
    if (!std::isfinite(output_scale) || !std::isfinite(output_offset))
      throw ValidationError("NetArchitecture: non-finite output scaling");
  }

  bool operator==(const NetArchitecture&) const = default;
};

struct DenseLayer {
  Mat W;  // out x in
  Vec b;
};

struct PolicyWeights {
  NetArchitecture arch;
  std::uint64_t seed = 0;
  std::vector<DenseLayer> layers;

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
    return n;
  }

  /// Row-major layer matrices followed by biases, layer by layer.
  Vec flatten() const {
    Vec out(static_cast<Eigen::Index>(num_params()));
    Eigen::Index k = 0;
    for (const auto& l : layers) {
      for (Eigen::Index r = 0; r < l.W.rows(); ++r)
        for (Eigen::Index c = 0; c < l.W.cols(); ++c) out[k++] = l.W(r, c);
      for (Eigen::Index r = 0; r < l.b.size(); ++r) out[k++] = l.b[r];
    }
    return out;
  }

  void assign(const Vec& flat) {
    if (flat.size() != static_cast<Eigen::Index>(num_params()))
      throw DimensionError("PolicyWeights::assign: size mismatch");
    Eigen::Index k = 0;
    for (auto& l : layers) {
      for (Eigen::Index r = 0; r < l.W.rows(); ++r)
        for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = flat[k++];
      for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b[r] = flat[k++];
    }
  }

  /// Same shapes, all zeros (used as a gradient accumulator).
  PolicyWeights zeros_like() const {
    PolicyWeights z{arch, seed, layers};
    for (auto& l : z.layers) {
      l.W.setZero();
      l.b.setZero();
    }
    return z;
  }

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.W.allFinite() || !l.b.allFinite()) return false;
    return true;
  }

  void validate() const {
    arch.validate();
    if (layers.size() != arch.num_layers())
      throw DimensionError("PolicyWeights: layer count does not match architecture");
    Eigen::Index in = arch.input_dim();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Eigen::Index out = i + 1 < layers.size() ? arch.hidden[i] : arch.output_dim();
      if (layers[i].W.rows() != out || layers[i].W.cols() != in || layers[i].b.size() != out)
        throw DimensionError("PolicyWeights: layer " + std::to_string(i) + " has wrong shape");
      in = out;
    }
    if (!all_finite()) throw ValidationError("PolicyWeights: non-finite entries");
  }
};

/// He-normal weights (std sqrt(2 / fan_in)), zero biases; deterministic in the seed.
inline PolicyWeights init_weights(const NetArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  PolicyWeights w;
  w.arch = arch;
  w.seed = seed;
  std::mt19937_64 rng(seed);
  Eigen::Index in = arch.input_dim();
  for (std::size_t i = 0; i < arch.num_layers(); ++i) {
    const Eigen::Index out = i < arch.hidden.size() ? arch.hidden[i] : arch.output_dim();
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    DenseLayer l{Mat(out, in), Vec::Zero(out)};
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) l.W(r, c) = n(rng);
    w.layers.push_back(std::move(l));
    in = out;
  }
  return w;
}

/// Activations recorded by `forward` for the reverse pass.
struct ForwardTape {
  std::vector<Vec> inputs;          // input to each layer
  std::vector<Vec> preactivations;  // W h + b per layer
};

struct ForwardResult {
  Vec x_tilde;
  ForwardTape tape;
};

inline ForwardResult forward(const PolicyWeights& w, const Vec& y, const Vec& x_prev) {
  detail::require_dim(y, w.arch.context_dim, "forward(y)");
  detail::require_dim(x_prev, w.arch.action_dim, "forward(x_prev)");
  ForwardResult res;
  Vec h(w.arch.input_dim());
  h << y, x_prev;
  const auto L = w.layers.size();
  res.tape.inputs.reserve(L);
  res.tape.preactivations.reserve(L);
  for (std::size_t i = 0; i < L; ++i) {
    Vec z = w.layers[i].W * h + w.layers[i].b;
    res.tape.inputs.push_back(std::move(h));
    h = i + 1 < L ? Vec(z.cwiseMax(0.0)) : z;
    res.tape.preactivations.push_back(std::move(z));
  }
  res.x_tilde = w.arch.output_scale * h.array() + w.arch.output_offset;
  if (!res.x_tilde.allFinite()) throw ValidationError("forward: non-finite output");
  return res;
}

struct BackwardResult {
  PolicyWeights grad_weights;
  Vec grad_y;
  Vec grad_x_prev;
};

/// Accumulates the gradient of <grad_out, x_tilde> into `grad_acc` and returns the input
/// gradients. relu'(0) = 0.
inline std::pair<Vec, Vec> backward_accumulate(const PolicyWeights& w, const ForwardTape& tape,
                                               const Vec& grad_out, PolicyWeights& grad_acc) {
  detail::require_dim(grad_out, w.arch.output_dim(), "backward(grad_out)");
  const auto L = w.layers.size();
  if (tape.inputs.size() != L || tape.preactivations.size() != L || grad_acc.layers.size() != L)
    throw DimensionError("backward: tape does not match the network");
  Vec delta = w.arch.output_scale * grad_out;
  for (std::size_t i = L; i-- > 0;) {
    if (i + 1 < L) delta.array() *= (tape.preactivations[i].array() > 0.0).cast<double>();
    grad_acc.layers[i].W.noalias() += delta * tape.inputs[i].transpose();
    grad_acc.layers[i].b += delta;
    delta = w.layers[i].W.transpose() * delta;
  }
  const auto q = w.arch.context_dim;
  return {delta.head(q), delta.tail(w.arch.action_dim)};
}

inline BackwardResult backward(const PolicyWeights& w, const ForwardTape& tape,
                               const Vec& grad_out) {
  BackwardResult res{w.zeros_like(), {}, {}};
  auto [gy, gx] = backward_accumulate(w, tape, grad_out, res.grad_weights);
  res.grad_y = std::move(gy);
  res.grad_x_prev = std::move(gx);
  return res;
}

inline void save_weights(std::ostream& os, const PolicyWeights& w) {
  w.validate();
  os << "ecl2o-weights 1\n";
  os << "arch " << w.arch.context_dim << ' ' << w.arch.action_dim << ' ' << w.arch.hidden.size();
  for (auto h : w.arch.hidden) os << ' ' << h;
  os << '\n';
  os << "output " << detail::fmt_real(w.arch.output_scale) << ' '
     << detail::fmt_real(w.arch.output_offset) << '\n';
  os << "seed " << w.seed << '\n';
  for (const auto& l : w.layers) {
    os << "layer " << l.W.rows() << ' ' << l.W.cols() << '\n';
    for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.W.cols(); ++c)
        os << (c ? " " : "") << detail::fmt_real(l.W(r, c));
      os << '\n';
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) os << (r ? " " : "") << detail::fmt_real(l.b[r]);
    os << '\n';
  }
}

inline PolicyWeights load_weights(std::istream& is) {
  auto expect = [&](const std::string& tok) {
    std::string got;
    if (!(is >> got) || got != tok)
      throw ValidationError("weights file: expected '" + tok + "', got '" + got + "'");
  };
  auto read_real = [&]() {
    std::string s;
    if (!(is >> s)) throw ValidationError("weights file: truncated");
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ValidationError("weights file: bad number '" + s + "'");
    return v;
  };
  auto read_index = [&]() {
    long long v = 0;
    if (!(is >> v)) throw ValidationError("weights file: truncated");
    return static_cast<Eigen::Index>(v);
  };
  expect("ecl2o-weights");
  if (read_index() != 1) throw ValidationError("weights file: unsupported version");
  PolicyWeights w;
  expect("arch");
  w.arch.context_dim = read_index();
  w.arch.action_dim = read_index();
  const auto nh = read_index();
  w.arch.hidden.clear();
  for (Eigen::Index i = 0; i < nh; ++i) w.arch.hidden.push_back(read_index());
  expect("output");
  w.arch.output_scale = read_real();
  w.arch.output_offset = read_real();
  expect("seed");
  if (!(is >> w.seed)) throw ValidationError("weights file: bad seed");
  for (std::size_t i = 0; i < w.arch.num_layers(); ++i) {
    expect("layer");
    const auto rows = read_index();
    const auto cols = read_index();
    DenseLayer l{Mat(rows, cols), Vec(rows)};
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) l.W(r, c) = read_real();
    for (Eigen::Index r = 0; r < rows; ++r) l.b[r] = read_real();
    w.layers.push_back(std::move(l));
  }
  w.validate();
  return w;
}

inline void save_weights_file(const std::string& path, const PolicyWeights& w) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  save_weights(os, w);
}

inline PolicyWeights load_weights_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open weights file '" + path + "'");
  return load_weights(is);
}

}  // namespace ecl2o

#endif  // ECL2O_MLOPT_HPP
