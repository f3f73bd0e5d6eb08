#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rknn/dual.hpp"
#include "rknn/fields.hpp"
#include "rknn/jet.hpp"

namespace rknn {

/// A stage computation produced a NaN or infinity.
class StepDiverged : public std::runtime_error {
 public:
  explicit StepDiverged(std::size_t step_index)
      : std::runtime_error("integration diverged at step " + std::to_string(step_index)),
        step_index_(step_index) {}
  std::size_t step_index() const { return step_index_; }

 private:
  std::size_t step_index_;
};

/// Index of the stage coefficient a(i, j), 0 <= j < i < m, in packed row order.
constexpr std::size_t packed_index(std::size_t i, std::size_t j) { return i * (i - 1) / 2 + j; }
constexpr std::size_t packed_size(std::size_t stages) { return stages * (stages - 1) / 2; }

/// Explicit stage coefficients in Butcher form: lower-triangular a (packed by
/// rows, stage 0 has none) and combination weights b.
template <class S>
struct StageCoefficients {
  std::size_t stages = 0;
  std::vector<S> a;
  std::vector<S> b;

  const S& coeff(std::size_t i, std::size_t j) const { return a[packed_index(i, j)]; }
};

/// Trainable integrator: unconstrained stage coefficients plus logits z whose
/// softmax gives the combination weights, so the weights are positive and sum to one.
template <class S>
struct RknnParams {
  std::size_t stages = 0;
  std::vector<S> a;
  std::vector<S> logits;

  static std::size_t parameter_count(std::size_t m) { return packed_size(m) + m; }
  std::size_t parameter_count() const { return parameter_count(stages); }

  StageCoefficients<S> coefficients() const { return {stages, a, softmax(logits)}; }
};

/// Flat parameter vector layout: packed a followed by the logits.
RknnParams<double> unflatten(std::size_t stages, std::span<const double> flat);
std::vector<double> flatten(const RknnParams<double>& p);
/// Every parameter becomes a Dual seeded on its own flat index.
RknnParams<Dual> seeded(const RknnParams<double>& p);

/// Builds params whose weights equal `weights` (all must be positive).
RknnParams<double> params_from_weights(std::size_t stages, std::vector<double> a,
                                       std::span<const double> weights);

struct ClassicTableau {
  std::string label;
  int order = 0;
  StageCoefficients<double> coef;
};

/// Forward Euler, Heun's RK2, the three RK3 variants (rk3_1, rk3_2, rk3_3) and classic RK4.
const std::vector<ClassicTableau>& classic_tableaux();
/// Lookup by label; "rk3" aliases rk3_3 (Kutta's method). Throws std::invalid_argument.
const ClassicTableau& classic_tableau(const std::string& label);

namespace detail {

template <class C, class T, class TimesH>
std::vector<T> advance(const StageCoefficients<C>& c, const VectorField& field,
                       std::span<const T> y, TimesH&& times_h) {
  const std::size_t d = y.size();
  const std::size_t m = c.stages;
  std::vector<std::vector<T>> k(m, std::vector<T>(d));
  std::vector<T> arg(y.begin(), y.end());
  std::vector<T> fx(d);
  for (std::size_t i = 0; i < m; ++i) {
    if (i > 0) {
      arg.assign(y.begin(), y.end());
      for (std::size_t j = 0; j < i; ++j)
        for (std::size_t q = 0; q < d; ++q) arg[q] += c.coeff(i, j) * k[j][q];
    }
    field.apply<T>(arg, fx);
    for (std::size_t q = 0; q < d; ++q) k[i][q] = times_h(fx[q]);
  }
  std::vector<T> out(y.begin(), y.end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t q = 0; q < d; ++q) out[q] += c.b[i] * k[i][q];
  return out;
}

}  // namespace detail

/// One explicit step: k_1 = h f(y), k_i = h f(y + sum_{j<i} a_ij k_j), y + sum b_i k_i.
/// T is the state scalar (double, long double, Dual); C the coefficient scalar.
template <class C, class T>
std::vector<T> step(const StageCoefficients<C>& c, const VectorField& field, std::span<const T> y,
                    const T& h) {
  auto out = detail::advance(c, field, y, [&h](const T& x) { return x * h; });
  for (const auto& x : out)
    if (!is_finite(x)) throw StepDiverged(0);
  return out;
}

template <class C, class T>
std::vector<T> step(const StageCoefficients<C>& c, const VectorField& field,
                    const std::vector<T>& y, const T& h) {
  return step(c, field, std::span<const T>(y), h);
}

inline std::vector<double> step(const RknnParams<double>& p, const VectorField& field,
                                const std::vector<double>& y, double h) {
  return step(p.coefficients(), field, y, h);
}

inline std::vector<double> step(const ClassicTableau& t, const VectorField& field,
                                const std::vector<double>& y, double h) {
  return step(t.coef, field, y, h);
}

/// The one-step map h -> y_1(h) expanded about h = 0 to the given order.
template <class C>
Jet<C> step_jet(const StageCoefficients<C>& c, const VectorField& field,
                std::span<const double> y0, std::size_t order) {
  if (order < 1) throw std::invalid_argument("step_jet: order must be >= 1");
  std::vector<Series<C>> y;
  y.reserve(y0.size());
  for (double v : y0) y.emplace_back(order, C(v));
  auto out = detail::advance(c, field, std::span<const Series<C>>(y),
                             [](const Series<C>& x) { return x.shifted(); });
  return Jet<C>(std::move(out));
}

/// Iterates `step`; entry 0 of the trajectory is y0.
template <class C, class R>
std::vector<std::vector<R>> integrate(const StageCoefficients<C>& c, const VectorField& field,
                                      std::span<const R> y0, R h, std::size_t n_steps) {
  std::vector<std::vector<R>> traj;
  traj.reserve(n_steps + 1);
  traj.emplace_back(y0.begin(), y0.end());
  for (std::size_t n = 0; n < n_steps; ++n) {
    try {
      traj.push_back(step<C, R>(c, field, std::span<const R>(traj.back()), h));
    } catch (const StepDiverged&) {
      throw StepDiverged(n);
    }
  }
  return traj;
}

/// Only the final state of `integrate`, without keeping the trajectory.
template <class C, class R>
std::vector<R> integrate_final(const StageCoefficients<C>& c, const VectorField& field,
                               std::span<const R> y0, R h, std::size_t n_steps) {
  std::vector<R> y(y0.begin(), y0.end());
  for (std::size_t n = 0; n < n_steps; ++n) {
    try {
      y = step<C, R>(c, field, std::span<const R>(y), h);
    } catch (const StepDiverged&) {
      throw StepDiverged(n);
    }
  }
  return y;
}

/// A tableau as stored on disk. Learned integrators also carry their logits.
struct TableauRecord {
  std::string label;
  StageCoefficients<double> coef;
  std::optional<std::vector<double>> logits;

  static TableauRecord from_params(const RknnParams<double>& p, std::string label);
  static TableauRecord from_classic(const ClassicTableau& t);
  /// The trainable parameters, when logits are present.
  std::optional<RknnParams<double>> params() const;
};

/// Line-oriented `key = v1 v2 ...` text, every number at 17 significant digits.
void write_tableau(std::ostream& os, const TableauRecord& t);
std::string format_tableau(const TableauRecord& t);
/// Throws std::runtime_error with the offending line on malformed input.
TableauRecord parse_tableau(std::istream& is);
/// Reads a file, or resolves a classic label such as "rk3_1".
TableauRecord load_tableau(const std::string& path_or_label);

}  // namespace rknn
