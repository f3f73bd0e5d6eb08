#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rknn/jet.hpp"

namespace rknn {

enum class FieldKind { linear_1d, square_1d, van_der_pol, brusselator, linear_nd, nonlinear_nd };

std::string_view to_string(FieldKind kind);
/// Accepts the names produced by to_string ("linear", "square", ...).
std::optional<FieldKind> parse_field_kind(std::string_view name);

/// A polynomial autonomous vector field f: R^d -> R^d.
///
/// Parameters by kind:
///   linear_1d     f(y) = -a y                         params = {a}, a > 0
///   square_1d     f(y) = -a y^2                       params = {a}, a > 0
///   van_der_pol   f(u,v) = (v, a(1-u^2)v - u)         params = {a}
///   brusselator   f(u,v) = (1-(b+1)u+a u^2 v, b u - a u^2 v)   params = {a, b}, a, b > 0
///   linear_nd     f(y) = A y                          params = A row-major (d*d)
///   nonlinear_nd  f(y)_i = B_ii y_i^2                 params = diag(B) (d)
class VectorField {
 public:
  static VectorField linear_1d(double a);
  static VectorField square_1d(double a);
  static VectorField van_der_pol(double a);
  static VectorField brusselator(double a, double b);
  static VectorField linear_nd(std::size_t dim, std::vector<double> matrix);
  static VectorField nonlinear_nd(std::vector<double> diagonal);
  /// Dispatches to the named constructors above; validates the parameters.
  static VectorField make(FieldKind kind, std::size_t dim, std::vector<double> params);

  FieldKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> params() const { return params_; }

  /// Writes f(y) into out; T is any ring over the reals (double, Dual, Series<...>).
  template <class T>
  void apply(std::span<const T> y, std::span<T> out) const;

  bool operator==(const VectorField&) const = default;

 private:
  VectorField(FieldKind kind, std::size_t dim, std::vector<double> params)
      : kind_(kind), dim_(dim), params_(std::move(params)) {}

  FieldKind kind_ = FieldKind::linear_1d;
  std::size_t dim_ = 1;
  std::vector<double> params_;
};

template <class T>
void VectorField::apply(std::span<const T> y, std::span<T> out) const {
  if (y.size() != dim_ || out.size() != dim_)
    throw std::invalid_argument("VectorField: state dimension does not match field");
  const auto& p = params_;
  switch (kind_) {
    case FieldKind::linear_1d:
      out[0] = -p[0] * y[0];
      break;
    case FieldKind::square_1d:
      out[0] = -p[0] * (y[0] * y[0]);
      break;
    case FieldKind::van_der_pol: {
      const T& u = y[0];
      const T& v = y[1];
      out[0] = v;
      out[1] = p[0] * (v - u * u * v) - u;
      break;
    }
    case FieldKind::brusselator: {
      const double a = p[0];
      const double b = p[1];
      const T& u = y[0];
      const T& v = y[1];
      T u2v = u * u * v;
      out[0] = (a * u2v - (b + 1.0) * u) + 1.0;
      out[1] = b * u - a * u2v;
      break;
    }
    case FieldKind::linear_nd:
      for (std::size_t i = 0; i < dim_; ++i) {
        const double* row = p.data() + i * dim_;
        T acc = row[0] * y[0];
        for (std::size_t j = 1; j < dim_; ++j) acc += row[j] * y[j];
        out[i] = std::move(acc);
      }
      break;
    case FieldKind::nonlinear_nd:
      for (std::size_t i = 0; i < dim_; ++i) out[i] = p[i] * (y[i] * y[i]);
      break;
  }
}

/// f(y) on plain vectors.
template <class R>
std::vector<R> eval(const VectorField& field, std::span<const R> y) {
  std::vector<R> out(y.size());
  field.apply<R>(y, out);
  return out;
}

inline std::vector<double> eval(const VectorField& field, const std::vector<double>& y) {
  return eval<double>(field, std::span<const double>(y));
}

/// f applied to a jet, i.e. the power series of f(Y(h)) truncated at Y's order.
template <class S>
Jet<S> eval_jet(const VectorField& field, const Jet<S>& y) {
  Jet<S> out(y.order(), y.dim());
  field.apply<Series<S>>(y.components(), out.components());
  return out;
}

/// F = (f, y0).
struct TaskInstance {
  VectorField field;
  std::vector<double> y0;

  TaskInstance(VectorField f, std::vector<double> initial);
  bool operator==(const TaskInstance&) const = default;
};

struct UniformRange {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const UniformRange&) const = default;
};

/// A distribution over task instances: independent uniform draws for every
/// field parameter and every initial-condition component.
///
/// `param_ranges` by kind:
///   linear_1d, square_1d, van_der_pol: {a}
///   brusselator: {a, b}
///   linear_nd: {entry}, shared by all d*d matrix entries
///   nonlinear_nd: one range per diagonal entry (length d)
struct TaskFamily {
  FieldKind kind = FieldKind::linear_1d;
  std::size_t dim = 1;
  std::vector<UniformRange> param_ranges;
  std::vector<UniformRange> y0_box;

  /// Throws std::invalid_argument naming the offending range.
  void validate() const;
  bool operator==(const TaskFamily&) const = default;
};

/// Presets reproducing the task distributions used in the experiments.
namespace families {
TaskFamily linear();       // a ~ U(1,5), y0 ~ U(-5,5)
TaskFamily square();       // a ~ U(0.1,0.5), y0 ~ U(1,3)
TaskFamily van_der_pol();  // a ~ U(1,2), u0 ~ U(-4,-3), v0 ~ U(0,2)
TaskFamily brusselator();  // a = 1, b ~ U(0.5,2), u0 ~ U(1.5,3), v0 ~ U(2,3)
TaskFamily linear_nd(std::size_t dim);     // A_ij ~ U(-2/sqrt d, -1/sqrt d), y0 ~ U(-3,3)
TaskFamily nonlinear_nd(std::size_t dim);  // B_ii ~ U(-2+0.05(i-1), -2+0.05(i+1)), y0 ~ U(1,3)
TaskFamily preset(FieldKind kind, std::size_t dim = 0);
}  // namespace families

using Rng = std::mt19937_64;

TaskInstance sample(const TaskFamily& family, Rng& rng);

/// True when the kind has a ring-compatible closed-form solution in this library.
bool has_closed_form(FieldKind kind);

}  // namespace rknn
