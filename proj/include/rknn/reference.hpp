#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rknn/fields.hpp"
#include "rknn/jet.hpp"
#include "rknn/rk.hpp"

namespace rknn {

class NoClosedForm : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DivergedReference : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TruthMode {
  automatic,  // closed form when the kind has one, fine reference otherwise
  closed_form,
  taylor_surrogate,
  fine_reference,
};

struct TruthSpec {
  TruthMode mode = TruthMode::automatic;
  std::size_t surrogate_order = 6;
  std::size_t fine_ratio = 100;

  void validate() const {
    if (mode == TruthMode::taylor_surrogate && surrogate_order < 1)
      throw std::invalid_argument("truth: surrogate order must be >= 1");
    if (fine_ratio < 10) throw std::invalid_argument("truth: fine reference ratio must be >= 10");
  }
  bool operator==(const TruthSpec&) const = default;
};

/// Exact solution y(t) for the linear (e^{-at} y0) and square ((at + 1/y0)^{-1}) fields.
template <class R = double>
std::vector<R> closed_form(const TaskInstance& task, R t) {
  const R a = task.field.params()[0];
  const R y0 = task.y0[0];
  switch (task.field.kind()) {
    case FieldKind::linear_1d:
      return {std::exp(-a * t) * y0};
    case FieldKind::square_1d:
      return {y0 / (a * y0 * t + R(1))};
    default:
      throw NoClosedForm("no closed-form solution for field kind '" +
                         std::string(to_string(task.field.kind())) + "'");
  }
}

/// Taylor expansion of the exact solution about t = 0, truncated at `order`,
/// built from the recurrence (m+1) c[m+1] = [f(Y)]_m starting from c[0] = y0.
Jet<double> solution_jet(const TaskInstance& task, std::size_t order);

/// Classic RK4 run at step h_eval / ratio (rounded so it divides t_end exactly).
template <class R = double>
std::vector<R> fine_reference(const TaskInstance& task, R t_end, R h_eval, std::size_t ratio = 100) {
  if (!(t_end >= 0)) throw std::invalid_argument("fine_reference: t_end must be >= 0");
  if (!(h_eval > 0)) throw std::invalid_argument("fine_reference: h_eval must be > 0");
  std::vector<R> y(task.y0.begin(), task.y0.end());
  if (t_end == 0) return y;
  const R fine = h_eval / static_cast<R>(ratio);
  const auto n = static_cast<std::size_t>(std::max<R>(1, std::round(t_end / fine)));
  const R h = t_end / static_cast<R>(n);
  try {
    y = integrate_final<double, R>(classic_tableau("rk4").coef, task.field, y, h, n);
  } catch (const StepDiverged& e) {
    throw DivergedReference(std::string("fine reference: ") + e.what());
  }
  return y;
}

/// One-step truth used for training: closed form if available, else the
/// surrogate jet of the given order evaluated at h.
std::vector<double> one_step_truth(const TaskInstance& task, double h, std::size_t surrogate_order);

/// Truth at time t for multi-step evaluation, per the TruthSpec priority.
/// `h_eval` is the step size being evaluated (sets the fine reference step).
std::vector<long double> truth_at(const TaskInstance& task, long double t, long double h_eval,
                                  const TruthSpec& spec);

}  // namespace rknn
