#include "rknn/reference.hpp"

namespace rknn {

Jet<double> solution_jet(const TaskInstance& task, std::size_t order) {
  if (order < 1) throw std::invalid_argument("solution_jet: order must be >= 1");
  auto y = Jet<double>::constant(std::span<const double>(task.y0), order);
  // Coefficient m of f(Y) depends only on Y's coefficients 0..m, so each pass
  // fixes one more degree.
  for (std::size_t m = 0; m < order; ++m) {
    const auto fy = eval_jet(task.field, y);
    for (std::size_t k = 0; k < y.dim(); ++k)
      y.component(k)[m + 1] = fy.component(k)[m] / static_cast<double>(m + 1);
  }
  return y;
}

std::vector<double> one_step_truth(const TaskInstance& task, double h, std::size_t surrogate_order) {
  if (has_closed_form(task.field.kind())) return closed_form<double>(task, h);
  const auto jet = solution_jet(task, surrogate_order);
  std::vector<double> out;
  out.reserve(jet.dim());
  for (const auto& c : jet.components()) out.push_back(c.evaluate(h));
  return out;
}

std::vector<long double> truth_at(const TaskInstance& task, long double t, long double h_eval,
                                  const TruthSpec& spec) {
  switch (spec.mode) {
    case TruthMode::automatic:
      if (has_closed_form(task.field.kind())) return closed_form<long double>(task, t);
      return fine_reference<long double>(task, t, h_eval, spec.fine_ratio);
    case TruthMode::closed_form:
      return closed_form<long double>(task, t);
    case TruthMode::fine_reference:
      return fine_reference<long double>(task, t, h_eval, spec.fine_ratio);
    case TruthMode::taylor_surrogate: {
      const auto jet = solution_jet(task, spec.surrogate_order);
      std::vector<long double> out;
      for (const auto& c : jet.components()) out.push_back(c.evaluate(t));
      return out;
    }
  }
  throw std::logic_error("truth_at: unknown mode");
}

}  // namespace rknn
