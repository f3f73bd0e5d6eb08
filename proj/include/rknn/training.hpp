#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rknn/dual.hpp"
#include "rknn/fields.hpp"
#include "rknn/reference.hpp"
#include "rknn/rk.hpp"

namespace rknn {

class TrainingFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

enum class Optimizer { adam, levenberg_marquardt };
std::string_view to_string(Optimizer o);
std::optional<Optimizer> parse_optimizer(std::string_view name);

struct TrainConfig {
  std::size_t stages = 3;
  std::size_t order = 3;  // target order alpha of the regularizer
  double h_min = 0.01;
  double h_max = 0.1;
  std::size_t batch_size = 128;
  std::size_t max_iterations = 1000;
  double tolerance = 0.0;  // stop once gamma < tolerance
  double regularizer_weight = 1.0;
  Optimizer optimizer = Optimizer::adam;
  AdamConfig adam;
  /// Initial damping of the Levenberg-Marquardt step.
  double damping = 1e-3;
  /// Per-epoch multiplicative learning-rate decay; 1 keeps the rate constant.
  double learning_rate_decay = 1.0;
  /// Leading epochs that descend on the regularizer alone (the scaled loss is
  /// still reported). Moments and step size restart when the loss joins.
  std::size_t warmup_iterations = 0;
  std::uint64_t seed = 0;
  std::string reference = "rk3";  // classic tableau in the loss denominator
  /// Order of the Taylor surrogate for one-step truths; 0 means order + 3.
  std::size_t surrogate_order = 0;
  /// Draw the batch once instead of resampling every epoch.
  bool fixed_dataset = false;
  std::size_t threads = 1;
  /// Independent random initializations; the run with the lowest full
  /// objective (scaled loss plus weighted regularizer) on the training data is kept.
  std::size_t restarts = 1;
  double loss_floor = 1e-30;

  std::size_t effective_surrogate_order() const {
    return surrogate_order == 0 ? order + 3 : surrogate_order;
  }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// ||y_true - y_hat||^2 / max(||y_true - y_rk||^2, floor).
template <class S>
S scaled_loss(std::span<const double> y_true, std::span<const S> y_hat,
              std::span<const double> y_rk, double floor = 1e-30) {
  if (y_true.size() != y_hat.size() || y_true.size() != y_rk.size())
    throw std::invalid_argument("scaled_loss: dimension mismatch");
  S num(0.0);
  double den = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    S e = y_hat[i] - y_true[i];
    num += e * e;
    const double r = y_rk[i] - y_true[i];
    den += r * r;
  }
  return num / std::max(den, floor);
}

inline double scaled_loss(const std::vector<double>& y_true, const std::vector<double>& y_hat,
                          const std::vector<double>& y_rk, double floor = 1e-30) {
  return scaled_loss<double>(y_true, y_hat, y_rk, floor);
}

/// Components whose squares sum to scaled_loss.
template <class S>
std::vector<S> scaled_residuals(std::span<const double> y_true, std::span<const S> y_hat,
                                std::span<const double> y_rk, double floor = 1e-30) {
  if (y_true.size() != y_hat.size() || y_true.size() != y_rk.size())
    throw std::invalid_argument("scaled_residuals: dimension mismatch");
  double den = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) den += (y_rk[i] - y_true[i]) * (y_rk[i] - y_true[i]);
  const double s = 1.0 / std::sqrt(std::max(den, floor));
  std::vector<S> out;
  for (std::size_t i = 0; i < y_true.size(); ++i) out.push_back((y_hat[i] - y_true[i]) * s);
  return out;
}

/// i! (c_i - c_hat_i) for i = 1..alpha and every component, ordered by i then
/// component; their squares sum to taylor_regularizer.
template <class S>
std::vector<S> taylor_residuals(const StageCoefficients<S>& coef, const TaskInstance& task,
                                std::size_t alpha, const Jet<double>& truth_jet) {
  if (alpha < 1) throw std::invalid_argument("taylor_regularizer: alpha must be >= 1");
  if (truth_jet.order() != alpha) throw JetMismatch("taylor_regularizer: truth jet order != alpha");
  const auto nn = step_jet(coef, task.field, task.y0, alpha);
  std::vector<S> out;
  double fact = 1.0;
  for (std::size_t i = 1; i <= alpha; ++i) {
    fact *= static_cast<double>(i);
    for (std::size_t k = 0; k < nn.dim(); ++k) {
      S diff = nn.component(k)[i] - truth_jet.component(k)[i];
      diff *= fact;
      out.push_back(std::move(diff));
    }
  }
  return out;
}

/// sum_{i=1}^{alpha} || d^i/dh^i (y_1 - y_hat_1) at h = 0 ||^2, from the solution
/// jet and the one-step jet of the integrator. Independent of any step size.
template <class S>
S taylor_regularizer(const StageCoefficients<S>& coef, const TaskInstance& task, std::size_t alpha,
                     const Jet<double>& truth_jet) {
  S total(0.0);
  for (const auto& r : taylor_residuals(coef, task, alpha, truth_jet)) total += r * r;
  return total;
}

template <class S>
S taylor_regularizer(const StageCoefficients<S>& coef, const TaskInstance& task, std::size_t alpha) {
  return taylor_regularizer(coef, task, alpha, solution_jet(task, alpha));
}

template <class S>
S taylor_regularizer(const RknnParams<S>& params, const TaskInstance& task, std::size_t alpha) {
  return taylor_regularizer(params.coefficients(), task, alpha);
}

struct Sample {
  TaskInstance task;
  double h = 0.0;
};

struct Objective {
  double value = 0.0;              // mean of scaled loss + lambda * regularizer
  std::vector<double> gradient;    // d value / d flat parameters
  double gamma = 0.0;              // mean scaled loss
  double regularizer = 0.0;        // mean regularizer
  double mse = 0.0;                // mean unscaled squared one-step error
  std::vector<double> sample_losses;
  bool finite = true;
  /// Filled when requested: r with value = ||r||^2, and its row-major Jacobian.
  std::vector<double> residuals;
  std::vector<double> jacobian;
};

/// Batch objective with its exact gradient (forward-mode duals). With
/// `with_loss` false the value and gradient cover only the regularizer term.
Objective epoch_objective(const RknnParams<double>& params, std::span<const Sample> batch,
                          const TrainConfig& config, bool with_loss = true,
                          bool with_jacobian = false);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected adaptive-moment update, in place.
void adam_step(std::vector<double>& params, std::span<const double> gradient, AdamState& state,
               const AdamConfig& config, double learning_rate);
inline void adam_step(std::vector<double>& params, std::span<const double> gradient,
                      AdamState& state, const AdamConfig& config) {
  adam_step(params, gradient, state, config, config.learning_rate);
}

enum class StopReason { tolerance_met, max_iterations };
std::string_view to_string(StopReason r);

struct EpochRecord {
  std::size_t epoch = 0;
  double objective = 0.0;
  double mse = 0.0;
  double regularizer = 0.0;
  double gamma = 0.0;
};

struct TrainReport {
  RknnParams<double> params;
  RknnParams<double> initial_params;
  std::vector<EpochRecord> history;
  StopReason stop = StopReason::max_iterations;
  std::size_t skipped_epochs = 0;
  double seconds = 0.0;  // wall time, not part of any serialized report
};

/// Initial parameters: stage coefficients ~ U(0,1), logits ~ N(0, 0.1^2).
RknnParams<double> initial_params(std::size_t stages, Rng& rng);
std::vector<Sample> draw_batch(const TaskFamily& family, const TrainConfig& config, Rng& rng);

/// The learning loop: per epoch draw a batch, evaluate the objective, take an
/// optimizer step, record gamma; stop when gamma < tolerance or at max_iterations.
TrainReport train(const TrainConfig& config, const TaskFamily& family);

/// CSV rows: epoch, objective, mse, regularizer, gamma.
void write_train_report(std::ostream& os, const TrainReport& report);

}  // namespace rknn
