#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rknn/fields.hpp"
#include "rknn/reference.hpp"
#include "rknn/rk.hpp"
#include "rknn/training.hpp"

namespace rknn {

class FitUnderdetermined : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalGrid {
  std::vector<double> h;
  double horizon = 1.0;
  std::size_t tasks = 50;
  TruthSpec truth;
  std::size_t threads = 1;

  /// `count` values log-spaced from lo to hi inclusive.
  static std::vector<double> log_spaced(double lo, double hi, std::size_t count);
  /// Number of steps used for step size h: round(horizon / h).
  std::size_t steps_for(double h) const;
  void validate() const;
  bool operator==(const EvalGrid&) const = default;
};

/// ||y_hat_n - y(n h)|| after n = round(T / h) steps, computed in extended
/// precision. Returns +inf when the integration diverges.
double global_error(const StageCoefficients<double>& coef, const TaskInstance& task, double h,
                    double horizon, const TruthSpec& truth);

struct OrderFit {
  double slope = 0.0;
  double intercept = 0.0;     // natural log of the error constant
  double max_residual = 0.0;  // in log space
  std::size_t used = 0;
  std::size_t excluded = 0;   // nonpositive or non-finite errors dropped
};

/// Least-squares line through (log h, log E). Throws FitUnderdetermined with
/// fewer than three usable points.
OrderFit order_fit(std::span<const std::pair<double, double>> errors);

struct SweepRow {
  double h = 0.0;
  double e_nn_gmean = 0.0;
  double e_rk_gmean = 0.0;
  double e_nn_mean = 0.0;
  double e_rk_mean = 0.0;
  double ratio_gmean = 0.0;
  double ratio_min = 0.0;
  double ratio_max = 0.0;
  std::size_t excluded = 0;  // tasks with a non-finite or zero error
};

struct EvalReport {
  std::string name;
  std::string reference;
  std::vector<SweepRow> rows;
  std::optional<OrderFit> nn_fit;  // fitted to e_nn_gmean
  std::optional<OrderFit> rk_fit;  // fitted to e_rk_gmean
  std::size_t diverged = 0;
  /// Per-h, per-task raw errors.
  std::vector<std::vector<double>> e_nn;
  std::vector<std::vector<double>> e_rk;
};

/// Same sampled tasks for every h; both integrators share one truth per (task, h).
EvalReport relative_error_sweep(const StageCoefficients<double>& nn, const ClassicTableau& reference,
                                const TaskFamily& family, const EvalGrid& grid, std::uint64_t seed,
                                std::string name = "sweep");

struct FamilyVariant {
  std::string name;
  TaskFamily family;
  std::optional<std::vector<double>> h;  // overrides the grid's step sizes
  bool operator==(const FamilyVariant&) const = default;
};

std::vector<EvalReport> generalization_sweep(const StageCoefficients<double>& nn,
                                             const ClassicTableau& reference,
                                             std::span<const FamilyVariant> variants,
                                             const EvalGrid& grid, std::uint64_t seed);

/// Header: h,e_nn_gmean,e_rk_gmean,ratio_gmean,ratio_min,ratio_max,e_nn_mean,e_rk_mean,excluded,slope_nn,slope_rk
void write_eval_report(std::ostream& os, const EvalReport& report);

struct ScalingRow {
  std::size_t dim = 0;
  double seconds_per_epoch = 0.0;
  std::size_t epochs = 0;
  double final_gamma = 0.0;
};

struct ScalingReport {
  FieldKind kind = FieldKind::linear_nd;
  std::vector<ScalingRow> rows;
  double exponent = 0.0;  // log-log slope of seconds_per_epoch against dim
};

/// Trains on the preset family of each dimension with `config` and times the epochs.
ScalingReport scaling_benchmark(std::span<const std::size_t> dims, FieldKind kind,
                                const TrainConfig& config);
/// Log-log slope of time against dimension.
double growth_exponent(std::span<const ScalingRow> rows);
void write_scaling_report(std::ostream& os, const ScalingReport& report);

}  // namespace rknn
