#include "rknn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <thread>

namespace rknn {

std::vector<double> EvalGrid::log_spaced(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi >= lo) || count < 1)
    throw std::invalid_argument("log_spaced: need 0 < lo <= hi and count >= 1");
  std::vector<double> out;
  if (count == 1) return {lo};
  const double step = std::log(hi / lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(i + 1 == count ? hi : lo * std::exp(step * static_cast<double>(i)));
  return out;
}

std::size_t EvalGrid::steps_for(double step) const {
  return static_cast<std::size_t>(std::llround(horizon / step));
}

void EvalGrid::validate() const {
  if (h.empty()) throw std::invalid_argument("eval.h: need at least one step size");
  if (!(horizon > 0.0)) throw std::invalid_argument("eval.horizon: must be > 0");
  for (double x : h) {
    if (!(x > 0.0)) throw std::invalid_argument("eval.h: step sizes must be > 0");
    if (steps_for(x) < 1) throw std::invalid_argument("eval.h: step size exceeds the horizon");
  }
  if (tasks < 1) throw std::invalid_argument("eval.tasks: must be >= 1");
  if (threads < 1) throw std::invalid_argument("eval.threads: must be >= 1");
  truth.validate();
}

double global_error(const StageCoefficients<double>& coef, const TaskInstance& task, double h,
                    double horizon, const TruthSpec& truth) {
  using R = long double;
  const auto n = static_cast<std::size_t>(std::llround(horizon / h));
  if (n < 1) throw std::invalid_argument("global_error: need round(T/h) >= 1");
  const std::vector<R> y0(task.y0.begin(), task.y0.end());
  std::vector<R> yn;
  try {
    yn = integrate_final<double, R>(coef, task.field, y0, static_cast<R>(h), n);
  } catch (const StepDiverged&) {
    return std::numeric_limits<double>::infinity();
  }
  // Compare at the realized time n h, which can differ from T.
  const auto yt = truth_at(task, static_cast<R>(n) * static_cast<R>(h), static_cast<R>(h), truth);
  R sq = 0;
  for (std::size_t i = 0; i < yn.size(); ++i) sq += (yn[i] - yt[i]) * (yn[i] - yt[i]);
  return static_cast<double>(std::sqrt(sq));
}

OrderFit order_fit(std::span<const std::pair<double, double>> errors) {
  std::vector<std::pair<double, double>> pts;
  OrderFit fit;
  for (const auto& [h, e] : errors) {
    if (h > 0.0 && e > 0.0 && std::isfinite(h) && std::isfinite(e)) {
      pts.emplace_back(std::log(h), std::log(e));
    } else {
      ++fit.excluded;
    }
  }
  if (fit.excluded > 0)
    std::cerr << "order_fit: excluded " << fit.excluded << " nonpositive or non-finite errors\n";
  if (pts.size() < 3)
    throw FitUnderdetermined("order_fit: need at least 3 positive finite errors, have " +
                             std::to_string(pts.size()));
  const double n = static_cast<double>(pts.size());
  double sx = 0, sy = 0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) throw FitUnderdetermined("order_fit: all step sizes are equal");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  for (const auto& [x, y] : pts)
    fit.max_residual = std::max(fit.max_residual, std::abs(y - (fit.slope * x + fit.intercept)));
  fit.used = pts.size();
  return fit;
}

namespace {

template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::min(threads, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}

std::optional<OrderFit> try_fit(const std::vector<std::pair<double, double>>& pts) {
  try {
    return order_fit(pts);
  } catch (const FitUnderdetermined&) {
    return std::nullopt;
  }
}

}  // namespace

EvalReport relative_error_sweep(const StageCoefficients<double>& nn, const ClassicTableau& reference,
                                const TaskFamily& family, const EvalGrid& grid, std::uint64_t seed,
                                std::string name) {
  grid.validate();
  family.validate();
  if (grid.truth.mode == TruthMode::closed_form && !has_closed_form(family.kind))
    throw NoClosedForm("eval: closed-form truth requested for a family without one");

  Rng rng(seed);
  std::vector<TaskInstance> tasks;
  tasks.reserve(grid.tasks);
  for (std::size_t j = 0; j < grid.tasks; ++j) tasks.push_back(sample(family, rng));

  EvalReport report;
  report.name = std::move(name);
  report.reference = reference.label;
  const std::size_t nh = grid.h.size();
  report.e_nn.assign(nh, std::vector<double>(tasks.size()));
  report.e_rk.assign(nh, std::vector<double>(tasks.size()));

  parallel_for(nh * tasks.size(), grid.threads, [&](std::size_t idx) {
    const std::size_t i = idx / tasks.size();
    const std::size_t j = idx % tasks.size();
    const double h = grid.h[i];
    report.e_nn[i][j] = global_error(nn, tasks[j], h, grid.horizon, grid.truth);
    report.e_rk[i][j] = global_error(reference.coef, tasks[j], h, grid.horizon, grid.truth);
  });

  std::vector<std::pair<double, double>> nn_pts, rk_pts;
  for (std::size_t i = 0; i < nh; ++i) {
    SweepRow row;
    row.h = grid.h[i];
    double log_nn = 0, log_rk = 0, log_ratio = 0, sum_nn = 0, sum_rk = 0;
    std::size_t used = 0;
    row.ratio_min = std::numeric_limits<double>::infinity();
    row.ratio_max = 0.0;
    for (std::size_t j = 0; j < tasks.size(); ++j) {
      const double en = report.e_nn[i][j];
      const double er = report.e_rk[i][j];
      if (!std::isfinite(en) || !std::isfinite(er)) ++report.diverged;
      if (!(en > 0.0) || !(er > 0.0) || !std::isfinite(en) || !std::isfinite(er)) {
        ++row.excluded;
        continue;
      }
      const double ratio = en / er;
      log_nn += std::log(en);
      log_rk += std::log(er);
      log_ratio += std::log(ratio);
      sum_nn += en;
      sum_rk += er;
      row.ratio_min = std::min(row.ratio_min, ratio);
      row.ratio_max = std::max(row.ratio_max, ratio);
      ++used;
    }
    if (used > 0) {
      const double u = static_cast<double>(used);
      row.e_nn_gmean = std::exp(log_nn / u);
      row.e_rk_gmean = std::exp(log_rk / u);
      row.ratio_gmean = std::exp(log_ratio / u);
      row.e_nn_mean = sum_nn / u;
      row.e_rk_mean = sum_rk / u;
      nn_pts.emplace_back(row.h, row.e_nn_gmean);
      rk_pts.emplace_back(row.h, row.e_rk_gmean);
    } else {
      row.ratio_min = row.ratio_max = row.ratio_gmean = std::numeric_limits<double>::quiet_NaN();
    }
    report.rows.push_back(row);
  }
  report.nn_fit = try_fit(nn_pts);
  report.rk_fit = try_fit(rk_pts);
  return report;
}

std::vector<EvalReport> generalization_sweep(const StageCoefficients<double>& nn,
                                             const ClassicTableau& reference,
                                             std::span<const FamilyVariant> variants,
                                             const EvalGrid& grid, std::uint64_t seed) {
  std::vector<EvalReport> out;
  for (const auto& v : variants) {
    EvalGrid g = grid;
    if (v.h) g.h = *v.h;
    out.push_back(relative_error_sweep(nn, reference, v.family, g, seed, v.name));
  }
  return out;
}

void write_eval_report(std::ostream& os, const EvalReport& report) {
  os << "h,e_nn_gmean,e_rk_gmean,ratio_gmean,ratio_min,ratio_max,e_nn_mean,e_rk_mean,excluded,"
        "slope_nn,slope_rk\n";
  const double snn = report.nn_fit ? report.nn_fit->slope : std::numeric_limits<double>::quiet_NaN();
  const double srk = report.rk_fit ? report.rk_fit->slope : std::numeric_limits<double>::quiet_NaN();
  char buf[400];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%.16e,%.16e,%.16e,%.16e,%.16e,%.16e,%.16e,%.16e,%zu,%.16e,%.16e\n",
                  r.h, r.e_nn_gmean, r.e_rk_gmean, r.ratio_gmean, r.ratio_min, r.ratio_max,
                  r.e_nn_mean, r.e_rk_mean, r.excluded, snn, srk);
    os << buf;
  }
}

double growth_exponent(std::span<const ScalingRow> rows) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows) pts.emplace_back(static_cast<double>(r.dim), r.seconds_per_epoch);
  return order_fit(pts).slope;
}

ScalingReport scaling_benchmark(std::span<const std::size_t> dims, FieldKind kind,
                                const TrainConfig& config) {
  if (kind != FieldKind::linear_nd && kind != FieldKind::nonlinear_nd)
    throw std::invalid_argument("scaling_benchmark: kind must be linear_nd or nonlinear_nd");
  if (!std::is_sorted(dims.begin(), dims.end()))
    throw std::invalid_argument("scaling_benchmark: dims must be ascending");
  ScalingReport report;
  report.kind = kind;
  for (std::size_t d : dims) {
    const auto family = families::preset(kind, d);
    const auto result = train(config, family);
    const std::size_t epochs = std::max<std::size_t>(result.history.size(), 1);
    report.rows.push_back({d, result.seconds / static_cast<double>(epochs), result.history.size(),
                           result.history.empty() ? 0.0 : result.history.back().gamma});
  }
  if (report.rows.size() >= 3) report.exponent = growth_exponent(report.rows);
  return report;
}

void write_scaling_report(std::ostream& os, const ScalingReport& report) {
  os << "dim,seconds_per_epoch,epochs,final_gamma,exponent\n";
  char buf[200];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.6e,%zu,%.6e,%.4f\n", r.dim, r.seconds_per_epoch, r.epochs,
                  r.final_gamma, report.exponent);
    os << buf;
  }
}

}  // namespace rknn
