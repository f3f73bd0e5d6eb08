#include "rknn/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include <Eigen/Dense>

namespace rknn {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(stages >= 1, "train.stages: must be >= 1");
  require(RknnParams<double>::parameter_count(stages) <= kMaxDualSize,
          "train.stages: too many stages for the gradient width");
  require(order >= 1, "train.order: must be >= 1");
  require(h_min > 0.0 && h_min < h_max, "train.h_range: need 0 < h_min < h_max");
  require(batch_size >= 1, "train.batch_size: must be >= 1");
  require(tolerance > 0.0 || tolerance == 0.0, "train.tolerance: must be >= 0");
  require(regularizer_weight >= 0.0, "train.regularizer_weight: must be >= 0");
  require(damping > 0.0, "train.damping: must be > 0");
  require(adam.learning_rate > 0.0, "train.learning_rate: must be > 0");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "train.beta1: must be in [0, 1)");
  require(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "train.beta2: must be in [0, 1)");
  require(adam.epsilon > 0.0, "train.epsilon: must be > 0");
  require(learning_rate_decay > 0.0 && learning_rate_decay <= 1.0,
          "train.learning_rate_decay: must be in (0, 1]");
  require(effective_surrogate_order() >= order, "train.surrogate_order: must be >= order");
  require(threads >= 1, "train.threads: must be >= 1");
  require(restarts >= 1, "train.restarts: must be >= 1");
  require(loss_floor > 0.0, "train.loss_floor: must be > 0");
  classic_tableau(reference);  // throws on unknown label
}

namespace {

struct SampleResult {
  Dual loss;
  Dual reg;
  double mse = 0.0;
  bool finite = true;
  std::vector<Dual> loss_res;
  std::vector<Dual> reg_res;
};

SampleResult evaluate_sample(const StageCoefficients<Dual>& coef, const ClassicTableau& reference,
                             const Sample& s, const TrainConfig& config, bool residuals) {
  SampleResult r;
  try {
    const auto& field = s.task.field;
    const auto truth = one_step_truth(s.task, s.h, config.effective_surrogate_order());
    const auto rk = step(reference.coef, field, std::span<const double>(s.task.y0), s.h);
    std::vector<Dual> y0(s.task.y0.begin(), s.task.y0.end());
    const auto nn = step(coef, field, std::span<const Dual>(y0), Dual(s.h));
    r.loss = scaled_loss<Dual>(truth, nn, rk, config.loss_floor);
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const double e = nn[i].value() - truth[i];
      r.mse += e * e;
    }
    const auto jet = solution_jet(s.task, config.order);
    if (residuals) {
      r.loss_res = scaled_residuals<Dual>(truth, nn, rk, config.loss_floor);
      r.reg_res = taylor_residuals(coef, s.task, config.order, jet);
      r.reg = Dual(0.0);
      for (const auto& x : r.reg_res) r.reg += x * x;
    } else {
      r.reg = taylor_regularizer(coef, s.task, config.order, jet);
    }
    r.finite = is_finite(r.loss) && is_finite(r.reg);
  } catch (const StepDiverged&) {
    r.finite = false;
  }
  return r;
}

}  // namespace

Objective epoch_objective(const RknnParams<double>& params, std::span<const Sample> batch,
                          const TrainConfig& config, bool with_loss, bool with_jacobian) {
  if (batch.empty()) throw std::invalid_argument("epoch_objective: empty batch");
  const auto coef = seeded(params).coefficients();
  const auto& reference = classic_tableau(config.reference);

  std::vector<SampleResult> results(batch.size());
  auto work = [&](std::size_t i) {
    results[i] = evaluate_sample(coef, reference, batch[i], config, with_jacobian);
  };
  const std::size_t workers = std::min(config.threads, batch.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < batch.size(); i += workers) work(i);
      });
    for (auto& t : pool) t.join();
  }

  // Reduce in sample order so the result does not depend on the thread count.
  Objective out;
  const std::size_t n = params.parameter_count();
  Dual total = Dual::constant(0.0, n);
  double loss_sum = 0.0;
  double reg_sum = 0.0;
  double mse_sum = 0.0;
  out.sample_losses.reserve(batch.size());
  for (const auto& r : results) {
    if (!r.finite) {
      out.finite = false;
      out.sample_losses.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    if (with_loss) total += r.loss;
    total += config.regularizer_weight * r.reg;
    loss_sum += r.loss.value();
    reg_sum += r.reg.value();
    mse_sum += r.mse;
    out.sample_losses.push_back(r.loss.value());
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (!out.finite) {
    out.value = std::numeric_limits<double>::infinity();
    out.gamma = out.regularizer = out.mse = std::numeric_limits<double>::infinity();
    out.gradient.assign(n, 0.0);
    return out;
  }
  total *= inv;
  out.value = total.value();
  out.gradient = total.gradient();
  out.gamma = loss_sum * inv;
  out.regularizer = reg_sum * inv;
  out.mse = mse_sum * inv;
  if (with_jacobian) {
    const double wl = std::sqrt(inv);
    const double wr = std::sqrt(inv * config.regularizer_weight);
    auto append = [&](const std::vector<Dual>& rs, double w) {
      for (const auto& x : rs) {
        out.residuals.push_back(w * x.value());
        for (std::size_t k = 0; k < n; ++k) out.jacobian.push_back(w * x.grad(k));
      }
    };
    for (const auto& r : results) {
      if (with_loss) append(r.loss_res, wl);
      append(r.reg_res, wr);
    }
  }
  return out;
}

void adam_step(std::vector<double>& params, std::span<const double> gradient, AdamState& state,
               const AdamConfig& config, double learning_rate) {
  if (gradient.size() != params.size() || state.m.size() != params.size())
    throw std::invalid_argument("adam_step: size mismatch");
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradient[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
  }
}

std::string_view to_string(Optimizer o) {
  return o == Optimizer::adam ? "adam" : "levenberg_marquardt";
}

std::optional<Optimizer> parse_optimizer(std::string_view name) {
  if (name == "adam") return Optimizer::adam;
  if (name == "levenberg_marquardt") return Optimizer::levenberg_marquardt;
  return std::nullopt;
}

std::string_view to_string(StopReason r) {
  return r == StopReason::tolerance_met ? "tolerance-met" : "max-iterations";
}

RknnParams<double> initial_params(std::size_t stages, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> logit(0.0, 0.1);
  RknnParams<double> p{stages, {}, {}};
  for (std::size_t i = 0; i < packed_size(stages); ++i) p.a.push_back(unit(rng));
  for (std::size_t i = 0; i < stages; ++i) p.logits.push_back(logit(rng));
  return p;
}

std::vector<Sample> draw_batch(const TaskFamily& family, const TrainConfig& config, Rng& rng) {
  std::vector<Sample> batch;
  batch.reserve(config.batch_size);
  std::uniform_real_distribution<double> hdist(config.h_min, config.h_max);
  for (std::size_t j = 0; j < config.batch_size; ++j) {
    auto task = sample(family, rng);
    const double h = hdist(rng);
    batch.push_back({std::move(task), h});
  }
  return batch;
}

namespace {

// Independent stream per epoch, so batches do not depend on how much
// randomness earlier epochs consumed.
Rng epoch_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

constexpr std::size_t kMaxConsecutiveSkips = 25;

// One damped Gauss-Newton step on the batch's residuals. The step is retried
// with heavier damping until the batch objective decreases; if it never does
// the parameters are left unchanged.
void lm_step(std::vector<double>& flat, const Objective& obj, std::span<const Sample> batch,
             const TrainConfig& config, bool with_loss, double& damping) {
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto p = static_cast<Eigen::Index>(flat.size());
  const auto rows = static_cast<Eigen::Index>(obj.residuals.size());
  const Eigen::Map<const Matrix> jac(obj.jacobian.data(), rows, p);
  const Eigen::Map<const Eigen::VectorXd> res(obj.residuals.data(), rows);
  const Eigen::MatrixXd normal = jac.transpose() * jac;
  const Eigen::VectorXd grad = jac.transpose() * res;
  const double floor = 1e-12 * std::max(normal.diagonal().maxCoeff(), 1e-300);
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::MatrixXd m = normal;
    for (Eigen::Index i = 0; i < p; ++i) m(i, i) += damping * std::max(normal(i, i), floor);
    const Eigen::VectorXd delta = m.ldlt().solve(-grad);
    std::vector<double> trial(flat);
    for (Eigen::Index i = 0; i < p; ++i) trial[static_cast<std::size_t>(i)] += delta(i);
    const auto next = epoch_objective(unflatten(config.stages, trial), batch, config, with_loss);
    if (next.finite && next.value < obj.value) {
      flat = std::move(trial);
      damping = std::max(damping / 3.0, 1e-12);
      return;
    }
    damping = std::min(damping * 4.0, 1e12);
  }
}

// Restart r > 0 only changes the initialization; batches follow the same streams.
TrainReport train_from(const TrainConfig& config, const TaskFamily& family, std::size_t restart) {
  TrainReport report;
  {
    Rng init = epoch_rng(config.seed, restart == 0 ? 0 : (std::uint64_t{1} << 40) + restart);
    report.initial_params = initial_params(config.stages, init);
  }
  auto flat = flatten(report.initial_params);
  AdamState adam(flat.size());

  std::vector<Sample> fixed;
  if (config.fixed_dataset) {
    Rng rng = epoch_rng(config.seed, 1);
    fixed = draw_batch(family, config, rng);
  }

  double lr = config.adam.learning_rate;
  double damping = config.damping;
  std::size_t consecutive_skips = 0;
  for (std::size_t epoch = 0; epoch < config.max_iterations; ++epoch) {
    std::vector<Sample> fresh;
    if (!config.fixed_dataset) {
      Rng rng = epoch_rng(config.seed, epoch + 1);
      fresh = draw_batch(family, config, rng);
    }
    const auto& batch = config.fixed_dataset ? fixed : fresh;
    const auto params = unflatten(config.stages, flat);
    const bool warm = epoch < config.warmup_iterations;
    if (epoch == config.warmup_iterations && epoch > 0) {
      adam = AdamState(flat.size());
      lr = config.adam.learning_rate;
      damping = config.damping;
    }
    const bool lm = config.optimizer == Optimizer::levenberg_marquardt;
    const auto obj = epoch_objective(params, batch, config, !warm, lm);
    if (!obj.finite) {
      // Parameters stay where they were; the epoch is not recorded.
      ++report.skipped_epochs;
      if (++consecutive_skips >= kMaxConsecutiveSkips)
        throw TrainingFailed("training failed: " + std::to_string(consecutive_skips) +
                             " consecutive epochs diverged");
      continue;
    }
    consecutive_skips = 0;
    if (lm) {
      lm_step(flat, obj, batch, config, !warm, damping);
    } else {
      adam_step(flat, obj.gradient, adam, config.adam, lr);
      lr *= config.learning_rate_decay;
    }
    report.history.push_back({epoch + 1, obj.value, obj.mse, obj.regularizer, obj.gamma});
    if (obj.gamma < config.tolerance) {
      report.stop = StopReason::tolerance_met;
      break;
    }
  }
  report.params = unflatten(config.stages, flat);
  return report;
}

}  // namespace

TrainReport train(const TrainConfig& config, const TaskFamily& family) {
  config.validate();
  family.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainReport best = train_from(config, family, 0);
  if (config.restarts > 1) {
    // Runs are ranked by the full objective, loss included, on the training
    // data (or one shared batch when batches are resampled).
    Rng rng = epoch_rng(config.seed, config.fixed_dataset ? 1 : std::uint64_t{1} << 41);
    const auto batch = draw_batch(family, config, rng);
    auto score = [&](const TrainReport& r) {
      const auto o = epoch_objective(r.params, batch, config, true);
      return o.finite ? o.value : std::numeric_limits<double>::infinity();
    };
    double best_score = score(best);
    for (std::size_t r = 1; r < config.restarts; ++r) {
      auto next = train_from(config, family, r);
      const double s = score(next);
      if (s < best_score) {
        best = std::move(next);
        best_score = s;
      }
    }
  }
  best.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return best;
}

void write_train_report(std::ostream& os, const TrainReport& report) {
  os << "epoch,objective,mse,regularizer,gamma\n";
  char buf[160];
  for (const auto& r : report.history) {
    std::snprintf(buf, sizeof buf, "%zu,%.16e,%.16e,%.16e,%.16e\n", r.epoch, r.objective, r.mse,
                  r.regularizer, r.gamma);
    os << buf;
  }
}

}  // namespace rknn
