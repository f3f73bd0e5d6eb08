// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when a hard criterion fails. `--only N` runs a single one.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "rknn/evaluation.hpp"
#include "rknn/reference.hpp"
#include "rknn/training.hpp"

using namespace rknn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

EvalGrid grid(double lo, double hi, std::size_t n, double horizon, std::size_t tasks) {
  EvalGrid g;
  g.h = EvalGrid::log_spaced(lo, hi, n);
  g.horizon = horizon;
  g.tasks = tasks;
  return g;
}

double worst_ratio(const EvalReport& r) {
  double w = 0.0;
  for (const auto& row : r.rows) w = std::max(w, row.ratio_gmean);
  return w;
}

TrainConfig lm_config(std::size_t stages, std::size_t order, std::size_t batch, std::uint64_t seed) {
  TrainConfig c;
  c.stages = stages;
  c.order = order;
  c.batch_size = batch;
  c.optimizer = Optimizer::levenberg_marquardt;
  c.fixed_dataset = true;
  c.warmup_iterations = 20;
  c.max_iterations = 60;
  c.seed = seed;
  return c;
}

Outcome two_stage_third_order() {
  const auto r = train(lm_config(2, 3, 4096, 1), families::square());
  const auto c = r.params.coefficients();
  const double th = c.a[0], b2 = c.b[1];
  const double c1 = std::abs(2 * th * b2 - 1), c2 = std::abs(th * th * b2 - 1);
  const auto& ref = classic_tableau("rk3");
  const auto e = relative_error_sweep(c, ref, families::square(), grid(0.01, 0.1, 10, 1.0, 50), 101);
  const double slope = e.nn_fit ? e.nn_fit->slope : NAN;
  return {c1 < 0.02 && c2 < 0.05 && slope >= 2.85,
          fmt("theta=%.4f b=(%.4f, %.4f) |2tb2-1|=%.2e |t^2b2-1|=%.2e slope=%.3f", th, c.b[0], b2,
              c1, c2, slope)};
}

Outcome regularizer_conditions() {
  const TaskInstance unit{VectorField::square_1d(1.0), {1.0}};
  const double rk2 = taylor_regularizer(classic_tableau("rk2").coef, unit, 3);
  const std::vector<double> w{0.75, 0.25};
  const auto exact = params_from_weights(2, {2.0}, w);
  double worst = 0.0;
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto t = sample(families::square(), rng);
    // The third coefficient a^3 y0^4 sets the magnitude of every term.
    const double scale = std::pow(std::pow(t.field.params()[0], 3) * std::pow(t.y0[0], 4), 2);
    worst = std::max(worst, taylor_regularizer(exact, t, 3) / scale);
  }
  return {std::abs(rk2 - 9.0) < 1e-9 && worst < 1e-18,
          fmt("rk2=%.12f exact/scale max=%.2e", rk2, worst)};
}

Outcome three_stage_beats_rk3() {
  const auto& ref = classic_tableau("rk3");
  std::string detail;
  bool pass = true;
  struct Case {
    const char* name;
    TaskFamily family;
    double horizon;
  };
  for (const auto& [name, family, horizon] :
       {Case{"linear", families::linear(), 1.0}, Case{"van_der_pol", families::van_der_pol(), 2.0}}) {
    auto cfg = lm_config(3, 3, 2048, 1);
    cfg.reference = "rk3";
    const auto r = train(cfg, family);
    const auto e = relative_error_sweep(r.params.coefficients(), ref, family,
                                        grid(0.01, 0.1, 10, horizon, 50), 303);
    const double w = worst_ratio(e);
    pass = pass && w < 1.0;
    detail += fmt("%s T=%g: worst per-h gamma=%.3f (", name, horizon, w);
    for (std::size_t i = 0; i < e.rows.size(); ++i)
      detail += fmt(i ? " %.2f" : "%.2f", e.rows[i].ratio_gmean);
    detail += "); ";
  }
  return {pass, detail};
}

// Each draw must fit slope >= 1.9 on its own. The family-wide fit over every
// draw's errors is reported alongside.
Outcome random_tableaux_consistent() {
  const std::vector<TaskFamily> fams{families::linear(), families::square(), families::van_der_pol(),
                                     families::brusselator()};
  const auto hs = EvalGrid::log_spaced(1e-4, 1e-2, 9);
  Rng rng(4);
  double worst = INFINITY, pooled_worst = INFINITY;
  int low = 0;
  for (const auto& fam : fams) {
    std::vector<double> pooled(hs.size(), 0.0);
    for (int draw = 0; draw < 50; ++draw) {
      std::uniform_int_distribution<std::size_t> m(1, 4);
      const auto p = initial_params(m(rng), rng).coefficients();
      std::vector<TaskInstance> tasks;
      for (int i = 0; i < 5; ++i) tasks.push_back(sample(fam, rng));
      std::vector<std::pair<double, double>> pts;
      for (std::size_t j = 0; j < hs.size(); ++j) {
        double log_sum = 0.0;
        for (const auto& t : tasks) log_sum += std::log(global_error(p, t, hs[j], hs[j], {}));
        pts.emplace_back(hs[j], std::exp(log_sum / static_cast<double>(tasks.size())));
        pooled[j] += log_sum / static_cast<double>(tasks.size()) / 50.0;
      }
      const double slope = order_fit(pts).slope;
      worst = std::min(worst, slope);
      if (slope < 1.9) ++low;
    }
    std::vector<std::pair<double, double>> pts;
    for (std::size_t j = 0; j < hs.size(); ++j) pts.emplace_back(hs[j], std::exp(pooled[j]));
    pooled_worst = std::min(pooled_worst, order_fit(pts).slope);
  }
  return {worst >= 1.9, fmt("min per-draw slope=%.3f, %d of 200 draws below 1.9; "
                            "min family-wide slope=%.3f",
                            worst, low, pooled_worst)};
}

Outcome four_stage_sixth_order() {
  TrainConfig c;
  c.stages = 4;
  c.order = 6;
  c.batch_size = 128;
  c.max_iterations = 200;
  c.warmup_iterations = 200;  // the Taylor-based loss alone drives every epoch
  c.optimizer = Optimizer::levenberg_marquardt;
  c.reference = "rk4";
  c.restarts = 4;
  c.seed = 1;
  const auto r = train(c, families::square());
  const auto e = relative_error_sweep(r.params.coefficients(), classic_tableau("rk4"),
                                      families::square(), grid(0.01, 0.1, 10, 1.0, 50), 505);
  const double slope = e.nn_fit ? e.nn_fit->slope : NAN;
  return {slope >= 5.7,
          fmt("slope=%.3f final regularizer=%.2e", slope, r.history.back().regularizer)};
}

Outcome classic_rk3_sanity() {
  const auto g = grid(0.01, 0.1, 10, 1.0, 50);
  std::vector<EvalReport> reps;
  for (const char* l : {"rk3_1", "rk3_2", "rk3_3"}) {
    const auto& t = classic_tableau(l);
    reps.push_back(relative_error_sweep(t.coef, classic_tableau("rk3_3"), families::linear(), g, 606, l));
  }
  double spread = 0.0;
  for (std::size_t i = 0; i < g.h.size(); ++i) {
    double lo = INFINITY, hi = 0.0;
    for (const auto& r : reps) {
      lo = std::min(lo, r.rows[i].e_nn_gmean);
      hi = std::max(hi, r.rows[i].e_nn_gmean);
    }
    spread = std::max(spread, hi / lo - 1.0);
  }
  bool pass = spread < 0.10;
  std::string detail = fmt("max relative spread=%.2e slopes", spread);
  for (const auto& r : reps) {
    pass = pass && r.nn_fit && std::abs(r.nn_fit->slope - 3.0) <= 0.15;
    detail += fmt(" %.3f", r.nn_fit ? r.nn_fit->slope : NAN);
  }
  return {pass, detail};
}

Outcome gradient_correctness() {
  const std::vector<TaskFamily> fams{families::linear(), families::square(), families::van_der_pol(),
                                     families::brusselator()};
  Rng rng(7);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    TrainConfig c;
    c.stages = 2 + static_cast<std::size_t>(i % 3);
    c.order = 3;
    const auto p = initial_params(c.stages, rng);
    std::uniform_real_distribution<double> uh(c.h_min, c.h_max);
    const std::vector<Sample> batch{{sample(fams[i % fams.size()], rng), uh(rng)}};
    const auto o = epoch_objective(p, batch, c);
    auto flat = flatten(p);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < flat.size(); ++k) {
      const double e = 1e-5 * std::max(1.0, std::abs(flat[k]));
      auto up = flat, dn = flat;
      up[k] += e;
      dn[k] -= e;
      const double fd = (epoch_objective(unflatten(c.stages, up), batch, c).value -
                         epoch_objective(unflatten(c.stages, dn), batch, c).value) /
                        (2 * e);
      num += (fd - o.gradient[k]) * (fd - o.gradient[k]);
      den += o.gradient[k] * o.gradient[k];
    }
    worst = std::max(worst, std::sqrt(num / std::max(den, 1e-300)));
  }
  return {worst < 1e-5, fmt("max relative gradient error over 100 triples = %.2e", worst)};
}

Outcome oracle_agreement() {
  Rng rng(8);
  double jet_worst = 0.0, fine_worst = 0.0;
  double fact[9] = {1};
  for (int k = 1; k <= 8; ++k) fact[k] = fact[k - 1] * k;
  for (int i = 0; i < 100; ++i) {
    const auto lin = sample(families::linear(), rng);
    const auto sq = sample(families::square(), rng);
    const double al = lin.field.params()[0], yl = lin.y0[0];
    const double as = sq.field.params()[0], ys = sq.y0[0];
    const auto jl = solution_jet(lin, 8).component(0);
    const auto js = solution_jet(sq, 8).component(0);
    for (int k = 0; k <= 8; ++k) {
      const double el = std::pow(-al, k) * yl / fact[k];
      const double es = std::pow(-as, k) * std::pow(ys, k + 1);
      if (el != 0.0) jet_worst = std::max(jet_worst, std::abs(jl[k] - el) / std::abs(el));
      jet_worst = std::max(jet_worst, std::abs(js[k] - es) / std::abs(es));
    }
    for (const auto* t : {&lin, &sq})
      for (double h : {0.01, 0.05, 0.1}) {
        const double f = fine_reference(*t, 1.0, h)[0];
        fine_worst = std::max(fine_worst, std::abs(f - closed_form(*t, 1.0)[0]));
      }
  }
  return {jet_worst < 1e-12 && fine_worst < 1e-9,
          fmt("jet max rel=%.2e fine max abs=%.2e", jet_worst, fine_worst)};
}

Outcome scaling_benchmark_soft() {
  TrainConfig c;
  c.stages = 3;
  c.order = 3;
  c.batch_size = 32;
  c.max_iterations = 20;
  const std::vector<std::size_t> dims{1, 2, 4, 8, 16, 32};
  const auto r = scaling_benchmark(dims, FieldKind::linear_nd, c);
  std::string detail = fmt("exponent=%.3f s/epoch", r.exponent);
  for (const auto& row : r.rows) detail += fmt(" d%zu=%.2e", row.dim, row.seconds_per_epoch);
  return {r.exponent >= 0.5 && r.exponent <= 2.5, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rknn");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "rknn_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto cfg = (dir / "config.json").string();
  std::ofstream(cfg) << R"({"name": "det", "seed": 10, "family": {"kind": "van_der_pol"},
    "train": {"stages": 3, "order": 3, "batch_size": 64, "max_iterations": 100, "threads": 4},
    "eval": {"tasks": 50, "threads": 4}})";
  const std::vector<std::string> files{"det_tableau.txt", "det_train.csv", "det_eval_in_range.csv",
                                       "det_manifest.json"};
  std::vector<std::vector<std::string>> runs;
  for (int pass = 0; pass < 2; ++pass) {
    if (cli({"train", "--config", cfg, "--out", dir.string()}) != 0) return {false, "train failed"};
    const auto tableau = slurp(dir / files[0]);
    const auto report = slurp(dir / files[1]);
    if (cli({"eval", "--config", cfg, "--out", dir.string(), "--tableau", (dir / files[0]).string()}) != 0)
      return {false, "eval failed"};
    runs.push_back({tableau, report, slurp(dir / files[2]), slurp(dir / files[3])});
  }
  fs::remove_all(dir);
  std::string differing;
  for (std::size_t i = 0; i < files.size(); ++i)
    if (runs[0][i] != runs[1][i] || runs[0][i].empty()) differing += " " + files[i];
  return {differing.empty(), differing.empty() ? "4 files byte-identical" : "differ:" + differing};
}

struct Criterion {
  int id;
  const char* name;
  bool soft;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc == 3 && std::strcmp(argv[1], "--only") == 0) only = std::atoi(argv[2]);

  const std::vector<Criterion> all{
      {1, "two-stage third order", false, two_stage_third_order},
      {2, "regularizer order conditions", false, regularizer_conditions},
      {3, "three-stage beats rk3", false, three_stage_beats_rk3},
      {4, "random tableaux consistent", false, random_tableaux_consistent},
      {5, "four-stage sixth order", false, four_stage_sixth_order},
      {6, "classic rk3 sanity", false, classic_rk3_sanity},
      {7, "gradient correctness", false, gradient_correctness},
      {8, "oracle agreement", false, oracle_agreement},
      {9, "scaling benchmark (soft)", true, scaling_benchmark_soft},
      {10, "determinism", false, determinism},
  };

  int hard_failures = 0;
  for (const auto& c : all) {
    if (only != 0 && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d %s: %s  [%s] (%.1f s)\n", c.id, c.name, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), s);
    std::fflush(stdout);
    if (!o.pass && !c.soft) ++hard_failures;
  }
  return hard_failures == 0 ? 0 : 1;
}
