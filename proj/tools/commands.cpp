#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rknn/config.hpp"
#include "rknn/evaluation.hpp"
#include "rknn/rk.hpp"
#include "rknn/training.hpp"

#ifndef RKNN_VERSION
#define RKNN_VERSION "unknown"
#endif

namespace rknn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised for bad user input that is not a config error (missing files, bad flags).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string tableau;
  std::string reference;
  std::optional<std::size_t> stages;
  std::optional<std::size_t> order;
};

ExperimentConfig resolve(const Overrides& o, bool reference_is_eval) {
  auto c = load_config(o.config);
  if (o.seed) c.seed = c.train.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.stages) c.train.stages = *o.stages;
  if (o.order) c.train.order = *o.order;
  if (!o.reference.empty()) (reference_is_eval ? c.eval.reference : c.train.reference) = o.reference;
  c.validate();
  return c;
}

class Outputs {
 public:
  explicit Outputs(const ExperimentConfig& c) : dir_(c.output_dir), name_(c.name) {
    fs::create_directories(dir_);
  }

  void write(const std::string& suffix, const std::string& content) {
    const auto path = dir_ / (name_ + "_" + suffix);
    std::ofstream f(path, std::ios::binary);
    f << content;
    if (!f) throw std::runtime_error("cannot write " + path.string());
    files_.push_back(path.filename().string());
  }

  void manifest(const std::string& command, const ExperimentConfig& c, json extra = json::object()) {
    json m = {{"command", command},
              {"version", RKNN_VERSION},
              {"seed", c.seed},
              {"config", json::parse(serialize_config(c))},
              {"outputs", files_}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    write("manifest.json", m.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  std::string name_;
  std::vector<std::string> files_;
};

template <class Fn>
std::string render(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

TableauRecord require_tableau(const std::string& path_or_label) {
  if (path_or_label.empty()) throw UsageError("--tableau is required");
  return load_tableau(path_or_label);
}

std::string safe(std::string s) {
  for (char& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  return s;
}

void print_summary(std::ostream& out, const EvalReport& r) {
  double log_sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : r.rows)
    if (std::isfinite(row.ratio_gmean) && row.ratio_gmean > 0) {
      log_sum += std::log(row.ratio_gmean);
      ++n;
    }
  out << r.name << " vs " << r.reference << ": gamma_gmean="
      << (n ? std::exp(log_sum / static_cast<double>(n)) : NAN);
  if (r.nn_fit) out << " slope_nn=" << r.nn_fit->slope;
  if (r.rk_fit) out << " slope_rk=" << r.rk_fit->slope;
  out << " diverged=" << r.diverged << "\n";
}

int cmd_train(const Overrides& o, std::ostream& out) {
  const auto c = resolve(o, false);
  const auto report = train(c.train, c.family);
  Outputs files(c);
  files.write("tableau.txt", format_tableau(TableauRecord::from_params(report.params, c.name)));
  files.write("train.csv", render([&](std::ostream& os) { write_train_report(os, report); }));
  files.manifest("train", c,
                 {{"stop", std::string(to_string(report.stop))},
                  {"epochs", report.history.size()},
                  {"skipped_epochs", report.skipped_epochs}});
  out << "trained " << c.name << ": " << report.history.size() << " epochs, stop="
      << to_string(report.stop);
  if (!report.history.empty()) out << ", gamma=" << report.history.back().gamma;
  out << "\n";
  return kSuccess;
}

int cmd_eval(const Overrides& o, std::ostream& out) {
  const auto c = resolve(o, true);
  const auto tab = require_tableau(o.tableau);
  const auto& ref = classic_tableau(c.eval.reference);
  const auto grid = c.eval.grid();
  Outputs files(c);
  std::vector<FamilyVariant> variants{{"in_range", c.family, std::nullopt}};
  variants.insert(variants.end(), c.eval.variants.begin(), c.eval.variants.end());
  for (const auto& r : generalization_sweep(tab.coef, ref, variants, grid, c.seed)) {
    files.write("eval_" + safe(r.name) + ".csv",
                render([&](std::ostream& os) { write_eval_report(os, r); }));
    print_summary(out, r);
  }
  files.manifest("eval", c, {{"tableau", o.tableau}});
  return kSuccess;
}

int cmd_compare(const Overrides& o, std::ostream& out) {
  const auto c = resolve(o, true);
  const auto tab = require_tableau(o.tableau);
  const auto& ref = classic_tableau(c.eval.reference);
  const auto r = relative_error_sweep(tab.coef, ref, c.family, c.eval.grid(), c.seed, "compare");
  Outputs files(c);
  files.write("compare_" + safe(ref.label) + ".csv",
              render([&](std::ostream& os) { write_eval_report(os, r); }));
  files.manifest("compare", c, {{"tableau", o.tableau}});
  print_summary(out, r);
  return kSuccess;
}

struct OrderCheckArgs {
  std::string family = "linear";
  std::size_t dim = 0;
  double h_min = 0.01;
  double h_max = 0.1;
  std::size_t h_count = 10;
  std::optional<double> horizon;
  std::size_t tasks = 50;
  std::string truth = "auto";
};

int cmd_order_check(const Overrides& o, const OrderCheckArgs& a, std::ostream& out) {
  const auto tab = require_tableau(o.tableau);
  const auto kind = parse_field_kind(a.family);
  if (!kind) throw UsageError("--family: unknown kind '" + a.family + "'");
  const auto family = families::preset(*kind, a.dim);
  EvalGrid grid;
  grid.h = EvalGrid::log_spaced(a.h_min, a.h_max, a.h_count);
  grid.horizon = a.horizon.value_or(
      (*kind == FieldKind::van_der_pol || *kind == FieldKind::brusselator) ? 2.0 : 1.0);
  grid.tasks = a.tasks;
  if (a.truth == "auto") grid.truth.mode = TruthMode::automatic;
  else if (a.truth == "closed_form") grid.truth.mode = TruthMode::closed_form;
  else if (a.truth == "taylor") grid.truth.mode = TruthMode::taylor_surrogate;
  else if (a.truth == "fine") grid.truth.mode = TruthMode::fine_reference;
  else throw UsageError("--truth: expected auto, closed_form, taylor or fine");
  const ClassicTableau self{tab.label, 0, tab.coef};
  const auto r = relative_error_sweep(tab.coef, self, family, grid, o.seed.value_or(0), tab.label);
  if (!r.nn_fit) throw FitUnderdetermined("order-check: fewer than 3 usable step sizes");
  out << "slope " << r.nn_fit->slope << " (" << tab.label << ", " << a.family << ", "
      << r.nn_fit->used << " points)\n";
  return kSuccess;
}

int cmd_bench_scaling(const Overrides& o, std::ostream& out) {
  const auto c = resolve(o, false);
  const auto report = scaling_benchmark(c.scaling.dims, c.scaling.kind, c.train);
  Outputs files(c);
  files.write("scaling.csv", render([&](std::ostream& os) { write_scaling_report(os, report); }));
  files.manifest("bench-scaling", c);
  out << "growth exponent " << report.exponent
      << (report.exponent >= 0.5 && report.exponent <= 2.5 ? " (within [0.5, 2.5])\n"
                                                           : " (outside [0.5, 2.5])\n");
  return kSuccess;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train and evaluate learned Runge-Kutta integrators", "rknn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", RKNN_VERSION);

  Overrides o;
  OrderCheckArgs oc;
  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", o.config, "experiment JSON file");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the experiment seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--reference", o.reference, "classic tableau label for the comparison");
    sub->add_option("--stages", o.stages, "override train.stages");
    sub->add_option("--order", o.order, "override train.order");
  };

  auto* train_cmd = app.add_subcommand("train", "train an integrator, write its tableau");
  common(train_cmd, true);
  auto* eval_cmd = app.add_subcommand("eval", "error sweeps on the family and its variants");
  common(eval_cmd, true);
  eval_cmd->add_option("--tableau", o.tableau, "tableau file or classic label")->required();
  auto* compare_cmd = app.add_subcommand("compare", "relative error against a classic method");
  common(compare_cmd, true);
  compare_cmd->add_option("--tableau", o.tableau, "tableau file or classic label")->required();
  auto* order_cmd = app.add_subcommand("order-check", "fit the global-error order of a tableau");
  order_cmd->add_option("--tableau", o.tableau, "tableau file or classic label")->required();
  order_cmd->add_option("--seed", o.seed, "task sampling seed");
  order_cmd->add_option("--family", oc.family, "family kind");
  order_cmd->add_option("--dim", oc.dim, "dimension for the n-d families");
  order_cmd->add_option("--h-min", oc.h_min);
  order_cmd->add_option("--h-max", oc.h_max);
  order_cmd->add_option("--h-count", oc.h_count);
  order_cmd->add_option("--horizon", oc.horizon);
  order_cmd->add_option("--tasks", oc.tasks);
  order_cmd->add_option("--truth", oc.truth, "auto, closed_form, taylor or fine");
  auto* bench_cmd = app.add_subcommand("bench-scaling", "time training epochs across dimensions");
  common(bench_cmd, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kValidation;
  }

  try {
    if (*train_cmd) return cmd_train(o, out);
    if (*eval_cmd) return cmd_eval(o, out);
    if (*compare_cmd) return cmd_compare(o, out);
    if (*order_cmd) return cmd_order_check(o, oc, out);
    if (*bench_cmd) return cmd_bench_scaling(o, out);
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kValidation;
  } catch (const UsageError& e) {
    err << "rknn: " << e.what() << "\n";
    return kValidation;
  } catch (const std::invalid_argument& e) {
    err << "rknn: invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "rknn: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}

}  // namespace rknn::cli
