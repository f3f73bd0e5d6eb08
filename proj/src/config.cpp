#include "rknn/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace rknn {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

void reject_unknown(const json& obj, const std::string& path, std::set<std::string> allowed) {
  if (!obj.is_object()) fail(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) fail(path.empty() ? key : path + "." + key, "unknown key");
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

template <class T>
void read(const json& obj, const std::string& path, const std::string& key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_unsigned()) fail(join(path, key), "expected a non-negative integer");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) fail(join(path, key), "expected a number");
    }
    out = it->get<T>();
  } catch (const json::exception& e) {
    fail(join(path, key), e.what());
  }
}

UniformRange read_range(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    fail(path, "expected [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<UniformRange> read_ranges(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list of [lo, hi] ranges");
  std::vector<UniformRange> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(read_range(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

json write_ranges(const std::vector<UniformRange>& rs) {
  json out = json::array();
  for (const auto& r : rs) out.push_back({r.lo, r.hi});
  return out;
}

FieldKind read_kind(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a family kind string");
  const auto kind = parse_field_kind(j.get<std::string>());
  if (!kind) fail(path, "unknown family kind '" + j.get<std::string>() + "'");
  return *kind;
}

TaskFamily read_family(const json& j, const std::string& path) {
  reject_unknown(j, path, {"kind", "dim", "params", "y0"});
  if (!j.contains("kind")) fail(join(path, "kind"), "required");
  const auto kind = read_kind(j["kind"], join(path, "kind"));
  std::size_t dim = 0;
  read(j, path, "dim", dim);
  TaskFamily family = families::preset(kind, dim);
  if (dim != 0) family.dim = dim;
  if (j.contains("params")) family.param_ranges = read_ranges(j["params"], join(path, "params"));
  if (j.contains("y0")) family.y0_box = read_ranges(j["y0"], join(path, "y0"));
  return family;
}

json write_family(const TaskFamily& f) {
  return {{"kind", std::string(to_string(f.kind))},
          {"dim", f.dim},
          {"params", write_ranges(f.param_ranges)},
          {"y0", write_ranges(f.y0_box)}};
}

TruthMode read_truth_mode(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  const auto s = j.get<std::string>();
  if (s == "auto") return TruthMode::automatic;
  if (s == "closed_form") return TruthMode::closed_form;
  if (s == "taylor") return TruthMode::taylor_surrogate;
  if (s == "fine") return TruthMode::fine_reference;
  fail(path, "unknown truth mode '" + s + "' (auto, closed_form, taylor, fine)");
}

std::string truth_mode_name(TruthMode m) {
  switch (m) {
    case TruthMode::automatic:
      return "auto";
    case TruthMode::closed_form:
      return "closed_form";
    case TruthMode::taylor_surrogate:
      return "taylor";
    case TruthMode::fine_reference:
      return "fine";
  }
  return "auto";
}

std::vector<double> read_doubles(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list of numbers");
  std::vector<double> out;
  for (const auto& x : j) {
    if (!x.is_number()) fail(path, "expected a list of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

void read_train(const json& j, TrainConfig& t) {
  const std::string p = "train";
  reject_unknown(j, p,
                 {"stages", "order", "h_range", "batch_size", "max_iterations", "tolerance",
                  "regularizer_weight", "optimizer", "damping", "learning_rate", "beta1", "beta2",
                  "epsilon", "learning_rate_decay", "warmup_iterations", "reference",
                  "surrogate_order", "fixed_dataset", "threads", "restarts", "loss_floor"});
  read(j, p, "stages", t.stages);
  read(j, p, "order", t.order);
  if (j.contains("h_range")) {
    const auto r = read_range(j["h_range"], "train.h_range");
    t.h_min = r.lo;
    t.h_max = r.hi;
  }
  read(j, p, "batch_size", t.batch_size);
  read(j, p, "max_iterations", t.max_iterations);
  if (j.contains("tolerance") && j["tolerance"].is_string() && j["tolerance"] == "inf") {
    t.tolerance = std::numeric_limits<double>::infinity();
  } else {
    read(j, p, "tolerance", t.tolerance);
  }
  read(j, p, "regularizer_weight", t.regularizer_weight);
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    const auto parsed = o.is_string() ? parse_optimizer(o.get<std::string>()) : std::nullopt;
    if (!parsed) fail("train.optimizer", "expected \"adam\" or \"levenberg_marquardt\"");
    t.optimizer = *parsed;
  }
  read(j, p, "damping", t.damping);
  read(j, p, "learning_rate", t.adam.learning_rate);
  read(j, p, "beta1", t.adam.beta1);
  read(j, p, "beta2", t.adam.beta2);
  read(j, p, "epsilon", t.adam.epsilon);
  read(j, p, "learning_rate_decay", t.learning_rate_decay);
  read(j, p, "warmup_iterations", t.warmup_iterations);
  read(j, p, "reference", t.reference);
  read(j, p, "surrogate_order", t.surrogate_order);
  read(j, p, "fixed_dataset", t.fixed_dataset);
  read(j, p, "threads", t.threads);
  read(j, p, "restarts", t.restarts);
  read(j, p, "loss_floor", t.loss_floor);
}

json write_train(const TrainConfig& t) {
  json tol = std::isinf(t.tolerance) ? json("inf") : json(t.tolerance);
  return {{"stages", t.stages},
          {"order", t.order},
          {"h_range", {t.h_min, t.h_max}},
          {"batch_size", t.batch_size},
          {"max_iterations", t.max_iterations},
          {"tolerance", tol},
          {"regularizer_weight", t.regularizer_weight},
          {"optimizer", std::string(to_string(t.optimizer))},
          {"damping", t.damping},
          {"learning_rate", t.adam.learning_rate},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"epsilon", t.adam.epsilon},
          {"learning_rate_decay", t.learning_rate_decay},
          {"warmup_iterations", t.warmup_iterations},
          {"reference", t.reference},
          {"surrogate_order", t.surrogate_order},
          {"fixed_dataset", t.fixed_dataset},
          {"threads", t.threads},
          {"restarts", t.restarts},
          {"loss_floor", t.loss_floor}};
}

void read_eval(const json& j, EvalSettings& e, bool& horizon_given) {
  const std::string p = "eval";
  reject_unknown(j, p,
                 {"h", "h_min", "h_max", "h_count", "horizon", "tasks", "truth", "surrogate_order",
                  "fine_ratio", "reference", "threads", "variants"});
  if (j.contains("h")) e.h = read_doubles(j["h"], "eval.h");
  read(j, p, "h_min", e.h_min);
  read(j, p, "h_max", e.h_max);
  read(j, p, "h_count", e.h_count);
  horizon_given = j.contains("horizon");
  read(j, p, "horizon", e.horizon);
  read(j, p, "tasks", e.tasks);
  if (j.contains("truth")) e.truth.mode = read_truth_mode(j["truth"], "eval.truth");
  read(j, p, "surrogate_order", e.truth.surrogate_order);
  read(j, p, "fine_ratio", e.truth.fine_ratio);
  read(j, p, "reference", e.reference);
  read(j, p, "threads", e.threads);
  if (j.contains("variants")) {
    const auto& vs = j["variants"];
    if (!vs.is_array()) fail("eval.variants", "expected a list");
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const std::string vp = "eval.variants[" + std::to_string(i) + "]";
      reject_unknown(vs[i], vp, {"name", "family", "h"});
      FamilyVariant v;
      if (!vs[i].contains("name") || !vs[i]["name"].is_string()) fail(vp + ".name", "required string");
      v.name = vs[i]["name"].get<std::string>();
      if (!vs[i].contains("family")) fail(vp + ".family", "required");
      v.family = read_family(vs[i]["family"], vp + ".family");
      if (vs[i].contains("h")) v.h = read_doubles(vs[i]["h"], vp + ".h");
      e.variants.push_back(std::move(v));
    }
  }
}

json write_eval(const EvalSettings& e) {
  json variants = json::array();
  for (const auto& v : e.variants) {
    json jv = {{"name", v.name}, {"family", write_family(v.family)}};
    if (v.h) jv["h"] = *v.h;
    variants.push_back(std::move(jv));
  }
  return {{"h", e.h},
          {"h_min", e.h_min},
          {"h_max", e.h_max},
          {"h_count", e.h_count},
          {"horizon", e.horizon},
          {"tasks", e.tasks},
          {"truth", truth_mode_name(e.truth.mode)},
          {"surrogate_order", e.truth.surrogate_order},
          {"fine_ratio", e.truth.fine_ratio},
          {"reference", e.reference},
          {"threads", e.threads},
          {"variants", std::move(variants)}};
}

std::string line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

EvalGrid EvalSettings::grid() const {
  EvalGrid g;
  g.h = h.empty() ? EvalGrid::log_spaced(h_min, h_max, h_count) : h;
  g.horizon = horizon;
  g.tasks = tasks;
  g.truth = truth;
  g.threads = threads;
  return g;
}

void ExperimentConfig::validate() const {
  auto wrap = [](const std::string& section, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config: " + section + ": " + e.what());
    }
  };
  if (name.empty() || name.find('/') != std::string::npos)
    fail("name", "must be a non-empty file-name-safe string");
  wrap("family", [&] { family.validate(); });
  wrap("train", [&] { train.validate(); });
  wrap("eval", [&] {
    if (eval.h.empty() && (!(eval.h_min > 0.0) || !(eval.h_max >= eval.h_min) || eval.h_count < 3))
      throw std::invalid_argument("need 0 < h_min <= h_max and h_count >= 3");
    eval.grid().validate();
  });
  wrap("eval.reference", [&] { classic_tableau(eval.reference); });
  for (std::size_t i = 0; i < eval.variants.size(); ++i) {
    const auto& v = eval.variants[i];
    wrap("eval.variants[" + std::to_string(i) + "]", [&] {
      if (v.name.empty() || v.name.find('/') != std::string::npos)
        throw std::invalid_argument("name must be non-empty and file-name-safe");
      v.family.validate();
      if (v.h) {
        EvalGrid g = eval.grid();
        g.h = *v.h;
        g.validate();
      }
    });
  }
  wrap("scaling", [&] {
    if (scaling.kind != FieldKind::linear_nd && scaling.kind != FieldKind::nonlinear_nd)
      throw std::invalid_argument("kind must be linear_nd or nonlinear_nd");
    if (scaling.dims.empty()) throw std::invalid_argument("dims must be non-empty");
    for (std::size_t i = 0; i < scaling.dims.size(); ++i) {
      if (scaling.dims[i] < 1) throw std::invalid_argument("dims must be >= 1");
      if (i > 0 && scaling.dims[i] <= scaling.dims[i - 1])
        throw std::invalid_argument("dims must be strictly ascending");
    }
  });
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: parse error at " + line_of(text, e.byte == 0 ? 0 : e.byte - 1) +
                      ": " + e.what());
  }
  reject_unknown(root, "", {"name", "seed", "output_dir", "family", "train", "eval", "scaling"});
  ExperimentConfig c;
  read(root, "", "name", c.name);
  read(root, "", "seed", c.seed);
  read(root, "", "output_dir", c.output_dir);
  if (!root.contains("family")) fail("family", "required");
  c.family = read_family(root["family"], "family");
  if (root.contains("train")) read_train(root["train"], c.train);
  c.train.seed = c.seed;
  bool horizon_given = false;
  if (root.contains("eval")) read_eval(root["eval"], c.eval, horizon_given);
  if (!horizon_given)
    c.eval.horizon = (c.family.kind == FieldKind::van_der_pol ||
                      c.family.kind == FieldKind::brusselator)
                         ? 2.0
                         : 1.0;
  if (root.contains("scaling")) {
    const auto& s = root["scaling"];
    reject_unknown(s, "scaling", {"kind", "dims"});
    if (s.contains("kind")) c.scaling.kind = read_kind(s["kind"], "scaling.kind");
    if (s.contains("dims")) {
      if (!s["dims"].is_array()) fail("scaling.dims", "expected a list of integers");
      c.scaling.dims.clear();
      for (const auto& d : s["dims"]) {
        if (!d.is_number_unsigned()) fail("scaling.dims", "expected a list of integers");
        c.scaling.dims.push_back(d.get<std::size_t>());
      }
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  json root = {{"name", c.name},
               {"seed", c.seed},
               {"output_dir", c.output_dir},
               {"family", write_family(c.family)},
               {"train", write_train(c.train)},
               {"eval", write_eval(c.eval)},
               {"scaling",
                {{"kind", std::string(to_string(c.scaling.kind))}, {"dims", c.scaling.dims}}}};
  return root.dump(2) + "\n";
}

}  // namespace rknn
