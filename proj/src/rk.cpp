#include "rknn/rk.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace rknn {

RknnParams<double> unflatten(std::size_t stages, std::span<const double> flat) {
  if (stages < 1) throw std::invalid_argument("RknnParams: need at least one stage");
  if (flat.size() != RknnParams<double>::parameter_count(stages))
    throw std::invalid_argument("RknnParams: flat parameter vector has wrong length");
  const std::size_t na = packed_size(stages);
  return {stages, {flat.begin(), flat.begin() + na}, {flat.begin() + na, flat.end()}};
}

std::vector<double> flatten(const RknnParams<double>& p) {
  std::vector<double> out(p.a);
  out.insert(out.end(), p.logits.begin(), p.logits.end());
  return out;
}

RknnParams<Dual> seeded(const RknnParams<double>& p) {
  const std::size_t n = p.parameter_count();
  RknnParams<Dual> out{p.stages, {}, {}};
  std::size_t k = 0;
  for (double v : p.a) out.a.push_back(Dual::seed(v, n, k++));
  for (double v : p.logits) out.logits.push_back(Dual::seed(v, n, k++));
  return out;
}

RknnParams<double> params_from_weights(std::size_t stages, std::vector<double> a,
                                       std::span<const double> weights) {
  if (weights.size() != stages || a.size() != packed_size(stages))
    throw std::invalid_argument("params_from_weights: size mismatch");
  std::vector<double> z;
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("params_from_weights: weights must be positive");
    z.push_back(std::log(w));
  }
  return {stages, std::move(a), std::move(z)};
}

const std::vector<ClassicTableau>& classic_tableaux() {
  static const std::vector<ClassicTableau> catalog{
      {"euler", 1, {1, {}, {1.0}}},
      {"rk2", 2, {2, {1.0}, {0.5, 0.5}}},
      {"rk3_1", 3, {3, {2.0 / 3.0, -1.0 / 2.0, 1.0 / 2.0}, {-1.0 / 4.0, 3.0 / 4.0, 1.0 / 2.0}}},
      {"rk3_2", 3, {3, {2.0 / 3.0, 1.0 / 6.0, 1.0 / 2.0}, {1.0 / 4.0, 1.0 / 4.0, 1.0 / 2.0}}},
      {"rk3_3", 3, {3, {1.0 / 2.0, -1.0, 2.0}, {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0}}},
      {"rk4", 4,
       {4, {0.5, 0.0, 0.5, 0.0, 0.0, 1.0}, {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0}}},
      // Butcher's seven-stage sixth-order method.
      {"rk6", 6,
       {7,
        {1.0 / 3.0,                                                  //
         0.0, 2.0 / 3.0,                                             //
         1.0 / 12.0, 1.0 / 3.0, -1.0 / 12.0,                         //
         -1.0 / 16.0, 9.0 / 8.0, -3.0 / 16.0, -3.0 / 8.0,            //
         0.0, 9.0 / 8.0, -3.0 / 8.0, -3.0 / 4.0, 1.0 / 2.0,          //
         9.0 / 44.0, -9.0 / 11.0, 63.0 / 44.0, 18.0 / 11.0, 0.0, -16.0 / 11.0},
        {11.0 / 120.0, 0.0, 27.0 / 40.0, 27.0 / 40.0, -4.0 / 15.0, -4.0 / 15.0, 11.0 / 120.0}}},
  };
  return catalog;
}

const ClassicTableau& classic_tableau(const std::string& label) {
  const std::string key = label == "rk3" ? "rk3_3" : label;
  for (const auto& t : classic_tableaux())
    if (t.label == key) return t;
  throw std::invalid_argument("unknown classic tableau '" + label + "'");
}

TableauRecord TableauRecord::from_params(const RknnParams<double>& p, std::string label) {
  return {std::move(label), p.coefficients(), p.logits};
}

TableauRecord TableauRecord::from_classic(const ClassicTableau& t) {
  return {t.label, t.coef, std::nullopt};
}

std::optional<RknnParams<double>> TableauRecord::params() const {
  if (!logits) return std::nullopt;
  return RknnParams<double>{coef.stages, coef.a, *logits};
}

namespace {

void write_row(std::ostream& os, const std::string& key, std::span<const double> values) {
  os << key << " =";
  char buf[40];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, " %.16e", v);
    os << buf;
  }
  os << '\n';
}

}  // namespace

void write_tableau(std::ostream& os, const TableauRecord& t) {
  const auto& c = t.coef;
  os << "label = " << t.label << '\n';
  os << "stages = " << c.stages << '\n';
  for (std::size_t i = 1; i < c.stages; ++i)
    write_row(os, "a" + std::to_string(i),
              std::span<const double>(c.a).subspan(packed_index(i, 0), i));
  if (t.logits) write_row(os, "z", *t.logits);
  write_row(os, "b", c.b);
}

std::string format_tableau(const TableauRecord& t) {
  std::ostringstream os;
  write_tableau(os, t);
  return os.str();
}

TableauRecord parse_tableau(std::istream& is) {
  std::map<std::string, std::string> fields;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("tableau line " + std::to_string(lineno) + ": expected 'key = values'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    fields[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto numbers = [&](const std::string& key) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw std::runtime_error("tableau: missing key '" + key + "'");
    std::istringstream ss(it->second);
    std::vector<double> out;
    std::string tok;
    while (ss >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) throw std::runtime_error("tableau: bad number '" + tok + "' in " + key);
      out.push_back(v);
    }
    return out;
  };
  TableauRecord t;
  t.label = fields.count("label") ? fields["label"] : "unnamed";
  const auto stages = numbers("stages");
  if (stages.size() != 1 || stages[0] < 1 || stages[0] != std::floor(stages[0]))
    throw std::runtime_error("tableau: 'stages' must be a positive integer");
  t.coef.stages = static_cast<std::size_t>(stages[0]);
  for (std::size_t i = 1; i < t.coef.stages; ++i) {
    const auto row = numbers("a" + std::to_string(i));
    if (row.size() != i) throw std::runtime_error("tableau: row a" + std::to_string(i) + " has wrong length");
    t.coef.a.insert(t.coef.a.end(), row.begin(), row.end());
  }
  t.coef.b = numbers("b");
  if (t.coef.b.size() != t.coef.stages) throw std::runtime_error("tableau: 'b' has wrong length");
  if (fields.count("z")) {
    t.logits = numbers("z");
    if (t.logits->size() != t.coef.stages) throw std::runtime_error("tableau: 'z' has wrong length");
  }
  return t;
}

TableauRecord load_tableau(const std::string& path_or_label) {
  std::ifstream in(path_or_label);
  if (in) return parse_tableau(in);
  try {
    return TableauRecord::from_classic(classic_tableau(path_or_label));
  } catch (const std::invalid_argument&) {
    throw std::runtime_error("cannot open tableau '" + path_or_label +
                             "' (not a file or classic label)");
  }
}

}  // namespace rknn
