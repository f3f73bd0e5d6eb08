#include "rknn/fields.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace rknn {

namespace {

constexpr std::array<std::pair<FieldKind, std::string_view>, 6> kKindNames{{
    {FieldKind::linear_1d, "linear"},
    {FieldKind::square_1d, "square"},
    {FieldKind::van_der_pol, "van_der_pol"},
    {FieldKind::brusselator, "brusselator"},
    {FieldKind::linear_nd, "linear_nd"},
    {FieldKind::nonlinear_nd, "nonlinear_nd"},
}};

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::size_t param_count(FieldKind kind, std::size_t dim) {
  switch (kind) {
    case FieldKind::linear_1d:
    case FieldKind::square_1d:
    case FieldKind::van_der_pol:
      return 1;
    case FieldKind::brusselator:
      return 2;
    case FieldKind::linear_nd:
      return dim * dim;
    case FieldKind::nonlinear_nd:
      return dim;
  }
  return 0;
}

std::size_t natural_dim(FieldKind kind) {
  switch (kind) {
    case FieldKind::linear_1d:
    case FieldKind::square_1d:
      return 1;
    case FieldKind::van_der_pol:
    case FieldKind::brusselator:
      return 2;
    default:
      return 0;
  }
}

}  // namespace

std::string_view to_string(FieldKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

std::optional<FieldKind> parse_field_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  return std::nullopt;
}

VectorField VectorField::linear_1d(double a) {
  require(a > 0.0, "linear field requires a > 0");
  return {FieldKind::linear_1d, 1, {a}};
}

VectorField VectorField::square_1d(double a) {
  require(a > 0.0, "square field requires a > 0");
  return {FieldKind::square_1d, 1, {a}};
}

VectorField VectorField::van_der_pol(double a) {
  require(std::isfinite(a), "van der Pol parameter must be finite");
  return {FieldKind::van_der_pol, 2, {a}};
}

VectorField VectorField::brusselator(double a, double b) {
  require(a > 0.0 && b > 0.0, "brusselator requires a, b > 0");
  return {FieldKind::brusselator, 2, {a, b}};
}

VectorField VectorField::linear_nd(std::size_t dim, std::vector<double> matrix) {
  require(dim >= 1, "linear_nd requires dim >= 1");
  require(matrix.size() == dim * dim, "linear_nd matrix must have dim*dim entries");
  return {FieldKind::linear_nd, dim, std::move(matrix)};
}

VectorField VectorField::nonlinear_nd(std::vector<double> diagonal) {
  require(!diagonal.empty(), "nonlinear_nd requires dim >= 1");
  const std::size_t dim = diagonal.size();
  return {FieldKind::nonlinear_nd, dim, std::move(diagonal)};
}

VectorField VectorField::make(FieldKind kind, std::size_t dim, std::vector<double> params) {
  switch (kind) {
    case FieldKind::linear_1d:
      require(params.size() == 1, "linear field takes one parameter");
      return linear_1d(params[0]);
    case FieldKind::square_1d:
      require(params.size() == 1, "square field takes one parameter");
      return square_1d(params[0]);
    case FieldKind::van_der_pol:
      require(params.size() == 1, "van der Pol field takes one parameter");
      return van_der_pol(params[0]);
    case FieldKind::brusselator:
      require(params.size() == 2, "brusselator takes two parameters");
      return brusselator(params[0], params[1]);
    case FieldKind::linear_nd:
      return linear_nd(dim, std::move(params));
    case FieldKind::nonlinear_nd:
      require(params.size() == dim, "nonlinear_nd takes one parameter per dimension");
      return nonlinear_nd(std::move(params));
  }
  throw std::invalid_argument("unknown field kind");
}

TaskInstance::TaskInstance(VectorField f, std::vector<double> initial)
    : field(std::move(f)), y0(std::move(initial)) {
  require(y0.size() == field.dim(), "initial condition dimension does not match field");
}

void TaskFamily::validate() const {
  const std::string name(to_string(kind));
  require(dim >= 1, name + ": dim must be >= 1");
  if (const auto nd = natural_dim(kind); nd != 0)
    require(dim == nd, name + ": dim must be " + std::to_string(nd));
  const std::size_t expect = kind == FieldKind::linear_nd ? 1 : param_count(kind, dim);
  require(param_ranges.size() == expect,
          name + ": expected " + std::to_string(expect) + " parameter ranges");
  require(y0_box.size() == dim, name + ": y0 box must have one range per dimension");
  auto check = [&](const UniformRange& r, const std::string& what) {
    require(std::isfinite(r.lo) && std::isfinite(r.hi), name + ": " + what + " range not finite");
    require(r.lo <= r.hi, name + ": " + what + " range is inverted");
  };
  for (std::size_t i = 0; i < param_ranges.size(); ++i)
    check(param_ranges[i], "parameter " + std::to_string(i));
  for (std::size_t i = 0; i < y0_box.size(); ++i) check(y0_box[i], "y0[" + std::to_string(i) + "]");

  // Sampled instances must satisfy the field invariants for every draw.
  switch (kind) {
    case FieldKind::linear_1d:
    case FieldKind::square_1d:
      require(param_ranges[0].lo > 0.0, name + ": parameter a must be > 0");
      break;
    case FieldKind::brusselator:
      require(param_ranges[0].lo > 0.0 && param_ranges[1].lo > 0.0,
              name + ": parameters a, b must be > 0");
      break;
    default:
      break;
  }
}

namespace families {

TaskFamily linear() { return {FieldKind::linear_1d, 1, {{1.0, 5.0}}, {{-5.0, 5.0}}}; }

TaskFamily square() { return {FieldKind::square_1d, 1, {{0.1, 0.5}}, {{1.0, 3.0}}}; }

TaskFamily van_der_pol() {
  return {FieldKind::van_der_pol, 2, {{1.0, 2.0}}, {{-4.0, -3.0}, {0.0, 2.0}}};
}

TaskFamily brusselator() {
  return {FieldKind::brusselator, 2, {{1.0, 1.0}, {0.5, 2.0}}, {{1.5, 3.0}, {2.0, 3.0}}};
}

TaskFamily linear_nd(std::size_t dim) {
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  return {FieldKind::linear_nd, dim, {{-2.0 * s, -s}}, std::vector<UniformRange>(dim, {-3.0, 3.0})};
}

TaskFamily nonlinear_nd(std::size_t dim) {
  TaskFamily f{FieldKind::nonlinear_nd, dim, {}, std::vector<UniformRange>(dim, {1.0, 3.0})};
  // 1-based i: B_ii ~ U(-2 + 0.05(i-1), -2 + 0.05(i+1)).
  for (std::size_t i = 1; i <= dim; ++i) {
    const double di = static_cast<double>(i);
    f.param_ranges.push_back({-2.0 + 0.05 * (di - 1.0), -2.0 + 0.05 * (di + 1.0)});
  }
  return f;
}

TaskFamily preset(FieldKind kind, std::size_t dim) {
  switch (kind) {
    case FieldKind::linear_1d:
      return linear();
    case FieldKind::square_1d:
      return square();
    case FieldKind::van_der_pol:
      return van_der_pol();
    case FieldKind::brusselator:
      return brusselator();
    case FieldKind::linear_nd:
      return linear_nd(dim == 0 ? 1 : dim);
    case FieldKind::nonlinear_nd:
      return nonlinear_nd(dim == 0 ? 1 : dim);
  }
  throw std::invalid_argument("unknown field kind");
}

}  // namespace families

TaskInstance sample(const TaskFamily& family, Rng& rng) {
  family.validate();
  auto draw = [&rng](const UniformRange& r) {
    if (r.lo == r.hi) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };
  std::vector<double> params;
  if (family.kind == FieldKind::linear_nd) {
    params.resize(family.dim * family.dim);
    for (auto& x : params) x = draw(family.param_ranges[0]);
  } else {
    for (const auto& r : family.param_ranges) params.push_back(draw(r));
  }
  std::vector<double> y0;
  y0.reserve(family.dim);
  for (const auto& r : family.y0_box) y0.push_back(draw(r));
  return {VectorField::make(family.kind, family.dim, std::move(params)), std::move(y0)};
}

bool has_closed_form(FieldKind kind) {
  return kind == FieldKind::linear_1d || kind == FieldKind::square_1d;
}

}  // namespace rknn
