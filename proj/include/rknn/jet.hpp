#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include "rknn/dual.hpp"

namespace rknn {

/// Thrown when jets of different order or dimension are combined.
class JetMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Truncated univariate power series c[0] + c[1] h + ... + c[K] h^K + O(h^{K+1}).
///
/// The coefficient type S is any scalar algebra (double, Dual). Series form a
/// commutative ring under truncated arithmetic, which is all the polynomial
/// vector fields need.
template <class S>
class Series {
 public:
  Series() = default;
  explicit Series(std::size_t order) : c_(order + 1, S(0.0)) {}
  Series(std::size_t order, S constant) : c_(order + 1, S(0.0)) { c_[0] = std::move(constant); }
  explicit Series(std::vector<S> coeffs) : c_(std::move(coeffs)) {
    if (c_.empty()) throw JetMismatch("Series: need at least one coefficient");
  }

  std::size_t order() const { return c_.size() - 1; }
  const S& operator[](std::size_t i) const { return c_[i]; }
  S& operator[](std::size_t i) { return c_[i]; }
  std::span<const S> coeffs() const { return c_; }

  /// Multiplication by h: every coefficient moves up one degree, the top one drops.
  Series shifted() const {
    Series r(order());
    for (std::size_t i = order(); i > 0; --i) r.c_[i] = c_[i - 1];
    return r;
  }

  template <class R>
  R evaluate(R h) const {
    R acc = R(value_of(c_.back()));
    for (std::size_t i = c_.size() - 1; i-- > 0;) acc = acc * h + R(value_of(c_[i]));
    return acc;
  }

  Series& operator+=(const Series& o) {
    check(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Series& operator-=(const Series& o) {
    check(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Series& operator*=(double k) {
    for (auto& x : c_) x *= k;
    return *this;
  }
  Series& operator+=(double k) {
    c_[0] += k;
    return *this;
  }

  // Cauchy product truncated at the common order.
  friend Series operator*(const Series& a, const Series& b) {
    a.check(b);
    const std::size_t n = a.c_.size();
    Series r(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
      S acc = a.c_[0] * b.c_[k];
      for (std::size_t i = 1; i <= k; ++i) acc += a.c_[i] * b.c_[k - i];
      r.c_[k] = std::move(acc);
    }
    return r;
  }

  friend Series operator+(Series a, const Series& b) { return a += b; }
  friend Series operator-(Series a, const Series& b) { return a -= b; }
  friend Series operator*(Series a, double k) { return a *= k; }
  friend Series operator*(double k, Series a) { return a *= k; }
  friend Series operator+(Series a, double k) { return a += k; }
  friend Series operator+(double k, Series a) { return a += k; }
  friend Series operator-(Series a, double k) { return a += -k; }
  friend Series operator-(double k, const Series& a) { return -a + k; }
  Series operator-() const {
    Series r = *this;
    for (auto& x : r.c_) x = -x;
    return r;
  }

  // Scalar-algebra coefficient times series, e.g. a Dual stage weight times a jet.
  template <class C>
    requires(!std::is_same_v<C, double> && !std::is_same_v<C, Series>)
  friend Series operator*(const C& k, Series a) {
    for (auto& x : a.c_) x = k * x;
    return a;
  }

  friend bool operator==(const Series&, const Series&) = default;

 private:
  void check(const Series& o) const {
    if (o.c_.size() != c_.size()) throw JetMismatch("Series: order mismatch");
  }

  std::vector<S> c_;
};

template <class S>
bool is_finite(const Series<S>& s) {
  for (const auto& c : s.coeffs())
    if (!is_finite(c)) return false;
  return true;
}

/// Truncated power series in h with d-vector coefficients:
/// sum_{i=0}^{K} coeffs[i] h^i + O(h^{K+1}). Stored component-major so a
/// vector field can be applied to the d component series directly.
template <class S>
class Jet {
 public:
  Jet() = default;
  Jet(std::size_t order, std::size_t dim) : comps_(dim, Series<S>(order)), order_(order) {}
  explicit Jet(std::vector<Series<S>> comps) : comps_(std::move(comps)) {
    if (comps_.empty()) throw JetMismatch("Jet: need at least one component");
    order_ = comps_.front().order();
    for (const auto& c : comps_)
      if (c.order() != order_) throw JetMismatch("Jet: components of unequal order");
  }

  /// The constant jet y + 0 h + ... + 0 h^K.
  template <class V>
  static Jet constant(std::span<const V> y, std::size_t order) {
    Jet j(order, y.size());
    for (std::size_t k = 0; k < y.size(); ++k) j.comps_[k][0] = S(y[k]);
    return j;
  }

  /// Builds a jet from coefficient vectors coeffs[i] (each of length d).
  static Jet from_coeffs(const std::vector<std::vector<S>>& coeffs) {
    if (coeffs.empty()) throw JetMismatch("Jet: need at least one coefficient");
    Jet j(coeffs.size() - 1, coeffs[0].size());
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      if (coeffs[i].size() != j.dim()) throw JetMismatch("Jet: coefficient dimension mismatch");
      for (std::size_t k = 0; k < j.dim(); ++k) j.comps_[k][i] = coeffs[i][k];
    }
    return j;
  }

  std::size_t order() const { return order_; }
  std::size_t dim() const { return comps_.size(); }

  const Series<S>& component(std::size_t k) const { return comps_[k]; }
  Series<S>& component(std::size_t k) { return comps_[k]; }
  std::span<const Series<S>> components() const { return comps_; }
  std::span<Series<S>> components() { return comps_; }

  std::vector<S> coeff(std::size_t i) const {
    if (i > order_) throw std::out_of_range("Jet: coefficient index exceeds order");
    std::vector<S> out;
    out.reserve(dim());
    for (const auto& c : comps_) out.push_back(c[i]);
    return out;
  }

  /// i-th derivative at h = 0, which is i! coeffs[i].
  std::vector<S> derivative_at_zero(std::size_t i) const {
    if (i > order_) throw std::out_of_range("Jet: derivative order exceeds jet order");
    double fact = 1.0;
    for (std::size_t k = 2; k <= i; ++k) fact *= static_cast<double>(k);
    auto out = coeff(i);
    for (auto& x : out) x *= fact;
    return out;
  }

  Jet shifted() const {
    Jet r = *this;
    for (auto& c : r.comps_) c = c.shifted();
    return r;
  }

  Jet& operator+=(const Jet& o) {
    check(o);
    for (std::size_t k = 0; k < comps_.size(); ++k) comps_[k] += o.comps_[k];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    check(o);
    for (std::size_t k = 0; k < comps_.size(); ++k) comps_[k] -= o.comps_[k];
    return *this;
  }
  Jet& operator*=(double c) {
    for (auto& s : comps_) s *= c;
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(double c, Jet a) { return a *= c; }

  /// Component-wise Cauchy product.
  friend Jet mul_componentwise(const Jet& a, const Jet& b) {
    a.check(b);
    Jet r = a;
    for (std::size_t k = 0; k < a.comps_.size(); ++k) r.comps_[k] = a.comps_[k] * b.comps_[k];
    return r;
  }

  friend bool operator==(const Jet&, const Jet&) = default;

 private:
  void check(const Jet& o) const {
    if (o.order_ != order_ || o.comps_.size() != comps_.size())
      throw JetMismatch("Jet: order or dimension mismatch");
  }

  std::vector<Series<S>> comps_;
  std::size_t order_ = 0;
};

template <class S>
Jet<S> jet_add(const Jet<S>& a, const Jet<S>& b) {
  return a + b;
}
template <class S>
Jet<S> jet_scale(double c, const Jet<S>& a) {
  return c * a;
}
template <class S>
Jet<S> jet_shift(const Jet<S>& a) {
  return a.shifted();
}

}  // namespace rknn
