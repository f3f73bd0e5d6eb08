#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace rknn {

/// Largest number of trainable parameters a Dual can carry. An m-stage
/// integrator has m(m-1)/2 + m parameters, so this admits up to 7 stages.
inline constexpr std::size_t kMaxDualSize = 32;

/// Forward-mode derivative scalar: a value plus the gradient of that value
/// with respect to a fixed-length vector of trainable parameters.
///
/// A Dual with gradient length 0 is a constant and combines with Duals of
/// any length. Two non-constant operands must have equal lengths.
class Dual {
 public:
  constexpr Dual() = default;
  constexpr Dual(double value) : value_(value) {}  // NOLINT: implicit constant

  static Dual constant(double value, std::size_t size) {
    check_size(size);
    Dual d(value);
    d.size_ = static_cast<std::uint32_t>(size);
    return d;
  }

  /// The parameter with index `k` out of `size`: gradient is the k-th unit vector.
  static Dual seed(double value, std::size_t size, std::size_t k) {
    Dual d = constant(value, size);
    if (k >= size) throw std::out_of_range("Dual::seed: parameter index out of range");
    d.grad_[k] = 1.0;
    return d;
  }

  double value() const { return value_; }
  std::size_t size() const { return size_; }
  std::span<const double> grad() const { return {grad_.data(), size_}; }
  double grad(std::size_t k) const { return k < size_ ? grad_[k] : 0.0; }

  std::vector<double> gradient() const { return {grad_.begin(), grad_.begin() + size_}; }

  Dual& operator+=(const Dual& o) {
    const auto n = join(o);
    value_ += o.value_;
    for (std::uint32_t k = 0; k < n && k < o.size_; ++k) grad_[k] += o.grad_[k];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    const auto n = join(o);
    value_ -= o.value_;
    for (std::uint32_t k = 0; k < n && k < o.size_; ++k) grad_[k] -= o.grad_[k];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    const auto n = join(o);
    for (std::uint32_t k = 0; k < n; ++k) grad_[k] = grad_[k] * o.value_ + value_ * o.grad_[k];
    value_ *= o.value_;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    if (o.value_ == 0.0) throw std::domain_error("Dual: division by zero");
    const auto n = join(o);
    const double inv = 1.0 / o.value_;
    const double q = value_ * inv;
    for (std::uint32_t k = 0; k < n; ++k) grad_[k] = (grad_[k] - q * o.grad_[k]) * inv;
    value_ = q;
    return *this;
  }
  Dual& operator*=(double c) {
    value_ *= c;
    for (std::uint32_t k = 0; k < size_; ++k) grad_[k] *= c;
    return *this;
  }
  Dual& operator+=(double c) {
    value_ += c;
    return *this;
  }
  Dual& operator-=(double c) {
    value_ -= c;
    return *this;
  }

  Dual operator-() const {
    Dual r = *this;
    r.value_ = -r.value_;
    for (std::uint32_t k = 0; k < size_; ++k) r.grad_[k] = -r.grad_[k];
    return r;
  }

 private:
  static void check_size(std::size_t size) {
    if (size > kMaxDualSize) throw std::length_error("Dual: gradient length exceeds kMaxDualSize");
  }

  // Gradient entries past size_ are always zero, so widening a constant is free.
  std::uint32_t join(const Dual& o) {
    if (o.size_ != size_) {
      if (size_ == 0) {
        size_ = o.size_;
      } else if (o.size_ != 0) {
        throw std::invalid_argument("Dual: gradient length mismatch");
      }
    }
    return size_;
  }

  double value_ = 0.0;
  std::uint32_t size_ = 0;
  std::array<double, kMaxDualSize> grad_{};
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }
inline Dual operator+(Dual a, double b) { return a += b; }
inline Dual operator+(double a, Dual b) { return b += a; }
inline Dual operator-(Dual a, double b) { return a -= b; }
inline Dual operator-(double a, const Dual& b) { return -b + a; }
inline Dual operator*(Dual a, double b) { return a *= b; }
inline Dual operator*(double a, Dual b) { return b *= a; }
inline Dual operator/(Dual a, double b) {
  if (b == 0.0) throw std::domain_error("Dual: division by zero");
  return a *= 1.0 / b;
}
inline Dual operator/(double a, const Dual& b) { return Dual(a) / b; }

inline Dual exp(const Dual& a) {
  const double e = std::exp(a.value());
  Dual r = a;
  r -= a.value();
  r *= e;
  r += e;
  return r;
}

/// Value part of a scalar, so generic code can read off plain numbers.
inline double value_of(double x) { return x; }
inline long double value_of(long double x) { return x; }
inline double value_of(const Dual& x) { return x.value(); }

inline bool is_finite(double x) { return std::isfinite(x); }
inline bool is_finite(long double x) { return std::isfinite(x); }
inline bool is_finite(const Dual& x) {
  if (!std::isfinite(x.value())) return false;
  for (double g : x.grad())
    if (!std::isfinite(g)) return false;
  return true;
}

/// Numerically stable softmax: subtracts the largest logit before exponentiating.
template <class S>
std::vector<S> softmax(std::span<const S> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  double shift = value_of(logits[0]);
  for (const auto& z : logits) shift = std::max(shift, value_of(z));
  std::vector<S> out;
  out.reserve(logits.size());
  S total(0.0);
  for (const auto& z : logits) {
    using std::exp;
    out.push_back(exp(z - shift));
    total += out.back();
  }
  for (auto& e : out) e = e / total;
  return out;
}

template <class S>
std::vector<S> softmax(const std::vector<S>& logits) {
  return softmax(std::span<const S>(logits));
}

}  // namespace rknn
