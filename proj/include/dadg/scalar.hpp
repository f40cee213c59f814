#pragma once

#include <cmath>
#include <type_traits>

namespace dadg {

// Forward-mode dual number: carries a value and one directional derivative.
// Running the (scalar-generic) backward pass on Dual<T> with the direction
// seeded into the parameters yields exact Hessian-vector products.
template <typename T>
struct Dual {
  T v{};
  T d{};

  Dual() = default;
  Dual(T value) : v(value) {}  // NOLINT: implicit by design
  Dual(T value, T deriv) : v(value), d(deriv) {}

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
};

template <typename T> Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <typename T> Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <typename T> Dual<T> operator-(const Dual<T>& a) { return {-a.v, -a.d}; }
template <typename T> Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <typename T> Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T inv = T(1) / b.v;
  return {a.v * inv, (a.d - a.v * b.d * inv) * inv};
}

template <typename T> Dual<T> operator*(T s, const Dual<T>& a) { return {s * a.v, s * a.d}; }
template <typename T> Dual<T> operator*(const Dual<T>& a, T s) { return {a.v * s, a.d * s}; }
template <typename T> Dual<T> operator+(const Dual<T>& a, T s) { return {a.v + s, a.d}; }
template <typename T> Dual<T> operator-(const Dual<T>& a, T s) { return {a.v - s, a.d}; }

template <typename T> Dual<T> exp(const Dual<T>& a) {
  T e = std::exp(a.v);
  return {e, e * a.d};
}
template <typename T> Dual<T> log(const Dual<T>& a) { return {std::log(a.v), a.d / a.v}; }
template <typename T> Dual<T> log1p(const Dual<T>& a) {
  return {std::log1p(a.v), a.d / (T(1) + a.v)};
}

using std::exp;
using std::log;
using std::log1p;

// Value part of a scalar; identity for plain floating point.
template <typename T> constexpr T primal(T x) { return x; }
template <typename T> constexpr T primal(const Dual<T>& x) { return x.v; }

template <typename S> struct scalar_traits {
  using base = S;
  static S from_double(double x) { return static_cast<S>(x); }
};
template <typename T> struct scalar_traits<Dual<T>> {
  using base = T;
  static Dual<T> from_double(double x) { return Dual<T>(static_cast<T>(x)); }
};

template <typename S> S from_double(double x) { return scalar_traits<S>::from_double(x); }

template <typename S> bool is_finite_value(S x) { return std::isfinite(static_cast<double>(x)); }
template <typename T> bool is_finite_value(const Dual<T>& x) {
  return std::isfinite(static_cast<double>(x.v)) && std::isfinite(static_cast<double>(x.d));
}

}  // namespace dadg
