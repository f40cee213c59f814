#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dadg/scalar.hpp"

namespace dadg {

// Dense row-major 2-d array with an optional name. Bias vectors use rows == 1.
template <typename S>
struct Tensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<S> data;

  Tensor() = default;
  Tensor(std::string n, int r, int c) : name(std::move(n)), rows(r), cols(c), data(size_t(r) * c) {}
  Tensor(int r, int c) : rows(r), cols(c), data(size_t(r) * c) {}

  S& at(int r, int c) { return data[size_t(r) * cols + c]; }
  const S& at(int r, int c) const { return data[size_t(r) * cols + c]; }
  size_t size() const { return data.size(); }
};

template <typename S>
using ParamList = std::vector<Tensor<S>>;

template <typename S>
Tensor<S> zeros_like(const Tensor<S>& t) {
  Tensor<S> z(t.name, t.rows, t.cols);
  return z;
}

template <typename S>
ParamList<S> zeros_like(const ParamList<S>& p) {
  ParamList<S> z;
  z.reserve(p.size());
  for (const auto& t : p) z.push_back(zeros_like(t));
  return z;
}

template <typename To, typename From>
Tensor<To> cast_tensor(const Tensor<From>& t) {
  Tensor<To> out(t.name, t.rows, t.cols);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = from_double<To>(static_cast<double>(primal(t.data[i])));
  return out;
}

template <typename To, typename From>
ParamList<To> cast_params(const ParamList<From>& p) {
  ParamList<To> out;
  out.reserve(p.size());
  for (const auto& t : p) out.push_back(cast_tensor<To>(t));
  return out;
}

// p += a * g, shape-checked.
template <typename S>
void axpy(ParamList<S>& p, double a, const ParamList<S>& g) {
  if (p.size() != g.size()) throw std::invalid_argument("axpy: parameter count mismatch");
  S sa = from_double<S>(a);
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i].size() != g[i].size()) throw std::invalid_argument("axpy: shape mismatch for " + p[i].name);
    for (size_t j = 0; j < p[i].data.size(); ++j) p[i].data[j] += sa * g[i].data[j];
  }
}

template <typename S>
double l2_norm(const ParamList<S>& p) {
  double acc = 0;
  for (const auto& t : p)
    for (const auto& x : t.data) {
      double v = static_cast<double>(primal(x));
      acc += v * v;
    }
  return std::sqrt(acc);
}

template <typename S>
bool all_finite(const ParamList<S>& p) {
  for (const auto& t : p)
    for (const auto& x : t.data)
      if (!is_finite_value(x)) return false;
  return true;
}

template <typename S>
bool all_finite(const Tensor<S>& t) {
  for (const auto& x : t.data)
    if (!is_finite_value(x)) return false;
  return true;
}

template <typename S>
bool bitwise_equal(const ParamList<S>& a, const ParamList<S>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows != b[i].rows || a[i].cols != b[i].cols) return false;
    for (size_t j = 0; j < a[i].data.size(); ++j)
      if (a[i].data[j] != b[i].data[j]) return false;
  }
  return true;
}

// Dual seeding: params as Dual scalars with the direction in the derivative slot.
template <typename T>
ParamList<Dual<T>> seed_direction(const ParamList<T>& p, const ParamList<T>& dir) {
  if (p.size() != dir.size()) throw std::invalid_argument("seed_direction: size mismatch");
  ParamList<Dual<T>> out;
  out.reserve(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    Tensor<Dual<T>> t(p[i].name, p[i].rows, p[i].cols);
    for (size_t j = 0; j < p[i].data.size(); ++j) t.data[j] = Dual<T>(p[i].data[j], dir[i].data[j]);
    out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
ParamList<T> derivative_part(const ParamList<Dual<T>>& p) {
  ParamList<T> out;
  out.reserve(p.size());
  for (const auto& t : p) {
    Tensor<T> d(t.name, t.rows, t.cols);
    for (size_t j = 0; j < t.data.size(); ++j) d.data[j] = t.data[j].d;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace dadg
