#pragma once

#include "maxprin/core.hpp"

#include <array>
#include <cmath>

namespace maxprin {

/// Forward-mode Taylor jet in n variables: value, gradient and (for Order 2)
/// the full Hessian. Capacity is fixed at kMaxDim so jets live on the stack.
template <int Order>
struct Jet {
  static_assert(Order == 1 || Order == 2, "jets carry first or second derivatives");
  static constexpr int kHessSize = Order == 2 ? kMaxDim * kMaxDim : 1;

  int n = 0;
  double v = 0.0;
  std::array<double, kMaxDim> g{};
  std::array<double, kHessSize> h{};

  Jet() = default;
  Jet(int dim, double value) : n(dim), v(value) {}

  static Jet variable(int dim, int index, double value) {
    Jet j(dim, value);
    j.g[static_cast<std::size_t>(index)] = 1.0;
    return j;
  }

  double& hess(int i, int j) { return h[static_cast<std::size_t>(i * kMaxDim + j)]; }
  double hess(int i, int j) const { return h[static_cast<std::size_t>(i * kMaxDim + j)]; }

  Vec gradient() const {
    Vec out(n);
    for (int i = 0; i < n; ++i) out(i) = g[static_cast<std::size_t>(i)];
    return out;
  }

  Mat hessian() const
    requires(Order == 2)
  {
    Mat out(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out(i, j) = hess(i, j);
    return out;
  }
};

using Jet1 = Jet<1>;
using Jet2 = Jet<2>;

// Chain rule for a scalar function with derivatives f1, f2 at a.v.
template <int O>
Jet<O> chain(const Jet<O>& a, double f0, double f1, double f2) {
  Jet<O> r(a.n, f0);
  for (int i = 0; i < a.n; ++i) r.g[i] = f1 * a.g[i];
  if constexpr (O == 2) {
    for (int i = 0; i < a.n; ++i)
      for (int j = 0; j < a.n; ++j) r.hess(i, j) = f1 * a.hess(i, j) + f2 * a.g[i] * a.g[j];
  }
  return r;
}

template <int O>
Jet<O> operator+(const Jet<O>& a, const Jet<O>& b) {
  Jet<O> r(a.n, a.v + b.v);
  for (int i = 0; i < a.n; ++i) r.g[i] = a.g[i] + b.g[i];
  if constexpr (O == 2) {
    for (int i = 0; i < a.n; ++i)
      for (int j = 0; j < a.n; ++j) r.hess(i, j) = a.hess(i, j) + b.hess(i, j);
  }
  return r;
}

template <int O>
Jet<O> operator-(const Jet<O>& a) {
  return chain(a, -a.v, -1.0, 0.0);
}

template <int O>
Jet<O> operator-(const Jet<O>& a, const Jet<O>& b) {
  return a + (-b);
}

template <int O>
Jet<O> operator*(const Jet<O>& a, const Jet<O>& b) {
  Jet<O> r(a.n, a.v * b.v);
  for (int i = 0; i < a.n; ++i) r.g[i] = a.v * b.g[i] + b.v * a.g[i];
  if constexpr (O == 2) {
    for (int i = 0; i < a.n; ++i)
      for (int j = 0; j < a.n; ++j)
        r.hess(i, j) = a.v * b.hess(i, j) + b.v * a.hess(i, j) + a.g[i] * b.g[j] + b.g[i] * a.g[j];
  }
  return r;
}

template <int O>
Jet<O> reciprocal(const Jet<O>& a) {
  const double inv = 1.0 / a.v;
  return chain(a, inv, -inv * inv, 2.0 * inv * inv * inv);
}

template <int O>
Jet<O> operator/(const Jet<O>& a, const Jet<O>& b) {
  return a * reciprocal(b);
}

template <int O>
Jet<O> operator+(const Jet<O>& a, double c) {
  Jet<O> r = a;
  r.v += c;
  return r;
}
template <int O>
Jet<O> operator+(double c, const Jet<O>& a) {
  return a + c;
}
template <int O>
Jet<O> operator-(const Jet<O>& a, double c) {
  return a + (-c);
}
template <int O>
Jet<O> operator-(double c, const Jet<O>& a) {
  return (-a) + c;
}
template <int O>
Jet<O> operator*(const Jet<O>& a, double c) {
  return chain(a, a.v * c, c, 0.0);
}
template <int O>
Jet<O> operator*(double c, const Jet<O>& a) {
  return a * c;
}
template <int O>
Jet<O> operator/(const Jet<O>& a, double c) {
  return a * (1.0 / c);
}

template <int O>
Jet<O> sin(const Jet<O>& a) {
  const double s = std::sin(a.v);
  return chain(a, s, std::cos(a.v), -s);
}
template <int O>
Jet<O> cos(const Jet<O>& a) {
  const double c = std::cos(a.v);
  return chain(a, c, -std::sin(a.v), -c);
}
template <int O>
Jet<O> exp(const Jet<O>& a) {
  const double e = std::exp(a.v);
  return chain(a, e, e, e);
}
template <int O>
Jet<O> log(const Jet<O>& a) {
  return chain(a, std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v));
}
template <int O>
Jet<O> sqrt(const Jet<O>& a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}
template <int O>
Jet<O> tanh(const Jet<O>& a) {
  const double t = std::tanh(a.v);
  const double d = 1.0 - t * t;
  return chain(a, t, d, -2.0 * t * d);
}

// a^c for a constant exponent.
template <int O>
Jet<O> pow(const Jet<O>& a, double c) {
  const double f0 = std::pow(a.v, c);
  const double f1 = c == 0.0 ? 0.0 : c * std::pow(a.v, c - 1.0);
  const double f2 = (c == 0.0 || c == 1.0) ? 0.0 : c * (c - 1.0) * std::pow(a.v, c - 2.0);
  return chain(a, f0, f1, f2);
}

template <int O>
Jet<O> pow(const Jet<O>& a, const Jet<O>& b) {
  return exp(b * log(a));
}

inline double value_of(double x) { return x; }
template <int O>
double value_of(const Jet<O>& j) {
  return j.v;
}

template <int O>
bool jet_is_finite(const Jet<O>& j) {
  if (!std::isfinite(j.v)) return false;
  for (int i = 0; i < j.n; ++i) {
    if (!std::isfinite(j.g[i])) return false;
  }
  if constexpr (O == 2) {
    for (int i = 0; i < j.n; ++i)
      for (int k = 0; k < j.n; ++k)
        if (!std::isfinite(j.hess(i, k))) return false;
  }
  return true;
}
inline bool jet_is_finite(double x) { return std::isfinite(x); }

template <class T>
struct ScalarTraits;

template <>
struct ScalarTraits<double> {
  static double constant(double c, int) { return c; }
  static double variable(double x, int, int) { return x; }
};

template <int O>
struct ScalarTraits<Jet<O>> {
  static Jet<O> constant(double c, int n) { return Jet<O>(n, c); }
  static Jet<O> variable(double x, int index, int n) { return Jet<O>::variable(n, index, x); }
};

}  // namespace maxprin
