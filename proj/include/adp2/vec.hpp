#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace adp2 {

using Vec = std::vector<double>;

inline Vec zeros(std::size_t d) { return Vec(d, 0.0); }

inline void check_same_dim(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("vector dimension mismatch");
}

inline double dot(const Vec& a, const Vec& b) {
  check_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(const Vec& a) { return dot(a, a); }

inline double norm(const Vec& a) { return std::sqrt(norm_sq(a)); }

// y += c * x
inline void axpy(double c, const Vec& x, Vec& y) {
  check_same_dim(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

inline void scale(Vec& x, double c) {
  for (double& v : x) v *= c;
}

inline Vec sub(const Vec& a, const Vec& b) {
  check_same_dim(a, b);
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vec add(const Vec& a, const Vec& b) {
  check_same_dim(a, b);
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline bool all_finite(const Vec& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace adp2
