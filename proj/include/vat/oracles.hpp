#pragma once

// Deliberately naive reference implementations. They share no code with the
// production estimators in correlation.hpp / metrics.hpp and exist only to
// check them.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "vat/error.hpp"

namespace vat::oracle {

namespace detail {

inline void check(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("synthetic", "oracle: length mismatch");
  if (x.size() < 2) throw InputError("synthetic", "oracle: need at least 2 observations");
}

// rank_i = 1 + #{j : x_j < x_i} + (#{j != i : x_j == x_i}) / 2
inline std::vector<double> counting_ranks(std::span<const double> x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] < x[i]) less += 1.0;
      if (j != i && x[j] == x[i]) equal += 1.0;
    }
    r[i] = 1.0 + less + equal / 2.0;
  }
  return r;
}

}  // namespace detail

/// Textbook Pearson on counting ranks: (n Sxy - Sx Sy) / sqrt(...). Returns 0
/// for constant input.
inline double oracle_spearman(std::span<const double> x, std::span<const double> y) {
  detail::check(x, y);
  const auto rx = detail::counting_ranks(x);
  const auto ry = detail::counting_ranks(y);
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sx += rx[i];
    sy += ry[i];
    sxx += rx[i] * rx[i];
    syy += ry[i] * ry[i];
    sxy += rx[i] * ry[i];
  }
  const double vx = n * sxx - sx * sx;
  const double vy = n * syy - sy * sy;
  if (vx == 0.0 || vy == 0.0) return 0.0;
  return (n * sxy - sx * sy) / std::sqrt(vx * vy);
}

/// Exhaustive pair classification with the tau-b denominator
/// sqrt((P + Q + Tx)(P + Q + Ty)), where Tx / Ty count pairs tied only in x / y.
inline double oracle_kendall(std::span<const double> x, std::span<const double> y) {
  detail::check(x, y);
  long long concordant = 0, discordant = 0, tie_x = 0, tie_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        ++tie_x;
      } else if (dy == 0) {
        ++tie_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double a = static_cast<double>(concordant + discordant + tie_x);
  const double b = static_cast<double>(concordant + discordant + tie_y);
  if (a == 0.0 || b == 0.0) return 0.0;
  return static_cast<double>(concordant - discordant) / std::sqrt(a * b);
}

/// G = sum_ij |x_i - x_j| / (2 n^2 mu), 0 for an all-zero input.
inline double oracle_gini(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double total = 0.0, diff = 0.0;
  for (double a : x) {
    total += a;
    for (double b : x) diff += std::abs(a - b);
  }
  if (total == 0.0) return 0.0;
  const auto n = static_cast<double>(x.size());
  const double mu = total / n;
  return diff / (2.0 * n * n * mu);
}

}  // namespace vat::oracle
