#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vat/error.hpp"

namespace vat {

/// A correlation coefficient plus a flag set when either input was constant,
/// in which case the value is 0 by convention.
struct Correlation {
  double value = 0.0;
  bool constant = false;
};

namespace detail {

inline void check_pair(std::span<const double> x, std::span<const double> y, const char* what) {
  if (x.size() != y.size()) {
    throw InputError("metrics", std::string(what) + ": length mismatch (" + std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw InputError("metrics", std::string(what) + ": need at least 2 observations");
}

inline double clamp_unit(double r) { return std::clamp(r, -1.0, 1.0); }

}  // namespace detail

/// Fractional ranks (1-based); tied observations share the mean of the ranks
/// they span.
inline std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j + 1);  // mean of i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

/// Pearson product-moment correlation, two-pass.
inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y, "pearson");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {detail::clamp_unit(sxy / std::sqrt(sxx * syy)), false};
}

/// Spearman's rho: Pearson correlation of average ranks.
inline Correlation spearman(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y, "spearman");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

namespace detail {

// Sum over tie groups of t(t-1)/2 for an already sorted range.
template <class It, class Eq>
std::int64_t tied_pairs(It first, It last, Eq eq) {
  std::int64_t total = 0;
  while (first != last) {
    auto next = first + 1;
    while (next != last && eq(*first, *next)) ++next;
    const auto t = static_cast<std::int64_t>(next - first);
    total += t * (t - 1) / 2;
    first = next;
  }
  return total;
}

// Merge sort on y values returning the number of inversions (swaps).
inline std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                                     std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace detail

/// Kendall's tau-b via Knight's O(n log n) algorithm.
inline Correlation kendall(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y, "kendall");
  const std::size_t n = x.size();
  std::vector<std::pair<double, double>> xy(n);
  for (std::size_t i = 0; i < n; ++i) xy[i] = {x[i], y[i]};
  std::sort(xy.begin(), xy.end());

  const auto total = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const auto x_ties = detail::tied_pairs(xy.begin(), xy.end(), [](auto& a, auto& b) { return a.first == b.first; });
  const auto joint_ties = detail::tied_pairs(xy.begin(), xy.end(), [](auto& a, auto& b) { return a == b; });

  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = xy[i].second;
  const auto swaps = detail::count_inversions(ys, buf, 0, n);
  const auto y_ties = detail::tied_pairs(ys.begin(), ys.end(), [](double a, double b) { return a == b; });

  const auto nx = total - x_ties;
  const auto ny = total - y_ties;
  if (nx == 0 || ny == 0) return {0.0, true};
  const auto s = total - x_ties - y_ties + joint_ties - 2 * swaps;
  return {detail::clamp_unit(static_cast<double>(s) /
                             std::sqrt(static_cast<double>(nx) * static_cast<double>(ny))),
          false};
}

enum class CorrelationMethod { kSpearman, kKendall };

inline Correlation correlate(CorrelationMethod m, std::span<const double> x, std::span<const double> y) {
  return m == CorrelationMethod::kSpearman ? spearman(x, y) : kendall(x, y);
}

inline std::string_view to_string(CorrelationMethod m) {
  return m == CorrelationMethod::kSpearman ? "spearman" : "kendall";
}

inline CorrelationMethod parse_correlation_method(std::string_view s) {
  if (s == "spearman") return CorrelationMethod::kSpearman;
  if (s == "kendall") return CorrelationMethod::kKendall;
  throw InputError("metrics", "unknown correlation method: " + std::string(s));
}

}  // namespace vat
