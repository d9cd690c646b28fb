#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vat/correlation.hpp"
#include "vat/dataset.hpp"
#include "vat/error.hpp"
#include "vat/evidence.hpp"
#include "vat/parallel.hpp"

namespace vat {

// --- First-order effects ----------------------------------------------------

/// Mean of the present entries of column c; nullopt when the column is empty.
inline std::optional<double> column_mean(const ShiftMatrix& sm, std::size_t c) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < sm.rows(); ++r) {
    if (const auto& e = sm.at(r, c)) {
      sum += *e;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

/// Realized on-target gain: mean shift of the target value over samples.
inline double gain(const ShiftMatrix& sm, std::string_view target) {
  auto g = column_mean(sm, sm.column_index(target));
  if (!g) throw InputError("metrics", "gain: target column " + std::string(target) + " has no entries");
  return *g;
}

using GndVector = std::vector<std::optional<double>>;

/// Gain-normalized deviation over sm.columns. nullopt when |Gain| is at or
/// below epsilon_gain. The target component is exactly sign(Gain); components
/// of columns without entries are nullopt.
inline std::optional<GndVector> gnd(const ShiftMatrix& sm, std::string_view target, double epsilon_gain = 1e-6) {
  const double g = gain(sm, target);
  if (!(std::abs(g) > epsilon_gain)) return std::nullopt;
  const auto t = sm.column_index(target);
  GndVector out(sm.cols());
  for (std::size_t c = 0; c < sm.cols(); ++c) {
    if (c == t) {
      out[c] = g > 0 ? 1.0 : -1.0;
    } else if (auto m = column_mean(sm, c)) {
      out[c] = *m / std::abs(g);
    }
  }
  return out;
}

// --- Coupling matrix ----------------------------------------------------------

enum class PairFlag { kOk, kConstantVector, kLowSupport };

inline std::string_view to_string(PairFlag f) {
  switch (f) {
    case PairFlag::kOk: return "ok";
    case PairFlag::kConstantVector: return "constant_vector";
    case PairFlag::kLowSupport: return "low_support";
  }
  return "ok";
}

inline PairFlag parse_pair_flag(std::string_view s) {
  if (s == "ok") return PairFlag::kOk;
  if (s == "constant_vector") return PairFlag::kConstantVector;
  if (s == "low_support") return PairFlag::kLowSupport;
  throw InputError("metrics", "unknown pair flag: " + std::string(s));
}

/// Symmetric value-value rank correlation matrix with zero diagonal.
struct CouplingMatrix {
  std::vector<std::string> values;
  std::vector<double> entries;  // row-major n x n
  std::vector<int> support;     // pairwise-complete sample counts
  std::vector<PairFlag> flags;
  CorrelationMethod method = CorrelationMethod::kSpearman;

  std::size_t size() const noexcept { return values.size(); }
  double at(std::size_t i, std::size_t j) const { return entries[i * size() + j]; }
  int support_at(std::size_t i, std::size_t j) const { return support[i * size() + j]; }
  PairFlag flag_at(std::size_t i, std::size_t j) const { return flags[i * size() + j]; }

  std::size_t index_of(std::string_view id) const {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] == id) return i;
    }
    throw InputError("metrics", "coupling matrix has no value " + std::string(id));
  }

  /// Zero matrix over the given ids; mainly for tests and synthetic inputs.
  static CouplingMatrix zeros(std::vector<std::string> ids) {
    CouplingMatrix R;
    const auto n = ids.size();
    R.values = std::move(ids);
    R.entries.assign(n * n, 0.0);
    R.support.assign(n * n, 0);
    R.flags.assign(n * n, PairFlag::kOk);
    return R;
  }

  void set(std::size_t i, std::size_t j, double r) {
    entries[i * size() + j] = r;
    entries[j * size() + i] = r;
  }
};

struct CouplingOptions {
  int min_support = 30;
  CorrelationMethod method = CorrelationMethod::kSpearman;
  bool strict = false;                // low support becomes an error
  std::vector<std::string> exclude;   // columns left out of the matrix
  unsigned jobs = 1;
};

/// Pairwise-complete rank correlation over shift trajectories.
inline CouplingMatrix coupling_matrix(const ShiftMatrix& sm, const CouplingOptions& options = {}) {
  std::vector<std::size_t> cols;
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < sm.cols(); ++c) {
    if (std::find(options.exclude.begin(), options.exclude.end(), sm.columns[c]) != options.exclude.end()) continue;
    cols.push_back(c);
    ids.push_back(sm.columns[c]);
  }
  if (cols.size() < 2) throw InputError("metrics", "coupling_matrix: need at least 2 values");

  auto R = CouplingMatrix::zeros(ids);
  R.method = options.method;
  const std::size_t n = cols.size();

  for (std::size_t i = 0; i < n; ++i) {
    int present = 0;
    for (std::size_t r = 0; r < sm.rows(); ++r) present += sm.at(r, cols[i]).has_value();
    R.support[i * n + i] = present;
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  std::vector<Correlation> results(pairs.size());
  std::vector<int> support(pairs.size());
  parallel_for(pairs.size(), options.jobs, [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    std::vector<double> x, y;
    for (std::size_t r = 0; r < sm.rows(); ++r) {
      const auto& a = sm.at(r, cols[i]);
      const auto& b = sm.at(r, cols[j]);
      if (a && b) {
        x.push_back(*a);
        y.push_back(*b);
      }
    }
    support[k] = static_cast<int>(x.size());
    if (support[k] >= std::max(options.min_support, 2)) results[k] = correlate(options.method, x, y);
  });

  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    R.support[i * n + j] = R.support[j * n + i] = support[k];
    PairFlag flag = PairFlag::kOk;
    if (support[k] < std::max(options.min_support, 2)) {
      if (options.strict) {
        throw DegenerateError("metrics", "coupling_matrix: pair (" + ids[i] + ", " + ids[j] + ") has support " +
                                             std::to_string(support[k]) + " < " +
                                             std::to_string(options.min_support));
      }
      flag = PairFlag::kLowSupport;
    } else if (results[k].constant) {
      flag = PairFlag::kConstantVector;
    } else {
      R.set(i, j, results[k].value);
    }
    R.flags[i * n + j] = R.flags[j * n + i] = flag;
  }
  return R;
}

// --- Tax ----------------------------------------------------------------------

/// VAT(u): Euclidean norm of row u (the zero diagonal contributes nothing).
inline double value_tax(const CouplingMatrix& R, std::string_view u) {
  const auto i = R.index_of(u);
  double ss = 0.0;
  for (std::size_t j = 0; j < R.size(); ++j) {
    if (j != i) ss += R.at(i, j) * R.at(i, j);
  }
  return std::sqrt(ss);
}

inline std::vector<double> vat_profile(const CouplingMatrix& R) {
  std::vector<double> out;
  out.reserve(R.size());
  for (const auto& v : R.values) out.push_back(value_tax(R, v));
  return out;
}

/// nVAT: Frobenius norm of the zero-diagonal matrix over sqrt(|V|).
inline double system_tax(const CouplingMatrix& R) {
  if (R.size() == 0) return 0.0;
  double ss = 0.0;
  for (std::size_t i = 0; i < R.size(); ++i) {
    for (std::size_t j = 0; j < R.size(); ++j) {
      if (i != j) ss += R.at(i, j) * R.at(i, j);
    }
  }
  return std::sqrt(ss) / std::sqrt(static_cast<double>(R.size()));
}

/// Gini coefficient of a non-negative profile, via the sorted-rank identity
/// sum_ij |x_i - x_j| = 2 sum_i (2i - n - 1) x_(i). Zero for an all-zero profile.
inline double centralization(std::span<const double> profile) {
  if (profile.empty()) return 0.0;
  std::vector<double> x(profile.begin(), profile.end());
  for (double v : x) {
    if (v < 0.0 || std::isnan(v)) throw InputError("metrics", "centralization: negative profile component");
  }
  std::sort(x.begin(), x.end());
  const auto n = static_cast<double>(x.size());
  double total = 0.0, weighted = 0.0;
  for (double v : x) total += v;
  // Pair the i-th smallest with the i-th largest so equal entries cancel exactly.
  for (std::size_t i = 0, j = x.size() - 1; i < j; ++i, --j) {
    weighted += (n - 1.0 - 2.0 * static_cast<double>(i)) * (x[j] - x[i]);
  }
  if (total == 0.0) return 0.0;
  return weighted / (n * total);
}

// --- Hubs and amplification -----------------------------------------------------

/// VAT profile of one alignment configuration (model x target x shots ...).
struct VatProfile {
  std::string label;
  std::vector<ValueId> values;
  std::vector<double> vat;
};

/// Linear-interpolation sample quantile (R type 7).
inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw InputError("metrics", "quantile of empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// Values whose VAT strictly exceeds the per-profile `q` quantile in at least a
/// `persistence` fraction of profiles. Sorted by value id.
inline std::vector<ValueId> identify_hubs(std::span<const VatProfile> profiles, double q = 0.75,
                                          double persistence = 0.75) {
  if (profiles.empty()) throw InputError("metrics", "identify_hubs: no profiles");
  if (!(q > 0.0 && q <= 1.0) || !(persistence > 0.0 && persistence <= 1.0)) {
    throw InputError("metrics", "identify_hubs: quantile and persistence must be in (0, 1]");
  }
  std::map<ValueId, std::size_t> elevated;
  for (const auto& v : profiles.front().values) elevated[v] = 0;
  for (const auto& p : profiles) {
    if (p.values.size() != p.vat.size()) throw InputError("metrics", "identify_hubs: malformed profile " + p.label);
    const double threshold = quantile(p.vat, q);
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      auto it = elevated.find(p.values[i]);
      if (it == elevated.end()) {
        throw InputError("metrics", "identify_hubs: profile " + p.label + " has unknown value " + p.values[i]);
      }
      if (p.vat[i] > threshold) ++it->second;
    }
  }
  std::vector<ValueId> hubs;
  const auto n = static_cast<double>(profiles.size());
  for (const auto& [v, count] : elevated) {
    if (static_cast<double>(count) / n >= persistence) hubs.push_back(v);
  }
  return hubs;
}

struct GroupStats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

inline GroupStats describe_group(const std::vector<double>& x) {
  GroupStats s;
  s.count = x.size();
  if (x.empty()) return s;
  double sum = 0.0;
  for (double v : x) sum += v;
  s.mean = sum / static_cast<double>(x.size());
  s.median = quantile(x, 0.5);
  s.q1 = quantile(x, 0.25);
  s.q3 = quantile(x, 0.75);
  s.min = *std::min_element(x.begin(), x.end());
  s.max = *std::max_element(x.begin(), x.end());
  return s;
}

struct AmplificationReport {
  std::vector<ValueId> hubs;
  GroupStats hub_stats;
  GroupStats non_hub_stats;
  double rank_sum_u = 0.0;     // Mann-Whitney U of the hub group
  double null_midpoint = 0.0;  // n_hub * n_non_hub / 2
  double effect_size = 0.0;    // U / (n_hub * n_non_hub)
};

/// Pools VAT(v) across profiles for hubs and non-hubs and compares the two
/// distributions. Descriptive only.
inline AmplificationReport amplification_report(std::span<const VatProfile> profiles,
                                                const std::vector<ValueId>& hubs) {
  if (profiles.empty()) throw InputError("metrics", "amplification_report: no profiles");
  std::set<ValueId> hub_set(hubs.begin(), hubs.end());
  std::vector<double> in, out;
  for (const auto& p : profiles) {
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      (hub_set.count(p.values[i]) ? in : out).push_back(p.vat[i]);
    }
  }
  for (const auto& h : hub_set) {
    if (std::find(profiles.front().values.begin(), profiles.front().values.end(), h) ==
        profiles.front().values.end()) {
      throw InputError("metrics", "amplification_report: hub " + h + " is not a profiled value");
    }
  }
  if (out.empty()) throw InputError("metrics", "amplification_report: every value is a hub");
  if (in.empty()) throw InputError("metrics", "amplification_report: no hub values");

  AmplificationReport rep;
  rep.hubs.assign(hub_set.begin(), hub_set.end());
  rep.hub_stats = describe_group(in);
  rep.non_hub_stats = describe_group(out);

  std::vector<double> pooled = in;
  pooled.insert(pooled.end(), out.begin(), out.end());
  const auto ranks = average_ranks(pooled);
  double r1 = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) r1 += ranks[i];
  const auto n1 = static_cast<double>(in.size());
  const auto n2 = static_cast<double>(out.size());
  rep.rank_sum_u = r1 - n1 * (n1 + 1.0) / 2.0;
  rep.null_midpoint = n1 * n2 / 2.0;
  rep.effect_size = rep.rank_sum_u / (n1 * n2);
  return rep;
}

// --- Report -------------------------------------------------------------------------

struct TaxReport {
  ValueId target;
  std::optional<Direction> direction;
  double gain = 0.0;
  std::vector<ValueId> gnd_values;
  std::optional<GndVector> gnd;
  std::vector<double> vat_profile;  // aligned with coupling.values
  double nvat = 0.0;
  double gini = 0.0;
  CouplingMatrix coupling;
  std::vector<std::string> diagnostics;

  VatProfile profile(std::string label) const { return {std::move(label), coupling.values, vat_profile}; }
};

struct ReportOptions {
  CouplingOptions coupling;
  double epsilon_gain = 1e-6;
  bool exclude_target = false;
  bool strict = false;  // degenerate results become errors
};

inline TaxReport compute_tax_report(const ShiftMatrix& sm, const ValueId& target, const ReportOptions& options = {}) {
  TaxReport rep;
  rep.target = target;
  rep.gain = gain(sm, target);
  rep.gnd_values = sm.columns;
  rep.gnd = gnd(sm, target, options.epsilon_gain);
  if (!rep.gnd) {
    const std::string msg = "gnd not computable: |gain| <= epsilon_gain (" + io::format_double(options.epsilon_gain) + ")";
    if (options.strict) throw DegenerateError("metrics", msg);
    rep.diagnostics.push_back(msg);
  }

  auto copts = options.coupling;
  copts.strict = copts.strict || options.strict;
  if (options.exclude_target) copts.exclude.push_back(target);
  rep.coupling = coupling_matrix(sm, copts);
  rep.vat_profile = vat_profile(rep.coupling);
  rep.nvat = system_tax(rep.coupling);
  rep.gini = centralization(rep.vat_profile);

  std::size_t constant = 0, low = 0;
  const auto n = rep.coupling.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      constant += rep.coupling.flag_at(i, j) == PairFlag::kConstantVector;
      low += rep.coupling.flag_at(i, j) == PairFlag::kLowSupport;
    }
  }
  if (constant) rep.diagnostics.push_back(std::to_string(constant) + " value pairs flagged constant_vector");
  if (low) rep.diagnostics.push_back(std::to_string(low) + " value pairs flagged low_support");
  if (rep.nvat == 0.0) rep.diagnostics.push_back("all off-diagonal couplings are zero");
  return rep;
}

inline nlohmann::ordered_json to_json(const CouplingMatrix& R) {
  using oj = nlohmann::ordered_json;
  oj j;
  j["method"] = to_string(R.method);
  j["values"] = R.values;
  const auto n = R.size();
  oj entries = oj::array(), support = oj::array(), flags = oj::array();
  for (std::size_t i = 0; i < n; ++i) {
    oj er = oj::array(), sr = oj::array(), fr = oj::array();
    for (std::size_t k = 0; k < n; ++k) {
      er.push_back(R.at(i, k));
      sr.push_back(R.support_at(i, k));
      fr.push_back(to_string(R.flag_at(i, k)));
    }
    entries.push_back(er);
    support.push_back(sr);
    flags.push_back(fr);
  }
  j["entries"] = entries;
  j["support"] = support;
  j["flags"] = flags;
  return j;
}

template <class Json>
CouplingMatrix coupling_from_json(const Json& j) {
  auto R = CouplingMatrix::zeros(j.at("values").template get<std::vector<std::string>>());
  if (j.contains("method")) R.method = parse_correlation_method(j["method"].template get<std::string>());
  const auto n = R.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      R.entries[i * n + k] = j.at("entries").at(i).at(k).template get<double>();
      R.support[i * n + k] = j.at("support").at(i).at(k).template get<int>();
      R.flags[i * n + k] = parse_pair_flag(j.at("flags").at(i).at(k).template get<std::string>());
    }
  }
  return R;
}

inline nlohmann::ordered_json to_json(const TaxReport& rep) {
  using oj = nlohmann::ordered_json;
  oj j;
  j["target"] = rep.target;
  j["direction"] = rep.direction ? oj(to_string(*rep.direction)) : oj();
  j["gain"] = rep.gain;
  if (rep.gnd) {
    oj g = oj::object();
    for (std::size_t i = 0; i < rep.gnd_values.size(); ++i) {
      g[rep.gnd_values[i]] = (*rep.gnd)[i] ? oj(*(*rep.gnd)[i]) : oj();
    }
    j["gnd"] = g;
  } else {
    j["gnd"] = nullptr;
  }
  oj vat = oj::object();
  for (std::size_t i = 0; i < rep.coupling.values.size(); ++i) vat[rep.coupling.values[i]] = rep.vat_profile[i];
  j["vat_profile"] = vat;
  j["nvat"] = rep.nvat;
  j["gini"] = rep.gini;
  j["coupling"] = to_json(rep.coupling);
  j["diagnostics"] = rep.diagnostics;
  return j;
}

/// Accepts ordered_json to keep the gnd component order of the document.
template <class Json>
TaxReport report_from_json(const Json& j) {
  try {
    TaxReport rep;
    rep.target = j.at("target").template get<std::string>();
    if (j.contains("direction") && j["direction"].is_string()) {
      rep.direction = parse_direction(j["direction"].template get<std::string>());
    }
    rep.gain = j.at("gain").template get<double>();
    rep.coupling = coupling_from_json(j.at("coupling"));
    const auto& vat = j.at("vat_profile");
    for (const auto& v : rep.coupling.values) rep.vat_profile.push_back(vat.at(v).template get<double>());
    if (j.contains("gnd") && j["gnd"].is_object()) {
      GndVector g;
      for (const auto& [k, v] : j["gnd"].items()) {
        rep.gnd_values.push_back(k);
        g.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.template get<double>()));
      }
      rep.gnd = std::move(g);
    }
    rep.nvat = j.at("nvat").template get<double>();
    rep.gini = j.at("gini").template get<double>();
    if (j.contains("diagnostics")) rep.diagnostics = j["diagnostics"].template get<std::vector<std::string>>();
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("metrics", std::string("malformed report document: ") + e.what());
  }
}

}  // namespace vat
