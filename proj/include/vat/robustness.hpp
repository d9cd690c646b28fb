#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vat/correlation.hpp"
#include "vat/dataset.hpp"
#include "vat/evidence.hpp"
#include "vat/metrics.hpp"
#include "vat/parallel.hpp"

namespace vat {

// --- Bootstrap ----------------------------------------------------------------

enum class ResampleMode {
  kSubsample,        // draw scenes without replacement
  kWithReplacement,  // classical bootstrap over scenes
};

inline std::string_view to_string(ResampleMode m) {
  return m == ResampleMode::kSubsample ? "subsample" : "with_replacement";
}

inline ResampleMode parse_resample_mode(std::string_view s) {
  if (s == "subsample") return ResampleMode::kSubsample;
  if (s == "with_replacement") return ResampleMode::kWithReplacement;
  throw InputError("robustness", "unknown resample mode: " + std::string(s));
}

struct BootstrapOptions {
  double fraction = 0.8;
  int replicates = 200;
  std::uint64_t seed = 0;
  ResampleMode mode = ResampleMode::kSubsample;
  CouplingOptions coupling;
  Aggregation aggregation = Aggregation::kObservedMean;
  unsigned jobs = 1;
};

struct BootstrapResult {
  std::vector<double> replicate_values;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single replicate
  double full_sample_nvat = 0.0;
  double fraction = 0.8;
  int replicates = 0;
  std::uint64_t seed = 0;
  ResampleMode mode = ResampleMode::kSubsample;
};

/// Number of scenes drawn per replicate: ceil(fraction * n).
inline std::size_t scenes_per_replicate(double fraction, std::size_t n) {
  const double exact = fraction * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::ceil(exact - 1e-9)));
}

/// Scene multiplicities for one replicate, from a generator keyed on
/// (seed, replicate) so replicates can run in any order.
inline std::map<std::string, std::size_t> draw_scenes(const std::vector<std::string>& scenes, double fraction,
                                                      ResampleMode mode, std::uint64_t seed, std::uint64_t replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32)};
  std::mt19937_64 rng(seq);
  const auto k = scenes_per_replicate(fraction, scenes.size());
  std::map<std::string, std::size_t> picked;
  if (mode == ResampleMode::kWithReplacement) {
    std::uniform_int_distribution<std::size_t> pick(0, scenes.size() - 1);
    for (std::size_t i = 0; i < k; ++i) ++picked[scenes[pick(rng)]];
    return picked;
  }
  std::vector<std::size_t> idx(scenes.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {  // partial Fisher-Yates
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
    picked[scenes[idx[i]]] = 1;
  }
  return picked;
}

/// Sample mean and (n-1) standard deviation, shifted by the first element so
/// that identical inputs give exactly zero spread.
inline std::pair<double, double> mean_and_std(const std::vector<double>& x) {
  if (x.empty()) return {0.0, 0.0};
  const double ref = x.front();
  double s = 0.0;
  for (double v : x) s += v - ref;
  const double mean = ref + s / static_cast<double>(x.size());
  if (x.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(x.size() - 1))};
}

/// Scene-level resampling stability of nVAT. Every sample of a scene enters or
/// leaves a replicate together.
inline BootstrapResult bootstrap_nvat(const PairedTable& p, const Taxonomy& t, const BootstrapOptions& options = {}) {
  if (!(options.fraction > 0.0 && options.fraction <= 1.0)) {
    throw InputError("robustness", "bootstrap fraction must be in (0, 1]");
  }
  if (options.replicates < 1) throw InputError("robustness", "bootstrap needs at least one replicate");
  const auto scene_set = scene_ids(p);
  if (scene_set.size() < 2) throw InputError("robustness", "bootstrap needs at least 2 distinct scenes");
  const std::vector<std::string> scenes(scene_set.begin(), scene_set.end());

  const auto full = build_shift_matrix(p, t, options.aggregation);
  auto copts = options.coupling;
  copts.jobs = 1;

  BootstrapResult res;
  res.fraction = options.fraction;
  res.replicates = options.replicates;
  res.seed = options.seed;
  res.mode = options.mode;
  res.full_sample_nvat = system_tax(coupling_matrix(full, copts));
  res.replicate_values.assign(static_cast<std::size_t>(options.replicates), 0.0);
  parallel_for(res.replicate_values.size(), options.jobs, [&](std::size_t r) {
    const auto picked = draw_scenes(scenes, options.fraction, options.mode, options.seed, r);
    const auto sub = select_rows(full, [&](const std::string& scene) {
      auto it = picked.find(scene);
      return it == picked.end() ? std::size_t{0} : it->second;
    });
    res.replicate_values[r] = system_tax(coupling_matrix(sub, copts));
  });
  std::tie(res.mean, res.std) = mean_and_std(res.replicate_values);
  return res;
}

// --- Profile comparison ------------------------------------------------------------

namespace detail {

/// Replaces values within a relative tolerance of their sorted predecessor
/// group by the group's first value, so that floating-point noise does not
/// break ties between VAT entries that are equal in exact arithmetic.
inline std::vector<double> snap_ties(const std::vector<double>& x, double tol = 1e-12) {
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> out = x;
  double anchor = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double v = x[order[k]];
    if (k == 0 || v - anchor > tol * std::max(1.0, std::abs(anchor))) anchor = v;
    out[order[k]] = anchor;
  }
  return out;
}

}  // namespace detail

struct ProfileComparison {
  double correlation = 0.0;
  bool degenerate = false;
};

/// Rank correlation between two VAT profiles over the same values. Profiles
/// with identical tie structure agree perfectly (1), including fully tied
/// ones; an all-zero profile, or a constant profile paired with a varying
/// one, is degenerate.
inline ProfileComparison compare_profiles(const std::vector<double>& a, const std::vector<double>& b,
                                          CorrelationMethod method = CorrelationMethod::kSpearman) {
  if (a.size() != b.size()) throw InputError("robustness", "profile length mismatch");
  if (a.size() < 2) return {0.0, true};
  auto all_zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::abs(x) <= 1e-12; });
  };
  if (all_zero(a) || all_zero(b)) return {0.0, true};
  const auto sa = detail::snap_ties(a);
  const auto sb = detail::snap_ties(b);
  if (average_ranks(sa) == average_ranks(sb)) return {1.0, false};
  const auto c = correlate(method, sa, sb);
  return {c.value, c.constant};
}

struct AgreementOptions {
  int min_support = 30;
  CorrelationMethod comparison = CorrelationMethod::kSpearman;
  unsigned jobs = 1;
};

struct AgreementResult {
  std::vector<ValueId> values;
  std::vector<double> spearman_based_profile;
  std::vector<double> kendall_based_profile;
  double rank_agreement = 0.0;
  CorrelationMethod comparison = CorrelationMethod::kSpearman;
  bool degenerate = false;
};

/// VAT profiles under Spearman- and Kendall-based coupling, and their rank
/// agreement.
inline AgreementResult rank_agreement(const ShiftMatrix& sm, const AgreementOptions& options = {}) {
  CouplingOptions copts;
  copts.min_support = options.min_support;
  copts.jobs = options.jobs;
  copts.method = CorrelationMethod::kSpearman;
  const auto rs = coupling_matrix(sm, copts);
  copts.method = CorrelationMethod::kKendall;
  const auto rk = coupling_matrix(sm, copts);

  AgreementResult out;
  out.values = rs.values;
  out.spearman_based_profile = vat_profile(rs);
  out.kendall_based_profile = vat_profile(rk);
  out.comparison = options.comparison;
  const auto cmp = compare_profiles(out.spearman_based_profile, out.kendall_based_profile, options.comparison);
  out.rank_agreement = cmp.correlation;
  out.degenerate = cmp.degenerate;
  return out;
}

// --- Cross-granularity ----------------------------------------------------------------

enum class MicroAggregation { kMean, kSum, kNorm };

inline std::string_view to_string(MicroAggregation a) {
  switch (a) {
    case MicroAggregation::kMean: return "mean";
    case MicroAggregation::kSum: return "sum";
    case MicroAggregation::kNorm: return "norm";
  }
  return "mean";
}

inline MicroAggregation parse_micro_aggregation(std::string_view s) {
  if (s == "mean") return MicroAggregation::kMean;
  if (s == "sum") return MicroAggregation::kSum;
  if (s == "norm") return MicroAggregation::kNorm;
  throw InputError("robustness", "unknown micro aggregation: " + std::string(s));
}

struct CrossGranularityOptions {
  int min_support = 30;
  MicroAggregation aggregation = MicroAggregation::kMean;
  Aggregation value_aggregation = Aggregation::kObservedMean;
  unsigned jobs = 1;
};

struct CrossGranularityResult {
  std::vector<MicroValueId> micro_values;
  std::vector<std::optional<double>> micro_profile;  // nullopt for unobserved micro-values
  std::vector<ValueId> values;                       // values with observed micro-values
  std::vector<double> aggregated_profile;
  std::vector<double> ten_d_profile;
  double rank_correlation = 0.0;
  bool degenerate = false;
  std::vector<std::string> diagnostics;
};

inline CrossGranularityResult cross_granularity(const PairedTable& p, const Taxonomy& t,
                                                const CrossGranularityOptions& options = {}) {
  CouplingOptions copts;
  copts.min_support = options.min_support;
  copts.jobs = options.jobs;

  const auto micro_sm = build_micro_shift_matrix(p, t);
  const auto micro_R = coupling_matrix(micro_sm, copts);
  const auto micro_vat = vat_profile(micro_R);

  CrossGranularityResult out;
  std::vector<bool> observed(micro_sm.cols(), false);
  for (std::size_t c = 0; c < micro_sm.cols(); ++c) {
    for (std::size_t r = 0; r < micro_sm.rows() && !observed[c]; ++r) observed[c] = micro_sm.at(r, c).has_value();
    out.micro_values.push_back(micro_sm.columns[c]);
    out.micro_profile.push_back(observed[c] ? std::optional<double>(micro_vat[c]) : std::nullopt);
  }

  const auto value_sm = build_shift_matrix(p, t, options.value_aggregation);
  const auto value_R = coupling_matrix(value_sm, copts);
  const auto value_vat = vat_profile(value_R);

  for (std::size_t v = 0; v < t.value_count(); ++v) {
    const auto& id = t.values()[v].id;
    std::vector<double> members;
    for (const auto& m : t.micro_values_of(id)) {
      const auto c = t.micro_value_index(m);
      if (observed[c]) members.push_back(micro_vat[c]);
    }
    if (members.empty()) {
      out.diagnostics.push_back("value " + id + " has no observed micro-values; excluded");
      continue;
    }
    double agg = 0.0;
    for (double x : members) agg += options.aggregation == MicroAggregation::kNorm ? x * x : x;
    if (options.aggregation == MicroAggregation::kMean) agg /= static_cast<double>(members.size());
    if (options.aggregation == MicroAggregation::kNorm) agg = std::sqrt(agg);
    out.values.push_back(id);
    out.aggregated_profile.push_back(agg);
    out.ten_d_profile.push_back(value_vat[v]);
  }
  const auto cmp = compare_profiles(out.aggregated_profile, out.ten_d_profile);
  out.rank_correlation = cmp.correlation;
  out.degenerate = cmp.degenerate;
  if (cmp.degenerate) out.diagnostics.push_back("cross-granularity comparison is degenerate");
  return out;
}

// --- Serialization ------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const BootstrapResult& b) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(b.mode);
  j["fraction"] = b.fraction;
  j["replicates"] = b.replicates;
  j["seed"] = b.seed;
  j["full_sample_nvat"] = b.full_sample_nvat;
  j["mean"] = b.mean;
  j["std"] = b.std;
  j["replicate_values"] = b.replicate_values;
  return j;
}

inline nlohmann::ordered_json to_json(const AgreementResult& a) {
  nlohmann::ordered_json j;
  j["values"] = a.values;
  j["spearman_based_profile"] = a.spearman_based_profile;
  j["kendall_based_profile"] = a.kendall_based_profile;
  j["comparison"] = to_string(a.comparison);
  j["rank_agreement"] = a.rank_agreement;
  j["degenerate"] = a.degenerate;
  return j;
}

inline nlohmann::ordered_json to_json(const CrossGranularityResult& c) {
  using oj = nlohmann::ordered_json;
  oj j;
  oj micro = oj::object();
  for (std::size_t i = 0; i < c.micro_values.size(); ++i) {
    micro[c.micro_values[i]] = c.micro_profile[i] ? oj(*c.micro_profile[i]) : oj();
  }
  j["micro_profile"] = micro;
  j["values"] = c.values;
  j["aggregated_profile"] = c.aggregated_profile;
  j["ten_d_profile"] = c.ten_d_profile;
  j["rank_correlation"] = c.rank_correlation;
  j["degenerate"] = c.degenerate;
  j["diagnostics"] = c.diagnostics;
  return j;
}

}  // namespace vat
