#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "vat/dataset.hpp"
#include "vat/error.hpp"
#include "vat/io.hpp"
#include "vat/taxonomy.hpp"

namespace vat {

/// The five admissible evidence levels, indexed by Likert response - 1.
inline constexpr std::array<double, 5> kEvidenceGrid = {-1.0, -0.5, 0.0, 0.5, 1.0};

/// Centered ordinal evidence: 1 -> -1, 3 -> 0, 5 -> 1.
inline double likert_to_evidence(int likert) {
  if (!valid_likert(likert)) {
    throw InputError("evidence", "likert response " + std::to_string(likert) + " outside 1..5");
  }
  return kEvidenceGrid[static_cast<std::size_t>(likert - 1)];
}

/// Inverse of likert_to_evidence on the grid.
inline int evidence_to_likert(double evidence) {
  for (std::size_t i = 0; i < kEvidenceGrid.size(); ++i) {
    if (kEvidenceGrid[i] == evidence) return static_cast<int>(i) + 1;
  }
  throw InputError("evidence", "evidence " + io::format_double(evidence) + " is not a grid level");
}

inline double signed_evidence(int polarity, int likert) {
  if (!valid_polarity(polarity)) {
    throw InputError("evidence", "polarity " + std::to_string(polarity) + " not in {+1, -1}");
  }
  return static_cast<double>(polarity) * likert_to_evidence(likert);
}

enum class Aggregation {
  kObservedMean,     // divide by the number of observed micro-values of v
  kFullDenominator,  // divide by |U(v)|
};

inline Aggregation parse_aggregation(std::string_view s) {
  if (s == "observed_mean") return Aggregation::kObservedMean;
  if (s == "full_denominator") return Aggregation::kFullDenominator;
  throw InputError("evidence", "unknown aggregation: " + std::string(s));
}

inline std::string_view to_string(Aggregation a) {
  return a == Aggregation::kObservedMean ? "observed_mean" : "full_denominator";
}

struct MicroJudgment {
  MicroValueId micro_value;
  int polarity = 1;
  int likert = 3;
};

/// Aggregated score of value v for one sample and condition; nullopt when no
/// micro-value of v was observed.
inline std::optional<double> value_score(std::span<const MicroJudgment> judgments, const Taxonomy& t,
                                         std::string_view v, Aggregation agg = Aggregation::kObservedMean) {
  const auto& members = t.micro_values_of(v);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& j : judgments) {
    if (t.parent_of(j.micro_value) != v) {
      throw InputError("evidence", "micro-value " + j.micro_value + " does not belong to value " + std::string(v));
    }
    sum += signed_evidence(j.polarity, j.likert);
    ++n;
  }
  if (n == 0) return std::nullopt;
  const auto denom = agg == Aggregation::kObservedMean ? n : members.size();
  return sum / static_cast<double>(denom);
}

struct SampleKey {
  std::string scene_id;
  std::string action_id;

  auto operator<=>(const SampleKey&) const = default;
  bool operator==(const SampleKey&) const = default;
};

/// Per-sample, per-column shifts. Columns are value ids for the canonical
/// matrix and micro-value ids for the micro-level matrix. Rows are sorted by
/// sample key, columns follow taxonomy order.
struct ShiftMatrix {
  std::vector<SampleKey> samples;
  std::vector<std::string> columns;
  std::vector<std::optional<double>> entries;  // row-major
  std::vector<int> coverage;                   // row-major observed micro-value counts

  std::size_t rows() const noexcept { return samples.size(); }
  std::size_t cols() const noexcept { return columns.size(); }

  const std::optional<double>& at(std::size_t r, std::size_t c) const { return entries[r * cols() + c]; }
  std::optional<double>& at(std::size_t r, std::size_t c) { return entries[r * cols() + c]; }
  int coverage_at(std::size_t r, std::size_t c) const { return coverage[r * cols() + c]; }

  std::size_t column_index(std::string_view id) const {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c] == id) return c;
    }
    throw InputError("evidence", "shift matrix has no column " + std::string(id));
  }

  std::vector<std::optional<double>> column(std::size_t c) const {
    std::vector<std::optional<double>> out(rows());
    for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, c);
    return out;
  }

  bool operator==(const ShiftMatrix&) const = default;
};

namespace detail {

/// Calls fn(first, last) for each run of paired judgments sharing a sample key.
template <class Fn>
void for_each_sample(const PairedTable& p, Fn&& fn) {
  std::size_t i = 0;
  while (i < p.samples.size()) {
    std::size_t j = i + 1;
    while (j < p.samples.size() && p.samples[j].scene_id == p.samples[i].scene_id &&
           p.samples[j].action_id == p.samples[i].action_id) {
      ++j;
    }
    fn(i, j);
    i = j;
  }
}

inline std::vector<PairedJudgment> sorted_samples(const PairedTable& p) {
  auto s = p.samples;
  std::sort(s.begin(), s.end(), [](const PairedJudgment& a, const PairedJudgment& b) {
    return std::tie(a.scene_id, a.action_id, a.micro_value) < std::tie(b.scene_id, b.action_id, b.micro_value);
  });
  return s;
}

}  // namespace detail

/// delta_s(v) = E_post^s(v) - E_pre^s(v) for every sample and value observed in
/// both conditions.
inline ShiftMatrix build_shift_matrix(const PairedTable& paired, const Taxonomy& t,
                                      Aggregation agg = Aggregation::kObservedMean) {
  PairedTable p;
  p.samples = detail::sorted_samples(paired);
  ShiftMatrix sm;
  for (const auto& v : t.values()) sm.columns.push_back(v.id);
  const std::size_t nv = sm.cols();

  std::vector<double> pre_sum(nv), post_sum(nv);
  std::vector<int> count(nv);
  detail::for_each_sample(p, [&](std::size_t first, std::size_t last) {
    std::fill(pre_sum.begin(), pre_sum.end(), 0.0);
    std::fill(post_sum.begin(), post_sum.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t k = first; k < last; ++k) {
      const auto& j = p.samples[k];
      const auto v = t.value_index(t.parent_of(j.micro_value));
      pre_sum[v] += signed_evidence(j.polarity, j.likert_pre);
      post_sum[v] += signed_evidence(j.polarity, j.likert_post);
      ++count[v];
    }
    sm.samples.push_back({p.samples[first].scene_id, p.samples[first].action_id});
    for (std::size_t v = 0; v < nv; ++v) {
      sm.coverage.push_back(count[v]);
      if (count[v] == 0) {
        sm.entries.emplace_back();
        continue;
      }
      const double denom = agg == Aggregation::kObservedMean
                               ? static_cast<double>(count[v])
                               : static_cast<double>(t.micro_values_of(sm.columns[v]).size());
      sm.entries.emplace_back((post_sum[v] - pre_sum[v]) / denom);  // sums are exact on the grid
    }
  });
  return sm;
}

/// Micro-level counterpart: one column per micro-value, entry = signed
/// evidence shift of that micro-value.
inline ShiftMatrix build_micro_shift_matrix(const PairedTable& paired, const Taxonomy& t) {
  PairedTable p;
  p.samples = detail::sorted_samples(paired);
  ShiftMatrix sm;
  for (const auto& m : t.micro_values()) sm.columns.push_back(m.id);
  const std::size_t nm = sm.cols();
  detail::for_each_sample(p, [&](std::size_t first, std::size_t last) {
    sm.samples.push_back({p.samples[first].scene_id, p.samples[first].action_id});
    const auto base = sm.entries.size();
    sm.entries.resize(base + nm);
    sm.coverage.resize(base + nm, 0);
    for (std::size_t k = first; k < last; ++k) {
      const auto& j = p.samples[k];
      const auto m = t.micro_value_index(j.micro_value);
      sm.entries[base + m] = signed_evidence(j.polarity, j.likert_post) - signed_evidence(j.polarity, j.likert_pre);
      sm.coverage[base + m] = 1;
    }
  });
  return sm;
}

/// Rows whose scene is accepted by `keep`, each repeated `multiplicity(scene)`
/// times. Used by the scene-level bootstrap.
template <class Multiplicity>
ShiftMatrix select_rows(const ShiftMatrix& sm, Multiplicity&& multiplicity) {
  ShiftMatrix out;
  out.columns = sm.columns;
  for (std::size_t r = 0; r < sm.rows(); ++r) {
    const std::size_t times = multiplicity(sm.samples[r].scene_id);
    for (std::size_t k = 0; k < times; ++k) {
      out.samples.push_back(sm.samples[r]);
      for (std::size_t c = 0; c < sm.cols(); ++c) {
        out.entries.push_back(sm.at(r, c));
        out.coverage.push_back(sm.coverage_at(r, c));
      }
    }
  }
  return out;
}

inline std::string shift_matrix_csv(const ShiftMatrix& sm) {
  std::string out = "scene_id,action_id";
  for (const auto& c : sm.columns) out += "," + io::csv_field(c);
  out += '\n';
  for (std::size_t r = 0; r < sm.rows(); ++r) {
    out += io::csv_field(sm.samples[r].scene_id) + "," + io::csv_field(sm.samples[r].action_id);
    for (std::size_t c = 0; c < sm.cols(); ++c) out += "," + io::format_optional(sm.at(r, c));
    out += '\n';
  }
  return out;
}

inline std::string coverage_csv(const ShiftMatrix& sm) {
  std::string out = "scene_id,action_id";
  for (const auto& c : sm.columns) out += "," + io::csv_field(c);
  out += '\n';
  for (std::size_t r = 0; r < sm.rows(); ++r) {
    out += io::csv_field(sm.samples[r].scene_id) + "," + io::csv_field(sm.samples[r].action_id);
    for (std::size_t c = 0; c < sm.cols(); ++c) out += "," + std::to_string(sm.coverage_at(r, c));
    out += '\n';
  }
  return out;
}

}  // namespace vat
