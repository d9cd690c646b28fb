#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vat/error.hpp"
#include "vat/taxonomy.hpp"

namespace vat {

enum class Intervention { kNone, kPromptSteer, kSft, kDpo };
enum class Direction { kReinforce, kSuppress };
enum class Condition { kPre, kPost };

inline std::string_view to_string(Intervention i) {
  switch (i) {
    case Intervention::kNone: return "none";
    case Intervention::kPromptSteer: return "prompt_steer";
    case Intervention::kSft: return "sft";
    case Intervention::kDpo: return "dpo";
  }
  return "none";
}
inline std::string_view to_string(Direction d) {
  return d == Direction::kReinforce ? "reinforce" : "suppress";
}
inline std::string_view to_string(Condition c) { return c == Condition::kPre ? "pre" : "post"; }

inline Intervention parse_intervention(std::string_view s) {
  if (s == "none") return Intervention::kNone;
  if (s == "prompt_steer") return Intervention::kPromptSteer;
  if (s == "sft") return Intervention::kSft;
  if (s == "dpo") return Intervention::kDpo;
  throw InputError("dataset", "unknown intervention: " + std::string(s));
}
inline Direction parse_direction(std::string_view s) {
  if (s == "reinforce") return Direction::kReinforce;
  if (s == "suppress") return Direction::kSuppress;
  throw InputError("dataset", "unknown direction: " + std::string(s));
}
inline Condition parse_condition(std::string_view s) {
  if (s == "pre") return Condition::kPre;
  if (s == "post") return Condition::kPost;
  throw InputError("dataset", "unknown condition: " + std::string(s));
}

/// Describes one model x condition run.
struct RunManifest {
  std::string run_id;
  std::string model;
  Intervention intervention = Intervention::kNone;
  int shots = 0;
  std::optional<ValueId> target_value;
  Direction direction = Direction::kReinforce;
  Condition condition = Condition::kPre;

  bool operator==(const RunManifest&) const = default;
};

inline nlohmann::ordered_json to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["run_id"] = m.run_id;
  j["model"] = m.model;
  j["intervention"] = to_string(m.intervention);
  j["shots"] = m.shots;
  j["target_value"] = m.target_value ? nlohmann::ordered_json(*m.target_value) : nlohmann::ordered_json();
  j["direction"] = to_string(m.direction);
  j["condition"] = to_string(m.condition);
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("dataset", "run manifest must be an object");
  RunManifest m;
  auto str = [&](const char* key, std::string fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    if (!it->is_string()) throw InputError("dataset", std::string("manifest field '") + key + "' must be a string");
    return it->get<std::string>();
  };
  m.run_id = str("run_id", "");
  m.model = str("model", "");
  m.intervention = parse_intervention(str("intervention", "none"));
  m.direction = parse_direction(str("direction", "reinforce"));
  m.condition = parse_condition(str("condition", "pre"));
  if (auto it = j.find("shots"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<int>() < 0) {
      throw InputError("dataset", "manifest field 'shots' must be a non-negative integer");
    }
    m.shots = it->get<int>();
  }
  if (auto t = str("target_value", ""); !t.empty()) m.target_value = t;
  return m;
}

/// Identity of one judgment within a run.
struct RecordKey {
  std::string scene_id;
  std::string action_id;
  MicroValueId micro_value;

  auto operator<=>(const RecordKey&) const = default;
  bool operator==(const RecordKey&) const = default;
};

inline std::string describe(const RecordKey& k) {
  return "(" + k.scene_id + ", " + k.action_id + ", " + k.micro_value + ")";
}

struct JudgmentRecord {
  std::string run_id;
  std::string scene_id;
  std::string action_id;
  MicroValueId micro_value;
  int polarity = 1;  // +1 supports, -1 violates
  int likert = 3;    // 1..5
  std::optional<std::string> country;
  std::optional<std::string> topic;

  RecordKey key() const { return {scene_id, action_id, micro_value}; }
  bool operator==(const JudgmentRecord&) const = default;
};

inline bool valid_likert(int r) { return r >= 1 && r <= 5; }
inline bool valid_polarity(int p) { return p == 1 || p == -1; }

inline nlohmann::ordered_json to_json(const JudgmentRecord& r) {
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["scene_id"] = r.scene_id;
  j["action_id"] = r.action_id;
  j["micro_value"] = r.micro_value;
  j["polarity"] = r.polarity;
  j["likert"] = r.likert;
  if (r.country) j["country"] = *r.country;
  if (r.topic) j["topic"] = *r.topic;
  return j;
}

/// Parses one JSONL line. The error message does not carry the line number;
/// callers add it.
inline JudgmentRecord parse_record(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded()) throw InputError("dataset", "not valid JSON");
  if (!j.is_object()) throw InputError("dataset", "record is not an object");
  auto str = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw InputError("dataset", std::string("missing or non-string field '") + key + "'");
    }
    return it->get<std::string>();
  };
  auto opt_str = [&](const char* key) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw InputError("dataset", std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
  };
  auto integer = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) {
      throw InputError("dataset", std::string("missing or non-integer field '") + key + "'");
    }
    return it->get<std::int64_t>();
  };
  JudgmentRecord r;
  r.run_id = str("run_id");
  r.scene_id = str("scene_id");
  r.action_id = str("action_id");
  r.micro_value = str("micro_value");
  const auto polarity = integer("polarity");
  if (polarity != 1 && polarity != -1) {
    throw InputError("dataset", "polarity " + std::to_string(polarity) + " not in {+1, -1}");
  }
  const auto likert = integer("likert");
  if (likert < 1 || likert > 5) {
    throw InputError("dataset", "likert " + std::to_string(likert) + " outside 1..5");
  }
  r.polarity = static_cast<int>(polarity);
  r.likert = static_cast<int>(likert);
  r.country = opt_str("country");
  r.topic = opt_str("topic");
  return r;
}

enum class DuplicatePolicy { kStrict, kLastWrite };
enum class MalformedPolicy { kFail, kSkip };

struct IngestOptions {
  DuplicatePolicy duplicates = DuplicatePolicy::kStrict;
  MalformedPolicy malformed = MalformedPolicy::kFail;
};

struct IngestStats {
  std::size_t lines = 0;      // non-blank lines seen
  std::size_t records = 0;    // records kept
  std::size_t rejected = 0;   // malformed lines skipped
  std::size_t overwritten = 0;
  std::vector<std::string> diagnostics;
};

/// All judgments of one run, unique per (scene, action, micro-value) key.
struct RunTable {
  RunManifest manifest;
  std::map<RecordKey, JudgmentRecord> records;
  IngestStats stats;

  std::size_t size() const noexcept { return records.size(); }

  /// Equality covers manifest and records, not ingest bookkeeping.
  bool operator==(const RunTable& other) const {
    return manifest == other.manifest && records == other.records;
  }
};

/// Inserts a record, applying the duplicate policy.
inline void insert_record(RunTable& table, JudgmentRecord r, DuplicatePolicy policy,
                          std::size_t line_no = 0) {
  auto key = r.key();
  auto [it, inserted] = table.records.try_emplace(key, r);
  if (inserted) return;
  if (policy == DuplicatePolicy::kStrict) {
    std::string where = line_no ? "line " + std::to_string(line_no) + ": " : "";
    throw InputError("dataset", where + "duplicate key " + describe(key));
  }
  it->second = std::move(r);
  ++table.stats.overwritten;
}

inline RunTable ingest_run(const RunManifest& manifest, std::istream& in,
                           const IngestOptions& options = {}) {
  RunTable table;
  table.manifest = manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++table.stats.lines;
    JudgmentRecord r;
    try {
      r = parse_record(line);
      if (!manifest.run_id.empty() && r.run_id != manifest.run_id) {
        throw InputError("dataset", "run_id '" + r.run_id + "' does not match manifest run_id '" +
                                        manifest.run_id + "'");
      }
    } catch (const InputError& e) {
      if (options.malformed == MalformedPolicy::kFail) {
        throw InputError("dataset", "line " + std::to_string(line_no) + ": " + e.what());
      }
      ++table.stats.rejected;
      table.stats.diagnostics.push_back("line " + std::to_string(line_no) + ": " + e.what());
      continue;
    }
    insert_record(table, std::move(r), options.duplicates, line_no);
  }
  table.stats.records = table.records.size();
  return table;
}

inline RunTable ingest_run(const RunManifest& manifest, std::string_view text,
                           const IngestOptions& options = {}) {
  std::istringstream in{std::string(text)};
  return ingest_run(manifest, in, options);
}

/// Serializes records in key order, one JSON object per line.
inline std::string to_jsonl(const RunTable& table) {
  std::string out;
  for (const auto& [key, r] : table.records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

// --- Pairing ----------------------------------------------------------------

enum class PairPolicy { kStrict, kLenient };

struct PairedJudgment {
  std::string scene_id;
  std::string action_id;
  MicroValueId micro_value;
  int polarity = 1;
  int likert_pre = 3;
  int likert_post = 3;

  bool operator==(const PairedJudgment&) const = default;
};

struct PairedTable {
  RunManifest pre;
  RunManifest post;
  std::vector<PairedJudgment> samples;  // sorted by (scene, action, micro-value)
  std::size_t dropped_count = 0;
  std::vector<std::string> diagnostics;
};

/// Inner join on the record key. Polarity disagreement is always an error;
/// unmatched keys are an error under strict policy and counted otherwise.
inline PairedTable pair_runs(const RunTable& pre, const RunTable& post,
                             PairPolicy policy = PairPolicy::kLenient) {
  PairedTable out;
  out.pre = pre.manifest;
  out.post = post.manifest;
  auto a = pre.records.begin();
  auto b = post.records.begin();
  auto unmatched = [&](const RecordKey& key, const char* side) {
    if (policy == PairPolicy::kStrict) {
      throw InputError("dataset", std::string("pair_runs: key ") + describe(key) + " only present in " + side);
    }
    ++out.dropped_count;
  };
  while (a != pre.records.end() || b != post.records.end()) {
    if (b == post.records.end() || (a != pre.records.end() && a->first < b->first)) {
      unmatched(a->first, "pre");
      ++a;
    } else if (a == pre.records.end() || b->first < a->first) {
      unmatched(b->first, "post");
      ++b;
    } else {
      const auto& rp = a->second;
      const auto& rq = b->second;
      if (rp.polarity != rq.polarity) {
        throw InputError("dataset", "pair_runs: polarity mismatch for key " + describe(a->first));
      }
      out.samples.push_back({rp.scene_id, rp.action_id, rp.micro_value, rp.polarity, rp.likert, rq.likert});
      ++a;
      ++b;
    }
  }
  if (out.dropped_count > 0) {
    out.diagnostics.push_back("pair_runs: dropped " + std::to_string(out.dropped_count) +
                              " keys present in only one run");
  }
  return out;
}

// --- Scenario split ----------------------------------------------------------

struct ScenarioSplit {
  std::set<std::string> train;
  std::set<std::string> test;
};

/// Stratum label per scene: country x topic when every scene carries both,
/// otherwise a single stratum.
inline std::map<std::string, std::string> scenario_strata(const RunTable& table) {
  std::map<std::string, std::string> strata;
  bool complete = true;
  for (const auto& [key, r] : table.records) {
    if (!r.country || !r.topic) {
      complete = false;
      break;
    }
    strata.emplace(r.scene_id, *r.country + "|" + *r.topic);
  }
  if (!complete) {
    strata.clear();
    for (const auto& [key, r] : table.records) strata.emplace(r.scene_id, "all");
  }
  return strata;
}

/// Stratified scenario-level split. The overall train count is
/// round(ratio * N); each stratum receives floor(ratio * n_k) scenes plus one
/// extra for the strata with the largest fractional remainders, so every
/// stratum lands within one scene of its exact share. Scenes inside a stratum
/// are shuffled with a generator derived from (seed, stratum label).
inline ScenarioSplit split_scenarios(const std::set<std::string>& scene_ids, double ratio,
                                     const std::map<std::string, std::string>& strata,
                                     std::uint64_t seed) {
  if (scene_ids.empty()) throw InputError("dataset", "split_scenarios: no scenes");
  if (!(ratio > 0.0 && ratio < 1.0)) throw InputError("dataset", "split_scenarios: ratio must be in (0, 1)");

  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& s : scene_ids) {
    auto it = strata.find(s);
    if (it == strata.end()) throw InputError("dataset", "split_scenarios: scene " + s + " has no stratum");
    groups[it->second].push_back(s);
  }

  struct Quota {
    std::string label;
    std::size_t base;
    double remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [label, members] : groups) {
    const double exact = ratio * static_cast<double>(members.size());
    const auto base = static_cast<std::size_t>(std::floor(exact));
    quotas.push_back({label, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  const auto total = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(scene_ids.size())));
  std::vector<std::size_t> order(quotas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return quotas[x].remainder > quotas[y].remainder;
  });
  for (std::size_t i = 0; assigned < total && i < order.size(); ++i) {
    if (quotas[order[i]].remainder > 0.0) {
      ++quotas[order[i]].base;
      ++assigned;
    }
  }

  ScenarioSplit out;
  std::size_t q = 0;
  for (auto& [label, members] : groups) {
    std::seed_seq seq(label.begin(), label.end());
    std::vector<std::uint32_t> state(2);
    seq.generate(state.begin(), state.end());
    std::mt19937_64 rng(seed ^ ((std::uint64_t{state[0]} << 32) | state[1]));
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train = quotas[q++].base;
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < n_train ? out.train : out.test).insert(members[i]);
    }
  }
  return out;
}

inline std::set<std::string> scene_ids(const RunTable& table) {
  std::set<std::string> out;
  for (const auto& [key, r] : table.records) out.insert(r.scene_id);
  return out;
}

inline std::set<std::string> scene_ids(const PairedTable& table) {
  std::set<std::string> out;
  for (const auto& s : table.samples) out.insert(s.scene_id);
  return out;
}

}  // namespace vat
