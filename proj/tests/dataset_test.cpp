#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include "vat/dataset.hpp"
#include "vat/io.hpp"

using vat::InputError;

namespace {

std::string line(const std::string& scene, const std::string& action, const std::string& micro, int polarity,
                 int likert, const std::string& run = "r") {
  return R"({"run_id":")" + run + R"(","scene_id":")" + scene + R"(","action_id":")" + action +
         R"(","micro_value":")" + micro + R"(","polarity":)" + std::to_string(polarity) + R"(,"likert":)" +
         std::to_string(likert) + "}\n";
}

vat::RunManifest manifest(vat::Condition c = vat::Condition::kPre) {
  vat::RunManifest m;
  m.condition = c;
  return m;
}

}  // namespace

TEST(Ingest, ThreeValidLines) {
  const auto text = line("s1", "a", "m1", 1, 3) + line("s1", "a", "m2", -1, 5) + line("s2", "a", "m1", 1, 1);
  const auto table = vat::ingest_run(manifest(), text);
  EXPECT_EQ(table.size(), 3u);
  EXPECT_EQ(table.stats.lines, 3u);
  EXPECT_EQ(table.stats.rejected, 0u);
}

TEST(Ingest, LikertOutOfRangeNamesLine) {
  const auto text = line("s1", "a", "m1", 1, 3) + line("s1", "a", "m2", 1, 6);
  try {
    vat::ingest_run(manifest(), text);
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("likert"), std::string::npos) << e.what();
  }
}

TEST(Ingest, RejectsBadPolarityAndMalformedJson) {
  EXPECT_THROW(vat::ingest_run(manifest(), line("s", "a", "m", 0, 3)), InputError);
  EXPECT_THROW(vat::ingest_run(manifest(), std::string("{not json}\n")), InputError);
  EXPECT_THROW(vat::ingest_run(manifest(), std::string(R"({"run_id":"r","scene_id":"s"})") + "\n"), InputError);
  // A fractional likert is not an integer response.
  EXPECT_THROW(vat::ingest_run(manifest(), std::string(R"({"run_id":"r","scene_id":"s","action_id":"a",)"
                                                       R"("micro_value":"m","polarity":1,"likert":3.5})")),
               InputError);
}

TEST(Ingest, SkipPolicyCountsRejectedLines) {
  const auto text = line("s1", "a", "m1", 1, 3) + "garbage\n" + line("s1", "a", "m2", 1, 9);
  vat::IngestOptions opts;
  opts.malformed = vat::MalformedPolicy::kSkip;
  const auto table = vat::ingest_run(manifest(), text, opts);
  EXPECT_EQ(table.size(), 1u);
  EXPECT_EQ(table.stats.rejected, 2u);
  EXPECT_EQ(table.stats.diagnostics.size(), 2u);
}

TEST(Ingest, DuplicateKeyUnderStrictPolicy) {
  const auto text = line("s1", "a", "m1", 1, 3) + line("s1", "a", "m1", 1, 4);
  EXPECT_THROW(vat::ingest_run(manifest(), text), InputError);
  vat::IngestOptions opts;
  opts.duplicates = vat::DuplicatePolicy::kLastWrite;
  const auto table = vat::ingest_run(manifest(), text, opts);
  ASSERT_EQ(table.size(), 1u);
  EXPECT_EQ(table.records.begin()->second.likert, 4);
  EXPECT_EQ(table.stats.overwritten, 1u);
}

TEST(Ingest, RunIdMustMatchManifest) {
  auto m = manifest();
  m.run_id = "expected";
  EXPECT_THROW(vat::ingest_run(m, line("s", "a", "m", 1, 3, "other")), InputError);
  EXPECT_EQ(vat::ingest_run(m, line("s", "a", "m", 1, 3, "expected")).size(), 1u);
}

TEST(Ingest, OrderInvariant) {
  std::vector<std::string> lines;
  for (int s = 0; s < 20; ++s) {
    for (int m = 0; m < 3; ++m) {
      lines.push_back(line("s" + std::to_string(s), "a", "m" + std::to_string(m), (s + m) % 2 ? 1 : -1, 1 + (s * 7 + m) % 5));
    }
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string out;
    for (const auto& l : v) out += l;
    return out;
  };
  const auto base = vat::ingest_run(manifest(), join(lines));
  std::mt19937 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(lines.begin(), lines.end(), rng);
    EXPECT_EQ(vat::ingest_run(manifest(), join(lines)), base);
  }
}

TEST(Ingest, ReadsGzipInput) {
  const auto text = line("s1", "a", "m1", 1, 3) + line("s2", "a", "m1", 1, 4);
  const auto path = std::filesystem::temp_directory_path() / "vat_dataset_test.jsonl.gz";
  gzFile gz = gzopen(path.string().c_str(), "wb");
  ASSERT_NE(gz, nullptr);
  gzwrite(gz, text.data(), static_cast<unsigned>(text.size()));
  gzclose(gz);
  EXPECT_EQ(vat::io::read_file(path), text);
  EXPECT_EQ(vat::ingest_run(manifest(), vat::io::read_file(path)).size(), 2u);
  std::filesystem::remove(path);
}

TEST(Manifest, JsonRoundTripAndValidation) {
  vat::RunManifest m{"run-7", "model-x", vat::Intervention::kDpo, 4, "power", vat::Direction::kSuppress,
                     vat::Condition::kPost};
  EXPECT_EQ(vat::manifest_from_json(nlohmann::json::parse(vat::to_json(m).dump())), m);
  EXPECT_THROW(vat::manifest_from_json(nlohmann::json::parse(R"({"intervention":"rlhf"})")), InputError);
  EXPECT_THROW(vat::manifest_from_json(nlohmann::json::parse(R"({"shots":-2})")), InputError);
}

TEST(Pairing, IdenticalKeySets) {
  std::string text;
  for (int s = 0; s < 5; ++s) text += line("s" + std::to_string(s), "a", "m", 1, 3);
  const auto pre = vat::ingest_run(manifest(), text);
  const auto post = vat::ingest_run(manifest(vat::Condition::kPost), text);
  const auto p = vat::pair_runs(pre, post, vat::PairPolicy::kStrict);
  EXPECT_EQ(p.samples.size(), 5u);
  EXPECT_EQ(p.dropped_count, 0u);
}

TEST(Pairing, LenientDropsUnmatchedStrictFails) {
  std::string text;
  for (int s = 0; s < 5; ++s) text += line("s" + std::to_string(s), "a", "m", 1, 3);
  const auto pre = vat::ingest_run(manifest(), text);
  const auto post = vat::ingest_run(manifest(vat::Condition::kPost), text.substr(0, text.rfind("{")));
  const auto p = vat::pair_runs(pre, post, vat::PairPolicy::kLenient);
  EXPECT_EQ(p.samples.size(), 4u);
  EXPECT_EQ(p.dropped_count, 1u);
  EXPECT_FALSE(p.diagnostics.empty());
  EXPECT_THROW(vat::pair_runs(pre, post, vat::PairPolicy::kStrict), InputError);
}

TEST(Pairing, DroppedCountIsSymmetricDifference) {
  const auto pre = vat::ingest_run(manifest(), line("s1", "a", "m", 1, 3) + line("s2", "a", "m", 1, 3));
  const auto post = vat::ingest_run(manifest(), line("s2", "a", "m", 1, 4) + line("s3", "a", "m", 1, 3) +
                                                    line("s4", "a", "m", 1, 3));
  EXPECT_EQ(vat::pair_runs(pre, post).dropped_count, 3u);
  EXPECT_EQ(vat::pair_runs(post, pre).dropped_count, 3u);
}

TEST(Pairing, PolarityMismatchIsAlwaysAnError) {
  const auto pre = vat::ingest_run(manifest(), line("s1", "a", "m", 1, 3));
  const auto post = vat::ingest_run(manifest(), line("s1", "a", "m", -1, 3));
  EXPECT_THROW(vat::pair_runs(pre, post, vat::PairPolicy::kLenient), InputError);
  EXPECT_THROW(vat::pair_runs(pre, post, vat::PairPolicy::kStrict), InputError);
}

TEST(Split, SingleSceneLandsOnOneSide) {
  const auto split = vat::split_scenarios({"only"}, 0.7, {{"only", "x"}}, 3);
  EXPECT_EQ(split.train.size() + split.test.size(), 1u);
}

TEST(Split, RejectsBadArguments) {
  EXPECT_THROW(vat::split_scenarios({}, 0.7, {}, 1), InputError);
  EXPECT_THROW(vat::split_scenarios({"a"}, 1.0, {{"a", "x"}}, 1), InputError);
  EXPECT_THROW(vat::split_scenarios({"a"}, 0.0, {{"a", "x"}}, 1), InputError);
  EXPECT_THROW(vat::split_scenarios({"a"}, 0.5, {}, 1), InputError);
}

TEST(Split, BundledFixtureIsDisjointAndStratified) {
  const auto text = vat::io::read_file(VAT_DATA_DIR "/fixtures/split_264/pre.jsonl");
  const auto table = vat::ingest_run(vat::RunManifest{}, text);
  const auto scenes = vat::scene_ids(table);
  ASSERT_EQ(scenes.size(), 264u);
  const auto strata = vat::scenario_strata(table);
  const auto split = vat::split_scenarios(scenes, 0.7, strata, 11);

  // Brute-force checks: disjoint, covering, global count round(0.7 * 264) = 185,
  // and each stratum within one scene of its exact share.
  for (const auto& s : split.train) EXPECT_EQ(split.test.count(s), 0u) << s;
  EXPECT_EQ(split.train.size() + split.test.size(), 264u);
  EXPECT_EQ(split.train.size(), 185u);
  EXPECT_EQ(split.test.size(), 79u);
  std::map<std::string, std::pair<int, int>> per;
  for (const auto& s : scenes) {
    auto& [train, total] = per[strata.at(s)];
    train += static_cast<int>(split.train.count(s));
    ++total;
  }
  EXPECT_EQ(per.size(), 132u);
  for (const auto& [label, counts] : per) {
    const double exact = 0.7 * counts.second;
    EXPECT_LE(std::abs(counts.first - exact), 1.0) << label;
  }
}

TEST(Split, PureFunctionOfSeed) {
  std::set<std::string> scenes;
  std::map<std::string, std::string> strata;
  for (int i = 0; i < 60; ++i) {
    scenes.insert("s" + std::to_string(i));
    strata["s" + std::to_string(i)] = "g" + std::to_string(i % 3);
  }
  const auto a = vat::split_scenarios(scenes, 0.7, strata, 5);
  const auto b = vat::split_scenarios(scenes, 0.7, strata, 5);
  EXPECT_EQ(a.train, b.train);
  bool any_differs = false;
  for (std::uint64_t seed = 6; seed < 12; ++seed) {
    any_differs |= vat::split_scenarios(scenes, 0.7, strata, seed).train != a.train;
  }
  EXPECT_TRUE(any_differs);
}

TEST(Split, SingleStratumWithoutCountryTopic) {
  const auto table = vat::ingest_run(manifest(), line("s1", "a", "m", 1, 3) + line("s2", "a", "m", 1, 3));
  const auto strata = vat::scenario_strata(table);
  EXPECT_EQ(strata.at("s1"), strata.at("s2"));
}
