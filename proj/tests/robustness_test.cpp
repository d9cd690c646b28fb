#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "vat/robustness.hpp"
#include "vat/synthetic.hpp"

using vat::InputError;

namespace {

vat::PairedTable planted_pairs(std::uint64_t seed, int n, double micro_noise = 0.0) {
  vat::PlantedSpec spec;
  spec.n_scenes = n;
  spec.seed = seed;
  spec.target_mean_shift = 0.3;
  spec.micro_noise_scale = micro_noise;
  spec.coupling = {{"security", "conformity", 0.7},
                   {"security", "tradition", 0.5},
                   {"conformity", "tradition", 0.4},
                   {"power", "achievement", 0.3}};
  const auto runs = vat::generate(spec);
  return vat::pair_runs(runs.pre, runs.post, vat::PairPolicy::kStrict);
}

vat::ShiftMatrix columns_matrix(const std::vector<std::vector<double>>& cols) {
  vat::ShiftMatrix sm;
  for (std::size_t c = 0; c < cols.size(); ++c) sm.columns.push_back("v" + std::to_string(c));
  for (std::size_t r = 0; r < cols.front().size(); ++r) {
    sm.samples.push_back({"s" + std::to_string(r), "a"});
    for (const auto& c : cols) {
      sm.entries.emplace_back(c[r]);
      sm.coverage.push_back(1);
    }
  }
  return sm;
}

// Re-implementation of one subsample replicate: filter the paired table by
// scene and rebuild everything from scratch.
double rebuilt_replicate(const vat::PairedTable& p, const vat::Taxonomy& t, const std::set<std::string>& keep) {
  vat::PairedTable sub;
  for (const auto& s : p.samples) {
    if (keep.count(s.scene_id)) sub.samples.push_back(s);
  }
  return vat::system_tax(vat::coupling_matrix(vat::build_shift_matrix(sub, t)));
}

}  // namespace

TEST(Bootstrap, FullFractionHasZeroSpread) {
  const auto t = vat::default_taxonomy();
  const auto p = planted_pairs(1, 120);
  vat::BootstrapOptions opts;
  opts.fraction = 1.0;
  opts.replicates = 7;
  const auto res = vat::bootstrap_nvat(p, t, opts);
  ASSERT_EQ(res.replicate_values.size(), 7u);
  for (double v : res.replicate_values) EXPECT_EQ(v, res.full_sample_nvat);
  EXPECT_EQ(res.std, 0.0);
  EXPECT_EQ(res.mean, res.full_sample_nvat);
}

TEST(Bootstrap, DeterministicAcrossRunsAndThreadCounts) {
  const auto t = vat::default_taxonomy();
  const auto p = planted_pairs(2, 150);
  vat::BootstrapOptions opts;
  opts.replicates = 12;
  opts.seed = 99;
  const auto a = vat::bootstrap_nvat(p, t, opts);
  const auto b = vat::bootstrap_nvat(p, t, opts);
  opts.jobs = 4;
  const auto c = vat::bootstrap_nvat(p, t, opts);
  EXPECT_EQ(a.replicate_values, b.replicate_values);
  EXPECT_EQ(a.replicate_values, c.replicate_values);
  opts.seed = 100;
  EXPECT_NE(vat::bootstrap_nvat(p, t, opts).replicate_values, a.replicate_values);
}

TEST(Bootstrap, DrawsWholeScenesOnly) {
  std::vector<std::string> scenes;
  for (int i = 0; i < 50; ++i) scenes.push_back("s" + std::to_string(i));
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto picked = vat::draw_scenes(scenes, 0.8, vat::ResampleMode::kSubsample, 3, r);
    EXPECT_EQ(picked.size(), 40u);
    for (const auto& [scene, times] : picked) EXPECT_EQ(times, 1u) << scene;
    const auto boot = vat::draw_scenes(scenes, 0.8, vat::ResampleMode::kWithReplacement, 3, r);
    std::size_t total = 0;
    for (const auto& [scene, times] : boot) total += times;
    EXPECT_EQ(total, 40u);
  }
  EXPECT_EQ(vat::scenes_per_replicate(0.8, 264), 212u);
  EXPECT_EQ(vat::scenes_per_replicate(0.5, 3), 2u);
}

TEST(Bootstrap, SceneAtomicityMembership) {
  // Two actions per scene: a replicate must contain both or neither.
  vat::PlantedSpec spec;
  spec.n_scenes = 60;
  spec.actions_per_scene = 2;
  spec.coupling = {{"power", "achievement", 0.5}};
  const auto runs = vat::generate(spec);
  const auto p = vat::pair_runs(runs.pre, runs.post);
  const auto full = vat::build_shift_matrix(p, spec.taxonomy);
  const auto set = vat::scene_ids(p);
  const std::vector<std::string> scenes(set.begin(), set.end());
  for (std::uint64_t r = 0; r < 10; ++r) {
    const auto picked = vat::draw_scenes(scenes, 0.8, vat::ResampleMode::kSubsample, 5, r);
    const auto sub = vat::select_rows(full, [&](const std::string& s) { return picked.count(s) ? std::size_t{1} : 0; });
    std::map<std::string, int> rows;
    for (const auto& k : sub.samples) ++rows[k.scene_id];
    EXPECT_EQ(rows.size(), picked.size());
    for (const auto& [scene, n] : rows) {
      EXPECT_TRUE(picked.count(scene)) << scene;
      EXPECT_EQ(n, 2) << scene;
    }
  }
}

TEST(Bootstrap, MatchesIndependentSubsampleLoop) {
  const auto t = vat::default_taxonomy();
  const auto p = planted_pairs(3, 200);
  vat::BootstrapOptions opts;
  opts.replicates = 200;
  opts.seed = 17;
  opts.jobs = 4;
  const auto res = vat::bootstrap_nvat(p, t, opts);

  const auto set = vat::scene_ids(p);
  const std::vector<std::string> scenes(set.begin(), set.end());
  double sum = 0.0;
  for (std::size_t r = 0; r < 200; ++r) {
    std::set<std::string> keep;
    for (const auto& [s, n] : vat::draw_scenes(scenes, 0.8, vat::ResampleMode::kSubsample, 17, r)) keep.insert(s);
    const double v = rebuilt_replicate(p, t, keep);
    EXPECT_NEAR(res.replicate_values[r], v, 1e-12) << r;
    sum += v;
  }
  EXPECT_NEAR(res.mean, sum / 200.0, 1e-12);
  EXPECT_LE(std::abs(res.mean - res.full_sample_nvat), 3.0 * res.std);
  EXPECT_GT(res.std, 0.0);
  EXPECT_LT(res.std, 0.05);
}

TEST(Bootstrap, RejectsBadArguments) {
  const auto t = vat::default_taxonomy();
  const auto p = planted_pairs(1, 10);
  vat::BootstrapOptions opts;
  opts.fraction = 0.0;
  EXPECT_THROW(vat::bootstrap_nvat(p, t, opts), InputError);
  opts.fraction = 1.2;
  EXPECT_THROW(vat::bootstrap_nvat(p, t, opts), InputError);
  opts.fraction = 0.8;
  opts.replicates = 0;
  EXPECT_THROW(vat::bootstrap_nvat(p, t, opts), InputError);
  EXPECT_THROW(vat::bootstrap_nvat(planted_pairs(1, 1), t, vat::BootstrapOptions{}), InputError);
}

TEST(RankAgreement, MonotoneTransformColumnsAgreePerfectly) {
  // Three columns that are strictly increasing functions of one another.
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  std::vector<double> a(20), b(20), c(20);
  for (std::size_t i = 0; i < 20; ++i) {
    a[i] = normal(rng);
    b[i] = std::exp(a[i]);
    c[i] = a[i] * a[i] * a[i] + 2.0 * a[i];
  }
  const auto res = vat::rank_agreement(columns_matrix({a, b, c}), {2});
  // Brute force: every off-diagonal coupling is exactly 1 under both methods,
  // so each VAT is sqrt(2).
  for (double v : res.spearman_based_profile) EXPECT_NEAR(v, std::sqrt(2.0), 1e-12);
  for (double v : res.kendall_based_profile) EXPECT_NEAR(v, std::sqrt(2.0), 1e-12);
  EXPECT_EQ(res.rank_agreement, 1.0);
  EXPECT_FALSE(res.degenerate);
}

TEST(RankAgreement, AllZeroIsDegenerate) {
  const std::vector<double> zeros(10, 0.0);
  const auto res = vat::rank_agreement(columns_matrix({zeros, zeros, zeros}), {2});
  EXPECT_TRUE(res.degenerate);
}

TEST(RankAgreement, TwoValuesGiveBoundedAgreement) {
  const auto res = vat::rank_agreement(columns_matrix({{1, 2, 3, 4}, {2, 1, 4, 3}}), {2});
  EXPECT_EQ(res.spearman_based_profile.size(), 2u);
  EXPECT_TRUE(res.degenerate || std::abs(res.rank_agreement) == 1.0);
}

TEST(RankAgreement, HighOnPlantedData) {
  const auto sm = vat::build_shift_matrix(planted_pairs(5, 600), vat::default_taxonomy());
  const auto res = vat::rank_agreement(sm);
  EXPECT_EQ(res.values.size(), 10u);
  EXPECT_GT(res.rank_agreement, 0.8);
  vat::AgreementOptions kendall;
  kendall.comparison = vat::CorrelationMethod::kKendall;
  EXPECT_GT(vat::rank_agreement(sm, kendall).rank_agreement, 0.6);
}

TEST(CompareProfiles, TiesAndScaling) {
  EXPECT_EQ(vat::compare_profiles({1, 2, 3}, {10, 20, 30}).correlation, 1.0);
  EXPECT_TRUE(vat::compare_profiles({0, 0, 0}, {1, 2, 3}).degenerate);
  EXPECT_EQ(vat::compare_profiles({0.5, 0.5}, {0.5, 0.5}).correlation, 1.0);
  const auto c = vat::compare_profiles({1, 1, 1}, {1, 2, 3});
  EXPECT_TRUE(c.degenerate);
  EXPECT_THROW(vat::compare_profiles({1, 2}, {1}), InputError);
}

TEST(CrossGranularity, OneMicroValuePerValueIsExact) {
  const auto t = vat::default_taxonomy();
  auto p = planted_pairs(6, 300);
  std::erase_if(p.samples, [&](const vat::PairedJudgment& s) { return !s.micro_value.ends_with(".1"); });
  const auto res = vat::cross_granularity(p, t);
  EXPECT_EQ(res.values.size(), 10u);
  for (std::size_t i = 0; i < res.values.size(); ++i) EXPECT_NEAR(res.aggregated_profile[i], res.ten_d_profile[i], 1e-12);
  EXPECT_EQ(res.rank_correlation, 1.0);
  std::size_t observed = 0;
  for (const auto& m : res.micro_profile) observed += m.has_value();
  EXPECT_EQ(observed, 10u);
}

TEST(CrossGranularity, IndependentMicroCopiesKeepRanking) {
  const auto res = vat::cross_granularity(planted_pairs(7, 500, 0.5), vat::default_taxonomy());
  EXPECT_EQ(res.micro_values.size(), 56u);
  EXPECT_GE(res.rank_correlation, 0.9);
}

TEST(CrossGranularity, AllZeroIsDegenerate) {
  auto p = planted_pairs(8, 50);
  for (auto& s : p.samples) s.likert_post = s.likert_pre;
  const auto res = vat::cross_granularity(p, vat::default_taxonomy(), {2});
  EXPECT_TRUE(res.degenerate);
  EXPECT_FALSE(res.diagnostics.empty());
}

TEST(CrossGranularity, MissingValueIsExcludedWithDiagnostic) {
  auto p = planted_pairs(9, 200);
  std::erase_if(p.samples, [](const vat::PairedJudgment& s) { return s.micro_value.rfind("power.", 0) == 0; });
  const auto res = vat::cross_granularity(p, vat::default_taxonomy());
  EXPECT_EQ(res.values.size(), 9u);
  EXPECT_EQ(std::count(res.values.begin(), res.values.end(), "power"), 0);
  EXPECT_FALSE(res.diagnostics.empty());
}

TEST(CrossGranularity, AggregationModesAreHomogeneous) {
  const auto p = planted_pairs(10, 300, 0.5);
  const auto t = vat::default_taxonomy();
  vat::CrossGranularityOptions opts;
  const auto mean = vat::cross_granularity(p, t, opts);
  opts.aggregation = vat::MicroAggregation::kSum;
  const auto sum = vat::cross_granularity(p, t, opts);
  for (std::size_t i = 0; i < mean.values.size(); ++i) {
    const auto n = static_cast<double>(t.micro_values_of(mean.values[i]).size());
    EXPECT_NEAR(sum.aggregated_profile[i], n * mean.aggregated_profile[i], 1e-12);
  }
  // Scaling every micro VAT by a positive constant leaves the comparison unchanged.
  auto scaled = mean.aggregated_profile;
  for (auto& x : scaled) x *= 3.0;
  EXPECT_EQ(vat::compare_profiles(scaled, mean.ten_d_profile).correlation,
            vat::compare_profiles(mean.aggregated_profile, mean.ten_d_profile).correlation);
}
