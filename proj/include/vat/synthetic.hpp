#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "vat/dataset.hpp"
#include "vat/error.hpp"
#include "vat/evidence.hpp"
#include "vat/parallel.hpp"
#include "vat/taxonomy.hpp"

namespace vat {

struct PlantedCoupling {
  ValueId u;
  ValueId w;
  double r = 0.0;  // latent Gaussian correlation
};

/// A paired dataset with known latent coupling between value shifts.
struct PlantedSpec {
  Taxonomy taxonomy = default_taxonomy();
  int n_scenes = 500;
  std::vector<PlantedCoupling> coupling;
  ValueId target = "security";
  double target_mean_shift = 0.0;
  double noise_scale = 1.0;
  std::uint64_t seed = 0;

  int actions_per_scene = 1;
  double micro_noise_scale = 0.0;  // independent per-micro-value perturbation
  bool mixed_polarity = false;
  int n_countries = 12;
  int n_topics = 11;
  std::string model = "synthetic";
  Intervention intervention = Intervention::kPromptSteer;
  int shots = 8;
};

struct GeneratedRuns {
  RunTable pre;
  RunTable post;
  std::vector<SampleKey> samples;
  std::vector<std::vector<double>> latent;  // per sample, per value, before quantization
};

inline double quantize_shift(double x) { return std::clamp(std::round(2.0 * x) / 2.0, -1.0, 1.0); }

/// Validated Cholesky-like factor of the planted correlation matrix; throws on
/// a non-PSD specification.
inline Eigen::MatrixXd planted_factor(const PlantedSpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.taxonomy.value_count());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(n, n);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& c : spec.coupling) {
    if (!spec.taxonomy.has_value(c.u) || !spec.taxonomy.has_value(c.w)) {
      throw InputError("synthetic", "coupling refers to unknown value " + c.u + " / " + c.w);
    }
    auto i = spec.taxonomy.value_index(c.u);
    auto j = spec.taxonomy.value_index(c.w);
    if (i == j) throw InputError("synthetic", "coupling of value " + c.u + " with itself");
    if (!(c.r > -1.0 && c.r < 1.0)) throw InputError("synthetic", "latent correlation must be in (-1, 1)");
    if (!seen.insert(std::minmax(i, j)).second) {
      throw InputError("synthetic", "coupling pair (" + c.u + ", " + c.w + ") listed twice");
    }
    cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c.r;
    cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c.r;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.eigenvalues().minCoeff() < -1e-10) {
    throw InputError("synthetic", "planted coupling implies a covariance that is not positive semidefinite");
  }
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

inline void validate(const PlantedSpec& spec) {
  if (spec.n_scenes < 0) throw InputError("synthetic", "n_scenes must be >= 0");
  if (spec.actions_per_scene < 1) throw InputError("synthetic", "actions_per_scene must be >= 1");
  if (!(spec.noise_scale > 0.0)) throw InputError("synthetic", "noise_scale must be > 0");
  if (spec.micro_noise_scale < 0.0) throw InputError("synthetic", "micro_noise_scale must be >= 0");
  if (spec.n_countries < 1 || spec.n_topics < 1) throw InputError("synthetic", "strata sizes must be >= 1");
  if (!spec.taxonomy.has_value(spec.target)) throw InputError("synthetic", "unknown target value " + spec.target);
}

inline std::string padded_id(char prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*d", prefix, width, i);
  return buf;
}

/// Draws latent value shifts per sample, quantizes them to the evidence grid,
/// and writes matching pre/post Likert records for every micro-value.
/// Deterministic given the spec; each scene uses its own generator derived
/// from (seed, scene index).
inline GeneratedRuns generate(const PlantedSpec& spec, unsigned jobs = 1) {
  validate(spec);
  const auto factor = planted_factor(spec);
  const auto& t = spec.taxonomy;
  const auto nv = t.value_count();

  GeneratedRuns out;
  out.pre.manifest = {spec.model + "-pre", spec.model, Intervention::kNone, 0, spec.target,
                      spec.target_mean_shift < 0 ? Direction::kSuppress : Direction::kReinforce, Condition::kPre};
  out.post.manifest = out.pre.manifest;
  out.post.manifest.run_id = spec.model + "-post";
  out.post.manifest.intervention = spec.intervention;
  out.post.manifest.shots = spec.shots;
  out.post.manifest.condition = Condition::kPost;

  const int width = std::max(4, static_cast<int>(std::to_string(std::max(spec.n_scenes - 1, 0)).size()));
  const auto target = t.value_index(spec.target);
  const auto n = static_cast<std::size_t>(spec.n_scenes);
  const auto per = static_cast<std::size_t>(spec.actions_per_scene);

  struct SceneOut {
    std::vector<JudgmentRecord> pre, post;
    std::vector<std::vector<double>> latent;
  };
  std::vector<SceneOut> scenes(n);
  parallel_for(n, jobs, [&](std::size_t s) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(s)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> coin(0, 1);

    const auto stratum = static_cast<int>(s) % (spec.n_countries * spec.n_topics);
    const std::string scene_id = padded_id('s', static_cast<int>(s), width);
    const std::string country = "country_" + std::to_string(stratum / spec.n_topics);
    const std::string topic = "topic_" + std::to_string(stratum % spec.n_topics);
    auto& so = scenes[s];

    for (std::size_t a = 0; a < per; ++a) {
      const std::string action_id = "a" + std::to_string(a);
      Eigen::VectorXd eps(static_cast<Eigen::Index>(nv));
      for (Eigen::Index k = 0; k < eps.size(); ++k) eps(k) = normal(rng);
      Eigen::VectorXd z = spec.noise_scale * (factor * eps);
      z(static_cast<Eigen::Index>(target)) += spec.target_mean_shift;
      so.latent.emplace_back(z.data(), z.data() + z.size());

      for (const auto& m : t.micro_values()) {
        const auto v = static_cast<Eigen::Index>(t.value_index(m.parent));
        double shift = quantize_shift(z(v));
        if (spec.micro_noise_scale > 0.0) shift = quantize_shift(z(v) + spec.micro_noise_scale * normal(rng));
        std::vector<double> admissible;
        for (double level : kEvidenceGrid) {
          if (level + shift >= -1.0 && level + shift <= 1.0) admissible.push_back(level);
        }
        std::uniform_int_distribution<std::size_t> pick(0, admissible.size() - 1);
        const double pre = admissible[pick(rng)];
        const double post = pre + shift;
        const int polarity = spec.mixed_polarity && coin(rng) == 0 ? -1 : 1;

        JudgmentRecord r;
        r.scene_id = scene_id;
        r.action_id = action_id;
        r.micro_value = m.id;
        r.polarity = polarity;
        r.country = country;
        r.topic = topic;
        r.run_id = out.pre.manifest.run_id;
        r.likert = evidence_to_likert(polarity * pre);
        so.pre.push_back(r);
        r.run_id = out.post.manifest.run_id;
        r.likert = evidence_to_likert(polarity * post);
        so.post.push_back(std::move(r));
      }
    }
  });

  for (std::size_t s = 0; s < n; ++s) {
    for (auto& r : scenes[s].pre) insert_record(out.pre, std::move(r), DuplicatePolicy::kStrict);
    for (auto& r : scenes[s].post) insert_record(out.post, std::move(r), DuplicatePolicy::kStrict);
    for (std::size_t a = 0; a < per; ++a) {
      out.samples.push_back({padded_id('s', static_cast<int>(s), width), "a" + std::to_string(a)});
      out.latent.push_back(std::move(scenes[s].latent[a]));
    }
  }
  out.pre.stats.records = out.pre.size();
  out.post.stats.records = out.post.size();
  return out;
}

/// Reads a spec document. The taxonomy is resolved by the caller.
inline PlantedSpec planted_spec_from_json(const nlohmann::json& j, Taxonomy taxonomy) {
  if (!j.is_object()) throw InputError("synthetic", "planted spec must be an object");
  PlantedSpec s;
  s.taxonomy = std::move(taxonomy);
  try {
    s.n_scenes = j.value("n_scenes", s.n_scenes);
    s.target = j.value("target", s.target);
    s.target_mean_shift = j.value("target_mean_shift", s.target_mean_shift);
    s.noise_scale = j.value("noise_scale", s.noise_scale);
    s.seed = j.value("seed", s.seed);
    s.actions_per_scene = j.value("actions_per_scene", s.actions_per_scene);
    s.micro_noise_scale = j.value("micro_noise_scale", s.micro_noise_scale);
    s.mixed_polarity = j.value("mixed_polarity", s.mixed_polarity);
    s.n_countries = j.value("n_countries", s.n_countries);
    s.n_topics = j.value("n_topics", s.n_topics);
    s.model = j.value("model", s.model);
    s.shots = j.value("shots", s.shots);
    if (j.contains("intervention")) s.intervention = parse_intervention(j["intervention"].get<std::string>());
    if (j.contains("coupling")) {
      for (const auto& c : j["coupling"]) {
        s.coupling.push_back({c.at("u").get<std::string>(), c.at("w").get<std::string>(), c.at("r").get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("synthetic", std::string("malformed planted spec: ") + e.what());
  }
  validate(s);
  planted_factor(s);
  return s;
}

}  // namespace vat
