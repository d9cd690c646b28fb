#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vat/dataset.hpp"
#include "vat/elicitation.hpp"
#include "vat/error.hpp"
#include "vat/evidence.hpp"
#include "vat/figures.hpp"
#include "vat/io.hpp"
#include "vat/metrics.hpp"
#include "vat/mock_endpoint.hpp"
#include "vat/robustness.hpp"
#include "vat/synthetic.hpp"
#include "vat/taxonomy.hpp"

namespace vat {

inline constexpr std::string_view kVersion = "0.1.0";

namespace fs = std::filesystem;

/// A config document plus the directory its relative paths are resolved against.
struct Config {
  nlohmann::json doc = nlohmann::json::object();
  fs::path base = ".";

  bool has(const char* key) const { return doc.contains(key) && !doc[key].is_null(); }

  template <class T>
  T get(const char* key, T fallback) const {
    if (!has(key)) return fallback;
    try {
      return doc[key].get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InputError("cli", std::string("config key '") + key + "' has the wrong type");
    }
  }

  template <class T>
  T require(const char* key) const {
    if (!has(key)) throw InputError("cli", std::string("config is missing '") + key + "'");
    return get<T>(key, T{});
  }

  fs::path path(const char* key) const {
    const fs::path p = require<std::string>(key);
    return p.is_absolute() ? p : base / p;
  }

  std::optional<fs::path> optional_path(const char* key) const {
    if (!has(key)) return std::nullopt;
    return path(key);
  }
};

inline Config load_config(const fs::path& file) {
  Config c;
  const auto text = io::read_file(file);
  c.doc = nlohmann::json::parse(text, nullptr, false);
  if (c.doc.is_discarded() || !c.doc.is_object()) {
    throw InputError("cli", "config " + file.string() + " is not a JSON object");
  }
  c.base = file.has_parent_path() ? file.parent_path() : fs::path(".");
  return c;
}

struct CommandContext {
  unsigned jobs = 1;
  bool exact_out = false;  // write into output_dir itself instead of a run-stamped child
};

struct CommandResult {
  fs::path output_dir;
  std::vector<std::string> files;  // relative to output_dir
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
};

namespace detail {

struct InputFile {
  std::string role;
  fs::path path;
  std::string content;
  std::string sha256;
};

inline InputFile read_input(const std::string& role, const fs::path& path) {
  InputFile f{role, path, io::read_file(path), {}};
  f.sha256 = io::sha256_hex(f.content);
  return f;
}

/// Output directory plus manifest bookkeeping for one command invocation.
class Run {
 public:
  Run(std::string command, const Config& cfg, const CommandContext& ctx) : command_(std::move(command)) {
    base_ = cfg.has("output_dir") ? cfg.path("output_dir") : fs::path("vat-out");
    exact_ = ctx.exact_out;
  }

  void input(const InputFile& f) { inputs_.push_back({f.role, f.path.filename().string(), f.sha256}); }
  nlohmann::ordered_json& params() { return params_; }
  nlohmann::ordered_json& seeds() { return seeds_; }

  /// The stamp depends only on input contents and parameters, so repeated
  /// runs land in the same directory.
  fs::path dir() {
    if (dir_) return *dir_;
    if (exact_) {
      dir_ = base_;
    } else {
      nlohmann::ordered_json stamp;
      stamp["command"] = command_;
      stamp["inputs"] = inputs_json();
      stamp["params"] = params_;
      stamp["seeds"] = seeds_;
      dir_ = base_ / (command_ + "-" + io::sha256_hex(stamp.dump()).substr(0, 12));
    }
    fs::create_directories(*dir_);
    return *dir_;
  }

  void write(const std::string& rel, std::string_view content) {
    io::write_file(dir() / rel, content);
    files_.push_back(rel);
  }

  void write_json(const std::string& rel, const nlohmann::ordered_json& j) { write(rel, j.dump(2) + "\n"); }

  CommandResult finish(nlohmann::ordered_json summary = nlohmann::ordered_json::object()) {
    nlohmann::ordered_json m;
    m["command"] = command_;
    m["version"] = kVersion;
    m["inputs"] = inputs_json();
    m["params"] = params_;
    m["seeds"] = seeds_;
    auto outs = files_;
    std::sort(outs.begin(), outs.end());
    m["outputs"] = outs;
    write_json("manifest.json", m);
    CommandResult r{dir(), files_, std::move(summary)};
    r.summary["output_dir"] = r.output_dir.string();
    return r;
  }

 private:
  nlohmann::ordered_json inputs_json() const {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [role, name, sha] : inputs_) {
      nlohmann::ordered_json x;
      x["role"] = role;
      x["file"] = name;
      x["sha256"] = sha;
      arr.push_back(x);
    }
    return arr;
  }

  std::string command_;
  fs::path base_;
  bool exact_ = false;
  std::optional<fs::path> dir_;
  std::vector<std::tuple<std::string, std::string, std::string>> inputs_;
  nlohmann::ordered_json params_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json seeds_ = nlohmann::ordered_json::object();
  std::vector<std::string> files_;
};

inline Taxonomy config_taxonomy(const Config& cfg, Run& run) {
  if (!cfg.has("taxonomy")) return default_taxonomy();
  const auto f = read_input("taxonomy", cfg.path("taxonomy"));
  run.input(f);
  const auto doc = nlohmann::json::parse(f.content, nullptr, false);
  if (doc.is_discarded()) throw InputError("taxonomy", "taxonomy file " + f.path.string() + " is not valid JSON");
  return load_taxonomy(doc);
}

inline RunManifest config_manifest(const Config& cfg, const char* key, Condition fallback, Run& run) {
  if (!cfg.has(key)) {
    RunManifest m;
    m.condition = fallback;
    return m;
  }
  const auto f = read_input(key, cfg.path(key));
  run.input(f);
  const auto doc = nlohmann::json::parse(f.content, nullptr, false);
  if (doc.is_discarded()) throw InputError("dataset", "manifest " + f.path.string() + " is not valid JSON");
  return manifest_from_json(doc);
}

inline IngestOptions ingest_options(const Config& cfg, Run& run) {
  IngestOptions o;
  const auto dup = cfg.get<std::string>("duplicates", "strict");
  const auto bad = cfg.get<std::string>("malformed", "fail");
  if (dup != "strict" && dup != "last_write") throw InputError("cli", "duplicates must be strict or last_write");
  if (bad != "fail" && bad != "skip") throw InputError("cli", "malformed must be fail or skip");
  o.duplicates = dup == "strict" ? DuplicatePolicy::kStrict : DuplicatePolicy::kLastWrite;
  o.malformed = bad == "fail" ? MalformedPolicy::kFail : MalformedPolicy::kSkip;
  run.params()["duplicates"] = dup;
  run.params()["malformed"] = bad;
  return o;
}

struct LoadedPairs {
  Taxonomy taxonomy;
  RunTable pre;
  RunTable post;
  PairedTable paired;
  std::vector<std::string> diagnostics;
};

inline LoadedPairs load_pairs(const Config& cfg, Run& run) {
  LoadedPairs out{config_taxonomy(cfg, run), {}, {}, {}, {}};
  const auto opts = ingest_options(cfg, run);
  const auto pre_m = config_manifest(cfg, "pre_manifest", Condition::kPre, run);
  const auto post_m = config_manifest(cfg, "post_manifest", Condition::kPost, run);
  const auto pre_f = read_input("pre", cfg.path("pre"));
  const auto post_f = read_input("post", cfg.path("post"));
  run.input(pre_f);
  run.input(post_f);
  out.pre = ingest_run(pre_m, pre_f.content, opts);
  out.post = ingest_run(post_m, post_f.content, opts);
  for (const auto* t : {&out.pre, &out.post}) {
    for (const auto& d : t->stats.diagnostics) out.diagnostics.push_back(d);
    for (const auto& [key, r] : t->records) {
      if (!out.taxonomy.has_micro_value(r.micro_value)) {
        throw InputError("dataset", "record " + describe(key) + " uses micro-value unknown to the taxonomy");
      }
    }
  }
  const auto policy = cfg.get<std::string>("pair_policy", "lenient");
  if (policy != "strict" && policy != "lenient") throw InputError("cli", "pair_policy must be strict or lenient");
  run.params()["pair_policy"] = policy;
  out.paired = pair_runs(out.pre, out.post, policy == "strict" ? PairPolicy::kStrict : PairPolicy::kLenient);
  for (const auto& d : out.paired.diagnostics) out.diagnostics.push_back(d);
  if (out.paired.samples.empty()) throw InputError("dataset", "no paired judgments after pairing");
  return out;
}

inline CouplingOptions coupling_options(const Config& cfg, const CommandContext& ctx, Run& run) {
  CouplingOptions c;
  c.min_support = cfg.get<int>("min_support", 30);
  c.method = parse_correlation_method(cfg.get<std::string>("method", "spearman"));
  c.strict = cfg.get<bool>("strict", false);
  c.jobs = ctx.jobs;
  if (c.min_support < 2) throw InputError("cli", "min_support must be >= 2");
  run.params()["min_support"] = c.min_support;
  run.params()["method"] = to_string(c.method);
  run.params()["strict"] = c.strict;
  return c;
}

inline std::string coupling_csv(const CouplingMatrix& R) {
  std::string out = "value";
  for (const auto& v : R.values) out += "," + io::csv_field(v);
  out += '\n';
  for (std::size_t i = 0; i < R.size(); ++i) {
    out += io::csv_field(R.values[i]);
    for (std::size_t k = 0; k < R.size(); ++k) out += "," + io::format_double(R.at(i, k));
    out += '\n';
  }
  return out;
}

inline std::uint64_t require_seed(const Config& cfg) {
  if (!cfg.has("seed")) throw InputError("cli", "randomized command needs an explicit seed (--seed or config 'seed')");
  const auto& s = cfg.doc["seed"];
  if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<std::int64_t>() < 0)) {
    throw InputError("cli", "seed must be a non-negative integer");
  }
  return s.get<std::uint64_t>();
}

}  // namespace detail

/// ingest -> pair -> shift matrix -> tax report, with CSV exports.
inline CommandResult run_pipeline(const Config& cfg, const CommandContext& ctx = {}) {
  detail::Run run("pipeline", cfg, ctx);
  auto data = detail::load_pairs(cfg, run);
  const auto agg = parse_aggregation(cfg.get<std::string>("aggregation", "observed_mean"));
  run.params()["aggregation"] = to_string(agg);

  ReportOptions ropts;
  ropts.coupling = detail::coupling_options(cfg, ctx, run);
  ropts.strict = ropts.coupling.strict;
  ropts.epsilon_gain = cfg.get<double>("epsilon_gain", 1e-6);
  ropts.exclude_target = cfg.get<bool>("exclude_target", false);
  run.params()["epsilon_gain"] = ropts.epsilon_gain;
  run.params()["exclude_target"] = ropts.exclude_target;

  std::string target;
  if (cfg.has("target")) {
    target = cfg.get<std::string>("target", "");
  } else if (data.post.manifest.target_value) {
    target = *data.post.manifest.target_value;
  } else {
    throw InputError("cli", "no target value: set 'target' or a post manifest target_value");
  }
  if (!data.taxonomy.has_value(target)) throw InputError("cli", "target " + target + " is not a taxonomy value");
  run.params()["target"] = target;

  const auto sm = build_shift_matrix(data.paired, data.taxonomy, agg);
  auto rep = compute_tax_report(sm, target, ropts);
  if (data.post.manifest.target_value) rep.direction = data.post.manifest.direction;
  rep.diagnostics.insert(rep.diagnostics.begin(), data.diagnostics.begin(), data.diagnostics.end());

  run.write_json("report.json", to_json(rep));
  run.write("coupling.csv", detail::coupling_csv(rep.coupling));
  run.write("shifts.csv", shift_matrix_csv(sm));
  run.write("coverage.csv", coverage_csv(sm));
  nlohmann::ordered_json summary;
  summary["target"] = rep.target;
  summary["gain"] = rep.gain;
  summary["nvat"] = rep.nvat;
  summary["gini"] = rep.gini;
  summary["samples"] = sm.rows();
  return run.finish(summary);
}

/// Figure bundles from a report document and optional extra configurations.
inline CommandResult run_figures(const Config& cfg, const CommandContext& ctx = {}) {
  detail::Run run("figures", cfg, ctx);
  const auto taxonomy = detail::config_taxonomy(cfg, run);
  const auto read_report = [&](const std::string& role, const fs::path& p) {
    const auto f = detail::read_input(role, p);
    run.input(f);
    const auto doc = nlohmann::ordered_json::parse(f.content, nullptr, false);
    if (doc.is_discarded()) throw InputError("cli", "report " + p.string() + " is not valid JSON");
    return report_from_json(doc);
  };
  const LabeledReport primary{cfg.get<std::string>("label", "primary"), read_report("report", cfg.path("report"))};
  std::vector<LabeledReport> configurations;
  if (cfg.has("reports")) {
    for (const auto& r : cfg.doc["reports"]) {
      if (!r.is_object() || !r.contains("path")) throw InputError("cli", "each 'reports' entry needs a path");
      const fs::path p = r["path"].get<std::string>();
      const auto label = r.value("label", p.stem().string());
      configurations.push_back({label, read_report("report:" + label, p.is_absolute() ? p : cfg.base / p)});
    }
  }
  FigureOptions fo;
  fo.top_k = cfg.get<int>("top_k", 10);
  fo.render_svg = cfg.get<bool>("svg", true);
  fo.render_all_svg = cfg.get<bool>("svg_all", false);
  fo.hub_quantile = cfg.get<double>("hub_quantile", 0.75);
  fo.hub_persistence = cfg.get<double>("hub_persistence", 0.75);
  run.params()["top_k"] = fo.top_k;
  run.params()["svg"] = fo.render_svg;
  run.params()["svg_all"] = fo.render_all_svg;
  run.params()["hub_quantile"] = fo.hub_quantile;
  run.params()["hub_persistence"] = fo.hub_persistence;

  const auto bundles = make_figures(primary, taxonomy, configurations, fo);
  nlohmann::ordered_json summary;
  auto kinds = nlohmann::ordered_json::array();
  for (const auto& b : bundles) {
    const std::string name(to_string(b.kind));
    run.write_json("figures/" + name + ".json", b.data);
    if (b.svg) run.write("figures/" + name + ".svg", *b.svg);
    kinds.push_back(name);
  }
  summary["figures"] = kinds;
  return run.finish(summary);
}

/// Bootstrap stability, rank agreement and cross-granularity consistency.
inline CommandResult run_robustness(const Config& cfg, const CommandContext& ctx = {}) {
  detail::Run run("robustness", cfg, ctx);
  const auto seed = detail::require_seed(cfg);
  run.seeds()["bootstrap"] = seed;
  auto data = detail::load_pairs(cfg, run);
  const auto copts = detail::coupling_options(cfg, ctx, run);

  BootstrapOptions b;
  b.fraction = cfg.get<double>("fraction", 0.8);
  b.replicates = cfg.get<int>("replicates", 200);
  b.seed = seed;
  b.mode = parse_resample_mode(cfg.get<std::string>("mode", "subsample"));
  b.coupling = copts;
  b.aggregation = parse_aggregation(cfg.get<std::string>("aggregation", "observed_mean"));
  b.jobs = ctx.jobs;
  run.params()["fraction"] = b.fraction;
  run.params()["replicates"] = b.replicates;
  run.params()["mode"] = to_string(b.mode);
  run.params()["aggregation"] = to_string(b.aggregation);
  const auto boot = bootstrap_nvat(data.paired, data.taxonomy, b);

  AgreementOptions a;
  a.min_support = copts.min_support;
  a.comparison = parse_correlation_method(cfg.get<std::string>("comparison", "spearman"));
  a.jobs = ctx.jobs;
  run.params()["comparison"] = to_string(a.comparison);
  const auto agreement = rank_agreement(build_shift_matrix(data.paired, data.taxonomy, b.aggregation), a);

  CrossGranularityOptions g;
  g.min_support = copts.min_support;
  g.aggregation = parse_micro_aggregation(cfg.get<std::string>("micro_aggregation", "mean"));
  g.value_aggregation = b.aggregation;
  g.jobs = ctx.jobs;
  run.params()["micro_aggregation"] = to_string(g.aggregation);
  const auto cross = cross_granularity(data.paired, data.taxonomy, g);

  if (copts.strict && agreement.degenerate) throw DegenerateError("robustness", "rank agreement is degenerate");
  if (copts.strict && cross.degenerate) throw DegenerateError("robustness", "cross-granularity comparison is degenerate");

  nlohmann::ordered_json doc;
  doc["bootstrap"] = to_json(boot);
  doc["rank_agreement"] = to_json(agreement);
  doc["cross_granularity"] = to_json(cross);
  doc["diagnostics"] = data.diagnostics;
  run.write_json("robustness.json", doc);
  std::string csv = "replicate,nvat\n";
  for (std::size_t i = 0; i < boot.replicate_values.size(); ++i) {
    csv += std::to_string(i) + "," + io::format_double(boot.replicate_values[i]) + "\n";
  }
  run.write("replicates.csv", csv);

  nlohmann::ordered_json summary;
  summary["nvat_mean"] = boot.mean;
  summary["nvat_std"] = boot.std;
  summary["rank_agreement"] = agreement.rank_agreement;
  summary["cross_granularity"] = cross.rank_correlation;
  return run.finish(summary);
}

/// Writes a planted dataset plus a ready-to-run pipeline config.
inline CommandResult run_synth(const Config& cfg, const CommandContext& ctx = {}) {
  detail::Run run("synth", cfg, ctx);
  const auto seed = detail::require_seed(cfg);
  run.seeds()["generator"] = seed;
  auto taxonomy = detail::config_taxonomy(cfg, run);
  nlohmann::json spec_doc = cfg.doc;
  for (const char* k : {"output_dir", "taxonomy"}) spec_doc.erase(k);
  auto spec = planted_spec_from_json(spec_doc, taxonomy);
  spec.seed = seed;
  spec_doc["seed"] = seed;
  run.params()["spec"] = spec_doc;

  const auto runs = generate(spec, ctx.jobs);
  run.write("pre.jsonl", to_jsonl(runs.pre));
  run.write("post.jsonl", to_jsonl(runs.post));
  auto pre_m = runs.pre.manifest;
  auto post_m = runs.post.manifest;
  pre_m.target_value = spec.target;
  post_m.target_value = spec.target;
  run.write_json("pre.manifest.json", to_json(pre_m));
  run.write_json("post.manifest.json", to_json(post_m));
  run.write("taxonomy.json", to_json(taxonomy).dump(2) + "\n");
  nlohmann::ordered_json pipeline;
  pipeline["pre"] = "pre.jsonl";
  pipeline["post"] = "post.jsonl";
  pipeline["pre_manifest"] = "pre.manifest.json";
  pipeline["post_manifest"] = "post.manifest.json";
  pipeline["taxonomy"] = "taxonomy.json";
  pipeline["target"] = spec.target;
  pipeline["seed"] = seed;
  pipeline["output_dir"] = "out";
  run.write_json("pipeline.json", pipeline);

  nlohmann::ordered_json summary;
  summary["scenes"] = spec.n_scenes;
  summary["records"] = runs.pre.size();
  return run.finish(summary);
}

/// Elicits pre and/or post runs from a chat endpoint (or the in-process mock).
inline CommandResult run_elicit(const Config& cfg, const CommandContext& ctx = {}) {
  detail::Run run("elicit", cfg, ctx);
  const auto taxonomy = detail::config_taxonomy(cfg, run);
  const auto items_f = detail::read_input("items", cfg.path("items"));
  run.input(items_f);
  const auto items = load_items(items_f.content, taxonomy);

  const auto endpoint =
      endpoint_from_json(cfg.has("endpoint") ? cfg.doc["endpoint"] : nlohmann::json::object());
  run.params()["base_url"] = endpoint.base_url;
  run.params()["model"] = endpoint.model_name;
  run.params()["temperature"] = endpoint.temperature;
  std::optional<SteeringSpec> steering;
  if (cfg.has("steering")) steering = steering_from_json(cfg.doc["steering"]);
  run.params()["steering"] = cfg.has("steering") ? cfg.doc["steering"] : nlohmann::json();
  const auto conditions = cfg.get<std::string>("conditions", "both");
  if (conditions != "both" && conditions != "pre" && conditions != "post") {
    throw InputError("cli", "conditions must be pre, post or both");
  }
  run.params()["conditions"] = conditions;

  std::unique_ptr<MockResponder> responder;
  std::unique_ptr<ChatBackend> backend;
  if (endpoint.base_url.rfind("mock://", 0) == 0) {
    responder = std::make_unique<MockResponder>(
        mock_config_from_json(cfg.has("mock") ? cfg.doc["mock"] : nlohmann::json::object()));
    backend = std::make_unique<InProcessMockBackend>(*responder, endpoint.auth_token);
  } else {
    backend = std::make_unique<HttpChatBackend>(endpoint);
  }

  const auto model = cfg.get<std::string>("model", endpoint.model_name);
  const auto out_dir = run.dir();
  nlohmann::ordered_json summary;
  std::vector<std::string> log;
  for (const auto cond : {Condition::kPre, Condition::kPost}) {
    const std::string name(to_string(cond));
    if (conditions != "both" && conditions != name) continue;
    RunManifest m;
    m.run_id = model + "-" + name;
    m.model = model;
    m.condition = cond;
    ElicitOptions opts;
    if (cond == Condition::kPost && steering) {
      m.intervention = Intervention::kPromptSteer;
      m.shots = steering->shots;
      m.target_value = steering->target_value;
      m.direction = steering->direction;
      opts.steering = steering;
    }
    opts.checkpoint = out_dir / (name + ".checkpoint.jsonl");
    opts.prompt_log = out_dir / (name + ".prompts.jsonl");
    opts.limit = cfg.get<std::size_t>("limit", 0);
    const auto res = run_elicitation(items, taxonomy, *backend, endpoint, m, opts);
    run.write(name + ".jsonl", to_jsonl(res.table));
    run.write_json(name + ".manifest.json", to_json(m));
    nlohmann::ordered_json s;
    s["items"] = res.stats.items;
    s["records"] = res.table.size();
    s["resumed"] = res.stats.resumed;
    s["failures"] = res.stats.failures;
    s["retries"] = res.stats.retries;
    s["reasks"] = res.stats.reasks;
    summary[name] = s;
    for (const auto& l : res.log) log.push_back(name + ": " + l);
  }
  nlohmann::ordered_json doc = summary;
  doc["log"] = log;
  run.write_json("elicitation.json", doc);
  return run.finish(summary);
}

/// Train/test scene split written as JSON.
inline CommandResult run_split(const Config& cfg, const CommandContext& ctx = {}) {
  detail::Run run("split", cfg, ctx);
  const auto seed = detail::require_seed(cfg);
  run.seeds()["split"] = seed;
  const auto f = detail::read_input("runs", cfg.path("input"));
  run.input(f);
  const auto table = ingest_run(RunManifest{}, f.content);
  const auto ratio = cfg.get<double>("ratio", 0.7);
  run.params()["ratio"] = ratio;
  const auto split = split_scenarios(scene_ids(table), ratio, scenario_strata(table), seed);
  nlohmann::ordered_json doc;
  doc["ratio"] = ratio;
  doc["seed"] = seed;
  doc["train"] = split.train;
  doc["test"] = split.test;
  run.write_json("split.json", doc);
  nlohmann::ordered_json summary;
  summary["train"] = split.train.size();
  summary["test"] = split.test.size();
  return run.finish(summary);
}

}  // namespace vat
