#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vat/commands.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonFlags {
  std::string config;
  std::string out;
  bool exact_out = false;
  unsigned jobs = 0;
  std::optional<std::uint64_t> seed;
  bool strict = false;
  std::vector<std::string> set;
};

void add_common(CLI::App* sub, CommonFlags& f, bool with_seed) {
  sub->add_option("-c,--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("-o,--out", f.out, "output directory");
  sub->add_flag("--exact-out", f.exact_out, "write into --out directly instead of a run-stamped subdirectory");
  sub->add_option("-j,--jobs", f.jobs, "worker threads (default: hardware concurrency)");
  if (with_seed) sub->add_option("--seed", f.seed, "random seed");
  sub->add_flag("--strict", f.strict, "promote degenerate results to errors");
  sub->add_option("--set", f.set, "override a config key: key=value (value parsed as JSON when possible)");
}

vat::Config build_config(const CommonFlags& f) {
  vat::Config cfg;
  if (!f.config.empty()) cfg = vat::load_config(f.config);
  for (const auto& kv : f.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw vat::InputError("cli", "--set expects key=value, got " + kv);
    const auto key = kv.substr(0, eq);
    const auto raw = kv.substr(eq + 1);
    auto parsed = nlohmann::json::parse(raw, nullptr, false);
    cfg.doc[key] = parsed.is_discarded() ? nlohmann::json(raw) : parsed;
  }
  if (!f.out.empty()) cfg.doc["output_dir"] = fs::absolute(f.out).string();
  if (f.seed) cfg.doc["seed"] = *f.seed;
  if (f.strict) cfg.doc["strict"] = true;
  return cfg;
}

vat::CommandContext build_context(const CommonFlags& f) {
  vat::CommandContext ctx;
  ctx.exact_out = f.exact_out;
  ctx.jobs = f.jobs > 0 ? f.jobs : std::max(1u, std::thread::hardware_concurrency());
  return ctx;
}

int report_error(int code, const std::string& module, const std::string& message) {
  nlohmann::ordered_json e;
  e["status"] = "error";
  e["code"] = code;
  e["module"] = module;
  e["message"] = message;
  std::cerr << e.dump() << std::endl;
  return code;
}

vat::MockServer* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Value alignment tax toolkit"};
  app.set_version_flag("--version", std::string(vat::kVersion));
  app.require_subcommand(1);

  using Command = std::function<vat::CommandResult(const vat::Config&, const vat::CommandContext&)>;
  struct Entry {
    CLI::App* sub;
    Command run;
  };
  CommonFlags flags;
  std::vector<Entry> commands = {
      {app.add_subcommand("pipeline", "pair runs and compute the tax report"), vat::run_pipeline},
      {app.add_subcommand("figures", "figure data and SVG from reports"), vat::run_figures},
      {app.add_subcommand("robustness", "bootstrap, rank agreement and cross-granularity checks"),
       vat::run_robustness},
      {app.add_subcommand("synth", "generate a planted dataset"), vat::run_synth},
      {app.add_subcommand("elicit", "collect judgments from a chat endpoint"), vat::run_elicit},
      {app.add_subcommand("split", "stratified train/test scene split"), vat::run_split},
  };
  for (const auto& c : commands) {
    const auto name = c.sub->get_name();
    add_common(c.sub, flags, name == "robustness" || name == "synth" || name == "split");
  }

  auto* taxonomy = app.add_subcommand("taxonomy", "print the default taxonomy as JSON");

  auto* mock = app.add_subcommand("mock-server", "serve a deterministic mock chat endpoint");
  std::string mock_host = "127.0.0.1";
  int mock_port = 8088;
  std::string mock_config;
  mock->add_option("--host", mock_host, "bind address");
  mock->add_option("--port", mock_port, "port");
  mock->add_option("-c,--config", mock_config, "mock behaviour JSON")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(2, "cli", e.what());
  }

  try {
    if (taxonomy->parsed()) {
      std::cout << vat::to_json(vat::default_taxonomy()).dump(2) << std::endl;
      return 0;
    }
    if (mock->parsed()) {
      nlohmann::json doc = nlohmann::json::object();
      if (!mock_config.empty()) doc = vat::load_config(mock_config).doc;
      vat::MockServer server(vat::mock_config_from_json(doc));
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cerr << "mock endpoint on http://" << mock_host << ":" << mock_port << "/v1" << std::endl;
      server.run(mock_host, mock_port);
      return 0;
    }
    for (const auto& c : commands) {
      if (!c.sub->parsed()) continue;
      const auto result = c.run(build_config(flags), build_context(flags));
      auto out = result.summary;
      out["status"] = "ok";
      std::cout << out.dump() << std::endl;
      return 0;
    }
  } catch (const vat::Error& e) {
    return report_error(e.exit_code(), e.module(), e.what());
  } catch (const nlohmann::json::exception& e) {
    return report_error(2, "json", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error(2, "io", e.what());
  }
  return report_error(2, "cli", "no command given");
}
