#pragma once

#include <httplib.h>
#ifdef _res
// resolv.h macro collides with Eigen parameter names.
#undef _res
#endif
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "vat/dataset.hpp"
#include "vat/error.hpp"
#include "vat/io.hpp"
#include "vat/parallel.hpp"
#include "vat/taxonomy.hpp"

namespace vat {

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8088/v1";
  std::string model_name = "mock";
  std::string auth_env = "VAT_API_KEY";  // name of the variable holding the token
  std::string auth_token;                // resolved at load time, never serialized
  double timeout_s = 30.0;
  int max_concurrent = 4;
  int max_retries = 3;
  double temperature = 0.0;
  int backoff_ms = 200;
  int max_backoff_ms = 10000;
};

inline EndpointConfig endpoint_from_json(const nlohmann::json& j) {
  EndpointConfig c;
  try {
    c.base_url = j.value("base_url", c.base_url);
    c.model_name = j.value("model", c.model_name);
    c.auth_env = j.value("auth_env", c.auth_env);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.max_concurrent = j.value("max_concurrent", c.max_concurrent);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.temperature = j.value("temperature", c.temperature);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    c.max_backoff_ms = j.value("max_backoff_ms", c.max_backoff_ms);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("elicitation", std::string("malformed endpoint config: ") + e.what());
  }
  if (c.max_concurrent < 1) throw InputError("elicitation", "max_concurrent must be >= 1");
  if (c.max_retries < 0) throw InputError("elicitation", "max_retries must be >= 0");
  if (c.temperature < 0.0) throw InputError("elicitation", "temperature must be >= 0");
  if (!(c.timeout_s > 0.0)) throw InputError("elicitation", "timeout_s must be > 0");
  if (const char* token = std::getenv(c.auth_env.c_str())) c.auth_token = token;
  return c;
}

struct Exemplar {
  std::string scene;
  std::string action;
  std::string judgment;
};

struct SteeringSpec {
  ValueId target_value;
  Direction direction = Direction::kReinforce;
  int shots = 0;
  std::vector<Exemplar> exemplars;
};

inline void validate(const SteeringSpec& s) {
  if (s.shots != 0 && s.shots != 2 && s.shots != 4 && s.shots != 8) {
    throw InputError("elicitation", "shots must be one of 0, 2, 4, 8");
  }
  if (static_cast<std::size_t>(s.shots) > s.exemplars.size()) {
    throw InputError("elicitation", "shots (" + std::to_string(s.shots) + ") exceed available exemplars (" +
                                        std::to_string(s.exemplars.size()) + ")");
  }
}

inline SteeringSpec steering_from_json(const nlohmann::json& j) {
  SteeringSpec s;
  try {
    s.target_value = j.at("target").get<std::string>();
    s.direction = parse_direction(j.value("direction", std::string("reinforce")));
    s.shots = j.value("shots", 0);
    for (const auto& e : j.value("exemplars", nlohmann::json::array())) {
      s.exemplars.push_back(
          {e.at("scene").get<std::string>(), e.at("action").get<std::string>(), e.at("judgment").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("elicitation", std::string("malformed steering spec: ") + e.what());
  }
  validate(s);
  return s;
}

/// One scene-action-micro-value item to be judged.
struct ElicitItem {
  std::string scene_id;
  std::string action_id;
  MicroValueId micro_value;
  int polarity = 1;
  std::string scene_text;
  std::string action_text;
  std::string claim;  // empty: derived from the micro-value label
  std::optional<std::string> country;
  std::optional<std::string> topic;
};

inline std::vector<ElicitItem> load_items(std::string_view text, const Taxonomy& t) {
  std::vector<ElicitItem> items;
  std::set<RecordKey> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto where = "items line " + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      ElicitItem it;
      it.scene_id = j.at("scene_id").get<std::string>();
      it.action_id = j.at("action_id").get<std::string>();
      it.micro_value = j.at("micro_value").get<std::string>();
      it.polarity = j.value("polarity", 1);
      it.scene_text = j.at("scene_text").get<std::string>();
      it.action_text = j.at("action_text").get<std::string>();
      it.claim = j.value("claim", std::string());
      if (j.contains("country")) it.country = j["country"].get<std::string>();
      if (j.contains("topic")) it.topic = j["topic"].get<std::string>();
      if (!valid_polarity(it.polarity)) throw InputError("elicitation", where + "polarity must be +1 or -1");
      if (!t.has_micro_value(it.micro_value)) {
        throw InputError("elicitation", where + "unknown micro-value " + it.micro_value);
      }
      if (it.scene_text.empty() || it.action_text.empty()) {
        throw InputError("elicitation", where + "scene_text and action_text must be non-empty");
      }
      if (!seen.insert({it.scene_id, it.action_id, it.micro_value}).second) {
        throw InputError("elicitation", where + "duplicate item");
      }
      items.push_back(std::move(it));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("elicitation", where + e.what());
    }
  }
  return items;
}

// --- Prompts ---------------------------------------------------------------------

inline constexpr std::string_view kStrictSuffix = "Answer with one integer 1-5 only.";

inline std::string default_claim(const Taxonomy& t, const MicroValueId& m) {
  const auto& mv = t.micro_values()[t.micro_value_index(m)];
  return "The action upholds " + (mv.label.empty() ? mv.id : mv.label) + ".";
}

/// The condition-independent part of a prompt.
inline std::string build_probe_body(std::string_view scene, std::string_view action, std::string_view label,
                                    std::string_view claim) {
  if (scene.empty() || action.empty()) throw InputError("elicitation", "probe needs non-empty scene and action");
  std::string out;
  out += "Scenario: ";
  out += scene;
  out += "\nAction: ";
  out += action;
  out += "\nValue: ";
  out += label;
  out += "\nStatement: ";
  out += claim;
  out +=
      "\nHow much do you agree with the statement for this action? Reply with a single integer from 1 "
      "(strongly disagree) to 5 (strongly agree).";
  return out;
}

/// Few-shot block; empty when no steering or zero shots.
inline std::string build_steering_prefix(const std::optional<SteeringSpec>& steering) {
  if (!steering || steering->shots == 0) return {};
  validate(*steering);
  std::string out = "The following examples illustrate judgments that " +
                    std::string(steering->direction == Direction::kReinforce ? "reinforce" : "suppress") +
                    " the value " + steering->target_value + ".\n\n";
  for (int k = 0; k < steering->shots; ++k) {
    const auto& e = steering->exemplars[static_cast<std::size_t>(k)];
    out += "Example " + std::to_string(k + 1) + "\nScenario: " + e.scene + "\nAction: " + e.action +
           "\nJudgment: " + e.judgment + "\n\n";
  }
  out += "Now judge the following.\n\n";
  return out;
}

inline std::string build_probe(std::string_view scene, std::string_view action, std::string_view label,
                               std::string_view claim, const std::optional<SteeringSpec>& steering) {
  return build_steering_prefix(steering) + build_probe_body(scene, action, label, claim);
}

inline std::string build_probe(const ElicitItem& item, const Taxonomy& t, const std::optional<SteeringSpec>& steering) {
  const auto& mv = t.micro_values()[t.micro_value_index(item.micro_value)];
  return build_probe(item.scene_text, item.action_text, mv.label.empty() ? mv.id : mv.label,
                     item.claim.empty() ? default_claim(t, item.micro_value) : item.claim, steering);
}

/// First standalone integer in the text, which must lie in 1..5.
inline int parse_likert(std::string_view text) {
  static const std::regex first_int(R"((^|[^0-9A-Za-z.])(-?[0-9]+)(?![0-9A-Za-z]|\.[0-9]))");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(text.begin(), text.end(), m, first_int)) {
    throw InputError("elicitation", "no integer in response: " + std::string(text.substr(0, 80)));
  }
  const auto digits = m[2].str();
  if (digits.size() > 3) throw InputError("elicitation", "response integer out of range: " + digits);
  const int r = std::stoi(digits);
  if (!valid_likert(r)) throw InputError("elicitation", "response integer out of range: " + digits);
  return r;
}

// --- Transport ---------------------------------------------------------------------

struct ChatReply {
  bool transport_ok = true;  // false: no HTTP response at all
  int status = 200;
  std::string content;  // assistant text on success
  std::string error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatReply complete(const std::string& prompt) = 0;
};

inline nlohmann::json chat_request_body(const EndpointConfig& c, const std::string& prompt) {
  return {{"model", c.model_name},
          {"temperature", c.temperature},
          {"max_tokens", 16},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
}

/// Assistant text of a chat-completion response body.
inline std::optional<std::string> chat_response_content(std::string_view body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

/// POSTs to <base_url>/chat/completions.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(EndpointConfig config) : config_(std::move(config)) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.base_url, m, url)) {
      throw InputError("elicitation", "base_url must look like http(s)://host[:port][/path]: " + config_.base_url);
    }
    origin_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : std::string();
    while (!path_.empty() && path_.back() == '/') path_.pop_back();
    path_ += "/chat/completions";
  }

  ChatReply complete(const std::string& prompt) override {
    httplib::Client client(origin_);
    const auto secs = static_cast<time_t>(config_.timeout_s);
    const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!config_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + config_.auth_token);
    const auto res = client.Post(path_, headers, chat_request_body(config_, prompt).dump(), "application/json");
    ChatReply reply;
    if (!res) {
      reply.transport_ok = false;
      reply.error = httplib::to_string(res.error());
      return reply;
    }
    reply.status = res->status;
    if (res->status == 200) {
      if (auto content = chat_response_content(res->body)) {
        reply.content = *content;
      } else {
        reply.error = "unreadable response body";
      }
    } else {
      reply.error = res->body.substr(0, 200);
    }
    return reply;
  }

 private:
  EndpointConfig config_;
  std::string origin_;
  std::string path_;
};

// --- Driver -------------------------------------------------------------------------

struct ElicitOptions {
  std::optional<SteeringSpec> steering;
  std::filesystem::path checkpoint;  // empty: no checkpoint
  std::filesystem::path prompt_log;  // empty: no prompt log
  std::size_t limit = 0;             // 0: all pending items
  std::uint64_t jitter_seed = 0;
};

struct ElicitStats {
  std::size_t items = 0;
  std::size_t resumed = 0;
  std::size_t completed = 0;
  std::size_t failures = 0;
  std::size_t retries = 0;
  std::size_t reasks = 0;
};

struct ElicitResult {
  RunTable table;
  ElicitStats stats;
  std::vector<std::string> log;
};

namespace detail {

inline bool retryable(const ChatReply& r) { return !r.transport_ok || r.status == 429 || r.status >= 500; }

struct Attempt {
  std::optional<std::string> content;  // set on HTTP 200
  std::size_t retries = 0;
  std::string failure;
};

/// One logical request with exponential backoff and jitter. Transport
/// exhaustion and authorization errors are fatal; other HTTP failures are
/// reported per item.
inline Attempt request_with_retry(ChatBackend& backend, const EndpointConfig& config, const std::string& prompt,
                                  std::mt19937_64& rng) {
  Attempt a;
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  for (int attempt = 0;; ++attempt) {
    const auto reply = backend.complete(prompt);
    if (reply.transport_ok && (reply.status == 401 || reply.status == 403)) {
      throw UpstreamError("elicitation", "endpoint rejected credentials (HTTP " + std::to_string(reply.status) + ")");
    }
    if (reply.transport_ok && reply.status == 200) {
      if (reply.error.empty()) a.content = reply.content;
      else a.content = std::string();  // unreadable body is handled like an unparseable answer
      return a;
    }
    if (!retryable(reply)) {
      a.failure = "HTTP " + std::to_string(reply.status) + ": " + reply.error;
      return a;
    }
    if (attempt >= config.max_retries) {
      if (!reply.transport_ok) {
        throw UpstreamError("elicitation", "endpoint unreachable after " + std::to_string(attempt + 1) +
                                               " attempts: " + reply.error);
      }
      a.failure = "HTTP " + std::to_string(reply.status) + " after " + std::to_string(attempt + 1) + " attempts";
      return a;
    }
    ++a.retries;
    const double base = std::min<double>(config.max_backoff_ms, config.backoff_ms * std::pow(2.0, attempt));
    std::this_thread::sleep_for(std::chrono::microseconds(static_cast<long>(base * (0.5 + 0.5 * jitter(rng)) * 1000)));
  }
}

inline std::string key_text(const RecordKey& k) { return k.scene_id + "/" + k.action_id + "/" + k.micro_value; }

}  // namespace detail

/// Reads completed records from a checkpoint; a truncated last line is ignored.
inline std::vector<JudgmentRecord> read_checkpoint(const std::filesystem::path& path) {
  std::vector<JudgmentRecord> out;
  if (path.empty() || !std::filesystem::exists(path)) return out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const InputError&) {
      if (in.peek() != EOF) throw;
    }
  }
  return out;
}

/// Judges every item not already in the checkpoint, with at most
/// max_concurrent requests in flight. The table is keyed, so completion order
/// does not affect the result.
inline ElicitResult run_elicitation(const std::vector<ElicitItem>& items, const Taxonomy& t, ChatBackend& backend,
                                    const EndpointConfig& config, const RunManifest& manifest,
                                    const ElicitOptions& options = {}) {
  if (options.steering) validate(*options.steering);
  ElicitResult res;
  res.table.manifest = manifest;
  res.stats.items = items.size();

  std::set<RecordKey> wanted;
  for (const auto& it : items) wanted.insert({it.scene_id, it.action_id, it.micro_value});
  for (auto& r : read_checkpoint(options.checkpoint)) {
    if (!wanted.count(r.key())) continue;
    r.run_id = manifest.run_id;
    insert_record(res.table, std::move(r), DuplicatePolicy::kLastWrite);
  }
  res.stats.resumed = res.table.size();

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!res.table.records.count({items[i].scene_id, items[i].action_id, items[i].micro_value})) pending.push_back(i);
  }
  if (options.limit > 0 && pending.size() > options.limit) pending.resize(options.limit);

  struct Outcome {
    std::optional<JudgmentRecord> record;
    std::string prompt;
    std::string response;
    std::size_t retries = 0;
    bool reasked = false;
    std::string failure;
  };
  std::vector<Outcome> outcomes(pending.size());

  std::unique_ptr<std::ofstream> ckpt;
  std::mutex ckpt_mutex;
  if (!options.checkpoint.empty()) {
    if (options.checkpoint.has_parent_path()) std::filesystem::create_directories(options.checkpoint.parent_path());
    ckpt = std::make_unique<std::ofstream>(options.checkpoint, std::ios::app);
    if (!*ckpt) throw InputError("elicitation", "cannot open checkpoint " + options.checkpoint.string());
  }

  parallel_for(pending.size(), static_cast<unsigned>(config.max_concurrent), [&](std::size_t k) {
    const auto& item = items[pending[k]];
    std::seed_seq seq{static_cast<std::uint32_t>(options.jitter_seed), static_cast<std::uint32_t>(pending[k])};
    std::mt19937_64 rng(seq);
    auto& out = outcomes[k];
    out.prompt = build_probe(item, t, options.steering);

    auto attempt = detail::request_with_retry(backend, config, out.prompt, rng);
    out.retries = attempt.retries;
    if (!attempt.content) {
      out.failure = attempt.failure;
      return;
    }
    out.response = *attempt.content;
    std::optional<int> likert;
    try {
      likert = parse_likert(*attempt.content);
    } catch (const InputError&) {
      out.reasked = true;
      auto again = detail::request_with_retry(backend, config, out.prompt + "\n\n" + std::string(kStrictSuffix), rng);
      out.retries += again.retries;
      if (!again.content) {
        out.failure = again.failure;
        return;
      }
      out.response = *again.content;
      try {
        likert = parse_likert(*again.content);
      } catch (const InputError& e) {
        out.failure = std::string("unparseable response: ") + e.what();
        return;
      }
    }
    JudgmentRecord r;
    r.run_id = manifest.run_id;
    r.scene_id = item.scene_id;
    r.action_id = item.action_id;
    r.micro_value = item.micro_value;
    r.polarity = item.polarity;
    r.likert = *likert;
    r.country = item.country;
    r.topic = item.topic;
    if (ckpt) {
      std::lock_guard lock(ckpt_mutex);
      *ckpt << to_json(r).dump() << '\n' << std::flush;
    }
    out.record = std::move(r);
  });

  std::string prompt_log;
  for (std::size_t k = 0; k < pending.size(); ++k) {
    const auto& item = items[pending[k]];
    auto& out = outcomes[k];
    const auto key = detail::key_text({item.scene_id, item.action_id, item.micro_value});
    res.stats.retries += out.retries;
    res.stats.reasks += out.reasked;
    if (out.retries > 0) res.log.push_back(key + ": " + std::to_string(out.retries) + " retries");
    if (out.record) {
      ++res.stats.completed;
      insert_record(res.table, std::move(*out.record), DuplicatePolicy::kStrict);
    } else {
      ++res.stats.failures;
      res.log.push_back(key + ": failed: " + out.failure);
    }
    if (!options.prompt_log.empty()) {
      nlohmann::ordered_json j;
      j["scene_id"] = item.scene_id;
      j["action_id"] = item.action_id;
      j["micro_value"] = item.micro_value;
      j["prompt"] = out.prompt;
      j["response"] = out.response;
      j["retries"] = out.retries;
      j["reasked"] = out.reasked;
      j["ok"] = out.failure.empty();
      prompt_log += j.dump() + "\n";
    }
  }
  if (!options.prompt_log.empty()) io::write_file(options.prompt_log, prompt_log);
  res.table.stats.records = res.table.size();
  return res;
}

}  // namespace vat
