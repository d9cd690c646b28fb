#pragma once

#include <httplib.h>
#ifdef _res
// resolv.h macro collides with Eigen parameter names.
#undef _res
#endif
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vat/elicitation.hpp"
#include "vat/error.hpp"
#include "vat/io.hpp"

namespace vat {

/// Behavior of the deterministic test endpoint.
struct MockConfig {
  std::optional<int> constant;               // answer this for every prompt
  int fail_first = 0;                        // 503 for the first N requests of each prompt
  int fail_status = 503;
  std::vector<std::string> garbage_markers;  // prompts containing one of these get prose without a number
  bool garbage_until_strict = false;         // answer garbage unless the strict suffix is present
  std::string required_token;                // non-empty: demand this bearer token
  int delay_ms = 0;
  int steering_bias = 1;  // added for reinforce exemplars, subtracted for suppress
};

inline MockConfig mock_config_from_json(const nlohmann::json& j) {
  MockConfig c;
  try {
    if (j.contains("constant") && !j["constant"].is_null()) c.constant = j["constant"].get<int>();
    c.fail_first = j.value("fail_first", c.fail_first);
    c.fail_status = j.value("fail_status", c.fail_status);
    c.garbage_markers = j.value("garbage_markers", c.garbage_markers);
    c.garbage_until_strict = j.value("garbage_until_strict", c.garbage_until_strict);
    c.required_token = j.value("required_token", c.required_token);
    c.delay_ms = j.value("delay_ms", c.delay_ms);
    c.steering_bias = j.value("steering_bias", c.steering_bias);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("elicitation", std::string("malformed mock config: ") + e.what());
  }
  return c;
}

/// Pure answer logic shared by the in-process backend and the HTTP server.
/// The answer depends only on the prompt text, apart from fail_first, which
/// counts requests per prompt.
class MockResponder {
 public:
  explicit MockResponder(MockConfig config) : config_(std::move(config)) {}

  /// Returns (status, assistant text or error body).
  std::pair<int, std::string> respond(const std::string& prompt, const std::string& bearer) {
    const int now = ++in_flight_;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    ++requests_;
    if (config_.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(config_.delay_ms));
    const auto result = answer(prompt, bearer);
    --in_flight_;
    return result;
  }

  int max_in_flight() const { return max_in_flight_.load(); }
  int requests() const { return requests_.load(); }

 private:
  std::pair<int, std::string> answer(const std::string& prompt, const std::string& bearer) {
    if (!config_.required_token.empty() && bearer != config_.required_token) return {401, "unauthorized"};
    if (config_.fail_first > 0) {
      std::lock_guard lock(mutex_);
      if (++attempts_[prompt] <= config_.fail_first) return {config_.fail_status, "injected failure"};
    }
    for (const auto& m : config_.garbage_markers) {
      if (prompt.find(m) != std::string::npos) return {200, "I would rather not put a number on that."};
    }
    const bool strict = prompt.size() >= kStrictSuffix.size() &&
                        prompt.compare(prompt.size() - kStrictSuffix.size(), kStrictSuffix.size(), kStrictSuffix) == 0;
    if (config_.garbage_until_strict && !strict) return {200, "It depends on the circumstances."};
    if (config_.constant) return {200, std::to_string(*config_.constant)};

    // Hash the probe body (from the last scenario line) so steering does not
    // change the base answer, then bias by the exemplar direction.
    const auto body_at = prompt.rfind("Scenario: ");
    const auto body = prompt.substr(body_at == std::string::npos ? 0 : body_at);
    const auto digest = io::sha256_hex(body.substr(0, body.find("\n\n" + std::string(kStrictSuffix))));
    int r = 1 + static_cast<int>(std::stoul(digest.substr(0, 8), nullptr, 16) % 5);
    if (prompt.find("judgments that reinforce") != std::string::npos) r += config_.steering_bias;
    if (prompt.find("judgments that suppress") != std::string::npos) r -= config_.steering_bias;
    r = std::clamp(r, 1, 5);
    return {200, "Rating: " + std::to_string(r)};
  }

  MockConfig config_;
  std::mutex mutex_;
  std::map<std::string, int> attempts_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  std::atomic<int> requests_{0};
};

/// Backend that calls a responder directly, for base_url "mock://".
class InProcessMockBackend : public ChatBackend {
 public:
  InProcessMockBackend(MockResponder& responder, std::string token)
      : responder_(responder), token_(std::move(token)) {}

  ChatReply complete(const std::string& prompt) override {
    auto [status, text] = responder_.respond(prompt, token_);
    ChatReply r;
    r.status = status;
    if (status == 200) r.content = text;
    else r.error = text;
    return r;
  }

 private:
  MockResponder& responder_;
  std::string token_;
};

/// Chat-completion HTTP server on the loopback interface.
class MockServer {
 public:
  explicit MockServer(MockConfig config) : responder_(std::move(config)) {
    const auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      const auto j = nlohmann::json::parse(req.body, nullptr, false);
      std::string prompt;
      try {
        prompt = j.at("messages").back().at("content").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        res.status = 400;
        res.set_content(R"({"error":"bad request"})", "application/json");
        return;
      }
      std::string bearer = req.get_header_value("Authorization");
      if (bearer.rfind("Bearer ", 0) == 0) bearer = bearer.substr(7);
      const auto [status, text] = responder_.respond(prompt, bearer);
      res.status = status;
      if (status != 200) {
        res.set_content(nlohmann::json{{"error", text}}.dump(), "application/json");
        return;
      }
      nlohmann::json out = {{"object", "chat.completion"},
                            {"model", j.value("model", std::string("mock"))},
                            {"choices", nlohmann::json::array({{{"index", 0},
                                                                {"message", {{"role", "assistant"}, {"content", text}}},
                                                                {"finish_reason", "stop"}}})}};
      res.set_content(out.dump(), "application/json");
    };
    server_.Post("/v1/chat/completions", handler);
    server_.Post("/chat/completions", handler);
  }

  ~MockServer() { stop(); }

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw UpstreamError("elicitation", "mock server could not bind " + host);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stopped.
  void run(const std::string& host, int port) {
    if (!server_.listen(host, port)) throw UpstreamError("elicitation", "mock server could not listen on " + host);
  }

  void stop() {
    if (server_.is_running()) server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  MockResponder& responder() { return responder_; }

 private:
  MockResponder responder_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace vat
