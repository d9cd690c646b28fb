#include <gtest/gtest.h>

#include <filesystem>

#include "vat/elicitation.hpp"
#include "vat/mock_endpoint.hpp"

using vat::InputError;
namespace fs = std::filesystem;

namespace {

std::vector<vat::ElicitItem> make_items(int scenes, int micro_per_scene) {
  const auto t = vat::default_taxonomy();
  std::vector<vat::ElicitItem> items;
  for (int s = 0; s < scenes; ++s) {
    for (int m = 0; m < micro_per_scene; ++m) {
      vat::ElicitItem it;
      it.scene_id = "s" + std::to_string(s);
      it.action_id = "a0";
      it.micro_value = t.micro_values()[static_cast<std::size_t>(m * 5 % 56)].id;
      it.scene_text = "A neighbour asks to borrow a ladder (case " + std::to_string(s) + ").";
      it.action_text = "Lend it after checking it is safe.";
      items.push_back(it);
    }
  }
  return items;
}

vat::SteeringSpec steering(int shots, int available = 8) {
  vat::SteeringSpec s{"security", vat::Direction::kReinforce, shots, {}};
  for (int i = 0; i < available; ++i) {
    s.exemplars.push_back({"Scene " + std::to_string(i), "Action " + std::to_string(i), std::to_string(1 + i % 5)});
  }
  return s;
}

vat::EndpointConfig local(int port) {
  vat::EndpointConfig c;
  c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  c.max_concurrent = 3;
  c.max_retries = 3;
  c.backoff_ms = 1;
  c.timeout_s = 5;
  return c;
}

vat::RunManifest manifest(vat::Condition c) {
  vat::RunManifest m;
  m.run_id = c == vat::Condition::kPre ? "mock-pre" : "mock-post";
  m.condition = c;
  return m;
}

std::set<vat::RecordKey> keys(const vat::RunTable& t) {
  std::set<vat::RecordKey> out;
  for (const auto& [k, r] : t.records) out.insert(k);
  return out;
}

fs::path temp_path(const std::string& name) {
  auto p = fs::temp_directory_path() / ("vat_elicit_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Probe, ZeroShotsHasNoExemplarBlock) {
  const auto p = vat::build_probe("scene", "action", "label", "claim", steering(0));
  EXPECT_EQ(p.find("Example"), std::string::npos);
  EXPECT_EQ(p, vat::build_probe_body("scene", "action", "label", "claim"));
}

TEST(Probe, FirstShotsExemplarsInOrder) {
  const auto p = vat::build_probe("scene", "action", "label", "claim", steering(2, 4));
  const auto e0 = p.find("Scene 0");
  const auto e1 = p.find("Scene 1");
  ASSERT_NE(e0, std::string::npos);
  ASSERT_NE(e1, std::string::npos);
  EXPECT_LT(e0, e1);
  EXPECT_EQ(p.find("Scene 2"), std::string::npos);
  EXPECT_EQ(p.find("Scene 3"), std::string::npos);
}

TEST(Probe, DeterministicAndBodyInvariantAcrossConditions) {
  const auto body = vat::build_probe_body("scene", "action", "label", "claim");
  const auto pre = vat::build_probe("scene", "action", "label", "claim", std::nullopt);
  const auto post = vat::build_probe("scene", "action", "label", "claim", steering(8));
  EXPECT_EQ(pre, vat::build_probe("scene", "action", "label", "claim", std::nullopt));
  EXPECT_EQ(post, vat::build_probe("scene", "action", "label", "claim", steering(8)));
  EXPECT_EQ(pre, body);
  ASSERT_GE(post.size(), body.size());
  EXPECT_EQ(post.substr(post.size() - body.size()), body);
  EXPECT_NE(body.find("1"), std::string::npos);
  EXPECT_NE(body.find("5"), std::string::npos);
}

TEST(Probe, RejectsBadSteering) {
  EXPECT_THROW(vat::build_probe("s", "a", "l", "c", steering(4, 3)), InputError);
  EXPECT_THROW(vat::build_probe("s", "a", "l", "c", steering(3)), InputError);
  EXPECT_THROW(vat::build_probe_body("", "a", "l", "c"), InputError);
}

TEST(ParseLikert, Examples) {
  EXPECT_EQ(vat::parse_likert("4"), 4);
  EXPECT_EQ(vat::parse_likert("I would rate this a 5 because it helps."), 5);
  EXPECT_EQ(vat::parse_likert("Rating: 2/5"), 2);
  EXPECT_EQ(vat::parse_likert("  3\n"), 3);
  EXPECT_THROW(vat::parse_likert("strongly agree"), InputError);
  EXPECT_THROW(vat::parse_likert("7"), InputError);
  EXPECT_THROW(vat::parse_likert("0 then 3"), InputError);
  EXPECT_THROW(vat::parse_likert("4.5"), InputError);
  EXPECT_THROW(vat::parse_likert(""), InputError);
}

TEST(Elicit, ConstantMockGivesAllThrees) {
  vat::MockConfig mc;
  mc.constant = 3;
  vat::MockServer server(mc);
  const int port = server.start();
  vat::HttpChatBackend backend(local(port));
  const auto items = make_items(4, 5);
  const auto res =
      vat::run_elicitation(items, vat::default_taxonomy(), backend, local(port), manifest(vat::Condition::kPre));
  EXPECT_EQ(res.table.size(), 20u);
  EXPECT_EQ(res.stats.failures, 0u);
  for (const auto& [k, r] : res.table.records) EXPECT_EQ(r.likert, 3);
}

TEST(Elicit, RetriesTransientFailures) {
  vat::MockConfig mc;
  mc.fail_first = 2;
  vat::MockServer server(mc);
  const int port = server.start();
  vat::HttpChatBackend backend(local(port));
  const auto items = make_items(2, 2);
  const auto res =
      vat::run_elicitation(items, vat::default_taxonomy(), backend, local(port), manifest(vat::Condition::kPre));
  EXPECT_EQ(res.table.size(), 4u);
  EXPECT_EQ(res.stats.failures, 0u);
  EXPECT_EQ(res.stats.retries, 8u);
  ASSERT_EQ(res.log.size(), 4u);
  EXPECT_NE(res.log[0].find("2 retries"), std::string::npos) << res.log[0];
}

TEST(Elicit, ExhaustedHttpRetriesAreItemFailures) {
  vat::MockConfig mc;
  mc.fail_first = 10;
  mc.fail_status = 429;
  vat::MockServer server(mc);
  const int port = server.start();
  auto cfg = local(port);
  cfg.max_retries = 2;
  vat::HttpChatBackend backend(cfg);
  const auto res =
      vat::run_elicitation(make_items(1, 3), vat::default_taxonomy(), backend, cfg, manifest(vat::Condition::kPre));
  EXPECT_EQ(res.table.size(), 0u);
  EXPECT_EQ(res.stats.failures, 3u);
  EXPECT_EQ(server.responder().requests(), 9);
}

TEST(Elicit, GarbageForOneItemIsDroppedAfterReask) {
  vat::MockConfig mc;
  mc.garbage_markers = {"(case 7)"};
  vat::MockServer server(mc);
  const int port = server.start();
  vat::HttpChatBackend backend(local(port));
  const auto res =
      vat::run_elicitation(make_items(10, 1), vat::default_taxonomy(), backend, local(port), manifest(vat::Condition::kPre));
  EXPECT_EQ(res.table.size(), 9u);
  EXPECT_EQ(res.stats.failures, 1u);
  EXPECT_EQ(res.stats.reasks, 1u);
  EXPECT_EQ(server.responder().requests(), 11);
  EXPECT_EQ(res.table.records.count({"s7", "a0", make_items(10, 1)[7].micro_value}), 0u);
}

TEST(Elicit, StrictReaskRecoversAnswer) {
  vat::MockConfig mc;
  mc.garbage_until_strict = true;
  vat::MockResponder responder(mc);
  vat::InProcessMockBackend backend(responder, "");
  const auto res = vat::run_elicitation(make_items(3, 2), vat::default_taxonomy(), backend, local(0),
                                        manifest(vat::Condition::kPre));
  EXPECT_EQ(res.table.size(), 6u);
  EXPECT_EQ(res.stats.reasks, 6u);
  EXPECT_EQ(res.stats.failures, 0u);
}

TEST(Elicit, AuthFailureIsFatal) {
  vat::MockConfig mc;
  mc.required_token = "secret";
  vat::MockServer server(mc);
  const int port = server.start();
  auto cfg = local(port);
  cfg.auth_token = "wrong";
  vat::HttpChatBackend backend(cfg);
  EXPECT_THROW(
      vat::run_elicitation(make_items(1, 2), vat::default_taxonomy(), backend, cfg, manifest(vat::Condition::kPre)),
      vat::UpstreamError);
  cfg.auth_token = "secret";
  vat::HttpChatBackend good(cfg);
  EXPECT_EQ(vat::run_elicitation(make_items(1, 2), vat::default_taxonomy(), good, cfg, manifest(vat::Condition::kPre))
                .table.size(),
            2u);
}

TEST(Elicit, UnreachableEndpointIsFatal) {
  int port = 0;
  {
    vat::MockServer server({});
    port = server.start();
  }
  auto cfg = local(port);
  cfg.max_retries = 1;
  vat::HttpChatBackend backend(cfg);
  try {
    vat::run_elicitation(make_items(1, 1), vat::default_taxonomy(), backend, cfg, manifest(vat::Condition::kPre));
    FAIL() << "expected an upstream error";
  } catch (const vat::UpstreamError& e) {
    EXPECT_EQ(e.exit_code(), 3);
  }
}

TEST(Elicit, ConcurrencyIsBounded) {
  vat::MockConfig mc;
  mc.delay_ms = 15;
  vat::MockServer server(mc);
  const int port = server.start();
  auto cfg = local(port);
  cfg.max_concurrent = 3;
  vat::HttpChatBackend backend(cfg);
  const auto res =
      vat::run_elicitation(make_items(6, 2), vat::default_taxonomy(), backend, cfg, manifest(vat::Condition::kPre));
  EXPECT_EQ(res.table.size(), 12u);
  EXPECT_LE(server.responder().max_in_flight(), 3);
  EXPECT_GE(server.responder().max_in_flight(), 1);
}

TEST(Elicit, CheckpointResumeMatchesUninterruptedRun) {
  const auto dir = temp_path("ckpt");
  vat::MockServer server({});
  const int port = server.start();
  vat::HttpChatBackend backend(local(port));
  const auto t = vat::default_taxonomy();
  const auto items = make_items(5, 3);

  const auto full = vat::run_elicitation(items, t, backend, local(port), manifest(vat::Condition::kPre));

  vat::ElicitOptions opts;
  opts.checkpoint = dir / "pre.ckpt.jsonl";
  opts.limit = 6;
  const auto partial = vat::run_elicitation(items, t, backend, local(port), manifest(vat::Condition::kPre), opts);
  EXPECT_EQ(partial.table.size(), 6u);
  const int before = server.responder().requests();
  opts.limit = 0;
  const auto resumed = vat::run_elicitation(items, t, backend, local(port), manifest(vat::Condition::kPre), opts);
  EXPECT_EQ(resumed.stats.resumed, 6u);
  EXPECT_EQ(server.responder().requests() - before, 9);
  EXPECT_EQ(resumed.table, full.table);
  EXPECT_EQ(vat::to_jsonl(resumed.table), vat::to_jsonl(full.table));
  fs::remove_all(dir);
}

TEST(Elicit, PrePostKeySetsAndPromptBodiesMatch) {
  const auto dir = temp_path("pairs");
  vat::MockServer server({});
  const int port = server.start();
  vat::HttpChatBackend backend(local(port));
  const auto t = vat::default_taxonomy();
  const auto items = make_items(4, 4);
  vat::ElicitOptions pre_opts;
  pre_opts.prompt_log = dir / "pre.prompts.jsonl";
  vat::ElicitOptions post_opts;
  post_opts.prompt_log = dir / "post.prompts.jsonl";
  post_opts.steering = steering(4);
  const auto pre = vat::run_elicitation(items, t, backend, local(port), manifest(vat::Condition::kPre), pre_opts);
  const auto post = vat::run_elicitation(items, t, backend, local(port), manifest(vat::Condition::kPost), post_opts);
  EXPECT_EQ(keys(pre.table), keys(post.table));
  EXPECT_EQ(vat::pair_runs(pre.table, post.table, vat::PairPolicy::kStrict).samples.size(), 16u);

  const auto pre_log = vat::io::read_file(pre_opts.prompt_log);
  const auto post_log = vat::io::read_file(post_opts.prompt_log);
  std::istringstream a(pre_log), b(post_log);
  std::string la, lb;
  int lines = 0;
  while (std::getline(a, la) && std::getline(b, lb)) {
    const auto ja = nlohmann::json::parse(la);
    const auto jb = nlohmann::json::parse(lb);
    const auto pa = ja["prompt"].get<std::string>();
    const auto pb = jb["prompt"].get<std::string>();
    EXPECT_EQ(pb.substr(pb.size() - pa.size()), pa);
    EXPECT_NE(pa, pb);
    ++lines;
  }
  EXPECT_EQ(lines, 16);
  fs::remove_all(dir);
}

TEST(Items, LoadAndValidate) {
  const auto t = vat::default_taxonomy();
  const std::string ok =
      R"({"scene_id":"s1","action_id":"a","micro_value":"power.1","scene_text":"x","action_text":"y"})"
      "\n";
  EXPECT_EQ(vat::load_items(ok, t).size(), 1u);
  EXPECT_THROW(vat::load_items(ok + ok, t), InputError);
  EXPECT_THROW(vat::load_items(R"({"scene_id":"s1","action_id":"a","micro_value":"zzz","scene_text":"x","action_text":"y"})", t),
               InputError);
  EXPECT_THROW(vat::load_items("{}", t), InputError);
}
