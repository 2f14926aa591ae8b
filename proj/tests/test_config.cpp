// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fatigue/config.hpp"

using namespace fatigue;

TEST(Config, JsonRoundTrip) {
  RunConfig c;
  c.prompt = "Who wrote Dubliners?";
  c.label = "SCA+ERD";
  c.backend.toy.logit_std = 4.0;
  c.decode.strategy = Strategy::TopK;
  c.decode.top_k = 7;
  c.policy.sca.enabled = true;
  c.policy.erd.gain = 0.5;
  c.fatigue.hysteresis.smoothing_alpha = 0.3;
  c.prompt_slice = PromptSlice{1, 5};
  EXPECT_EQ(run_config_from_json(to_json(c)), c);
}

TEST(Config, PartialJsonKeepsDefaults) {
  const auto c = run_config_from_json(nlohmann::json::parse(R"({"prompt": "x", "policy": {"par": {"enabled": true}}})"));
  EXPECT_TRUE(c.policy.par.enabled);
  EXPECT_EQ(c.policy.par.reset_every, 50u);
  EXPECT_EQ(c.decode.top_p, 0.95);
  EXPECT_EQ(c.fatigue.weights.attention, 0.40);
}

TEST(Config, Redaction) {
  RunConfig c;
  c.backend.kind = BackendKind::Remote;
  c.backend.endpoint = "http://x";
  c.backend.auth = "secret";
  EXPECT_EQ(to_json(c, true)["backend"]["auth"], "***");
  EXPECT_EQ(to_json(c, false)["backend"]["auth"], "secret");
}

TEST(Config, TypeErrorsAreInvalidConfig) {
  try {
    run_config_from_json(nlohmann::json::parse(R"({"decode": {"top_k": "many"}})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
  EXPECT_THROW(run_config_from_json(nlohmann::json::array()), Error);
}

TEST(Config, UnknownKeysRejected) {
  for (const char* text : {R"({"promt": "x"})", R"({"decode": {"rng_seed": 5}})",
                           R"({"policy": {"erd": {"gian": 0.3}}})", R"({"backend": {"kind": "toy", "toy": {"depth": 3}}})"}) {
    try {
      run_config_from_json(nlohmann::json::parse(text));
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
      EXPECT_NE(std::string(e.what()).find("unknown configuration key"), std::string::npos);
    }
  }
  EXPECT_NO_THROW(run_config_from_json(nlohmann::json::parse(R"({"backend": "toy", "prompt_slice": {"start": 0, "end": 2}})")));
}

TEST(Config, ValidationListsEveryProblem) {
  RunConfig c;
  c.decode.top_p = 1.5;
  c.fatigue.weights.entropy = 0.9;
  const auto errors = validate(c);
  EXPECT_EQ(errors.size(), 3u);  // empty prompt, top_p, weights
  EXPECT_THROW(require_valid(c), Error);
}

TEST(Config, BackendSelector) {
  EXPECT_EQ(parse_backend_selector("toy").kind, BackendKind::Toy);
  const auto s = parse_backend_selector("scripted:run.jsonl");
  EXPECT_EQ(s.kind, BackendKind::Scripted);
  EXPECT_EQ(s.script_path, "run.jsonl");
  EXPECT_EQ(parse_backend_selector("remote:http://h:1").endpoint, "http://h:1");
  EXPECT_THROW(parse_backend_selector("gpu"), Error);
}

TEST(Knobs, SetAndReject) {
  PolicyConfig p;
  set_knob(p, "erd.gain", 0.5);
  EXPECT_EQ(p.erd.gain, 0.5);
  set_knob(p, "policy.sca.cooldown_steps", 3);
  EXPECT_EQ(p.sca.cooldown_steps, 3u);
  set_knob(p, "erd.t_max", 2);
  EXPECT_EQ(p.erd.t_max, 2.0);

  auto expect_invalid = [&](const std::string& path, const nlohmann::json& v) {
    const PolicyConfig before = p;
    try {
      set_knob(p, path, v);
      ADD_FAILURE() << path;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidKnob) << path;
    }
    EXPECT_EQ(p, before);
  };
  expect_invalid("sca.tau_attention", -1.0);
  expect_invalid("sca.cooldown_steps", -2);
  expect_invalid("sca.cooldown_steps", 1.5);
  expect_invalid("erd.t_min", 5.0);
  expect_invalid("erd.nonexistent", 1.0);
  expect_invalid("gain", 1.0);
  expect_invalid("erd.enabled", 1);
}

TEST(Commands, ParseAndApply) {
  const auto c = control_command_from_json(
      nlohmann::json::parse(R"({"command": "toggle_intervention", "kind": "SCA", "on": true})"));
  PolicyConfig p;
  apply_command(p, c);
  EXPECT_TRUE(p.sca.enabled);
  EXPECT_EQ(to_json(c)["kind"], "SCA");
  EXPECT_EQ(control_command_from_json(to_json(c)).kind, InterventionKind::Sca);
  EXPECT_THROW(control_command_from_json(nlohmann::json::parse(R"({"command": "explode"})")), Error);
  EXPECT_THROW(control_command_from_json(nlohmann::json::parse(R"({"command": "toggle_intervention", "kind": "X", "on": true})")),
               Error);
}

TEST(Config, LoadFile) {
  const auto path = std::filesystem::temp_directory_path() / "fatigue_cfg_test.json";
  {
    std::ofstream(path) << R"({"prompt": "hi", "decode": {"max_new": 9}})";
  }
  RunConfig c;
  merge_json(load_json_file(path), c);
  EXPECT_EQ(c.decode.max_new, 9u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_json_file(path), Error);
}
