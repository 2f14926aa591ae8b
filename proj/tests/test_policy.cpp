// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "fatigue/interventions.hpp"
#include "oracles.hpp"

using namespace fatigue;

namespace {

// Runs decide/append/execute the way the engine orders them and returns the
// steps at which each context action fired.
struct Drive {
  std::vector<std::size_t> sca, par, pause;
};

Drive drive(const std::vector<double>& attention, const PolicyConfig& cfg,
            const std::vector<double>& phi_entropy = {}) {
  auto state = make_decode_state(std::vector<TokenId>(10, 1), 4096, 1.0);
  const std::vector<TokenId> focus{7, 7, 7};
  Drive out;
  for (std::size_t t = 1; t <= attention.size(); ++t) {
    RawSignals raw;
    raw.attention_to_prompt = attention[t - 1];
    FatigueState fs;
    if (!phi_entropy.empty()) fs.phi_entropy = phi_entropy[t - 1];
    const auto d = decide(t, raw, fs, state, cfg);
    append_token(state, 2);
    for (const auto& e : execute(d, state, cfg, 2.0, focus)) {
      if (e.kind == InterventionKind::Sca) out.sca.push_back(e.step);
      if (e.kind == InterventionKind::Par) out.par.push_back(e.step);
      if (e.kind == InterventionKind::Pause) out.pause.push_back(e.step);
    }
  }
  return out;
}

PolicyConfig sca_only(std::size_t cooldown = 8, std::size_t max_firings = 1) {
  PolicyConfig cfg;
  cfg.sca.enabled = true;
  cfg.sca.cooldown_steps = cooldown;
  cfg.sca.max_firings = max_firings;
  return cfg;
}

}  // namespace

TEST(Policy, AllDisabledDecidesNothing) {
  PolicyConfig cfg;
  auto state = make_decode_state({1, 2}, 64, 1.0);
  RawSignals raw;
  raw.attention_to_prompt = 0.0;
  FatigueState fs;
  fs.phi_entropy = 1.0;
  fs.phi_drift = 1.0;
  for (std::size_t t = 1; t <= 200; ++t) {
    const auto d = decide(t, raw, fs, state, cfg);
    EXPECT_EQ(d.context_action, ContextAction::None);
    EXPECT_FALSE(d.erd_adjust);
    append_token(state, 3);
  }
}

TEST(Policy, ScaFiresOnceWithDefaultBudget) {
  std::vector<double> a(60, 0.05);
  a[11] = a[14] = a[39] = 0.005;
  EXPECT_EQ(drive(a, sca_only()).sca, (std::vector<std::size_t>{12}));
}

TEST(Policy, ScaCooldownCountsDecodeSteps) {
  std::vector<double> a(60, 0.005);
  const auto got = drive(a, sca_only(8, 100)).sca;
  EXPECT_EQ(got, oracle::sca_firings(a, 0.010, 8, 100));
  ASSERT_GE(got.size(), 2u);
  EXPECT_EQ(got[0], 1u);
  EXPECT_EQ(got[1], 9u);

  std::vector<double> b(40, 0.05);
  b[11] = b[14] = b[19] = 0.005;
  EXPECT_EQ(drive(b, sca_only(8, 100)).sca, (std::vector<std::size_t>{12, 20}));
}

TEST(Policy, ScaRespectsStrictThreshold) {
  std::vector<double> a(20, 0.010);
  EXPECT_TRUE(drive(a, sca_only()).sca.empty());
}

TEST(Policy, ScaMatchesOracleOnRandomTrajectories) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.0, 0.03);
  std::uniform_int_distribution<std::size_t> cd(1, 15), mf(1, 6);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> a(120);
    for (auto& x : a) x = u(gen);
    const auto cooldown = cd(gen), max_firings = mf(gen);
    ASSERT_EQ(drive(a, sca_only(cooldown, max_firings)).sca,
              oracle::sca_firings(a, 0.010, cooldown, max_firings))
        << "trial " << trial;
  }
}

TEST(Policy, ParOnCadenceAndScaTakesPriority) {
  PolicyConfig cfg;
  cfg.par.enabled = true;
  std::vector<double> a(120, 0.05);
  EXPECT_EQ(drive(a, cfg).par, (std::vector<std::size_t>{50, 100}));

  cfg.sca.enabled = true;
  a[49] = 0.001;
  const auto both = drive(a, cfg);
  EXPECT_EQ(both.sca, (std::vector<std::size_t>{50}));
  EXPECT_EQ(both.par, (std::vector<std::size_t>{100}));
}

TEST(Policy, PauseOnCadenceSkipsMetaTokens) {
  PolicyConfig cfg;
  cfg.pause.enabled = true;
  cfg.pause.cadence = 60;
  std::vector<double> a(200, 0.05);
  // Five gate tokens after each check do not advance the cadence.
  EXPECT_EQ(drive(a, cfg).pause, (std::vector<std::size_t>{60, 125, 190}));
}

TEST(Policy, PauseDeferredBehindRebuild) {
  PolicyConfig cfg;
  cfg.par.enabled = true;
  cfg.pause.enabled = true;
  cfg.pause.cadence = 50;
  std::vector<double> a(60, 0.05);
  const auto got = drive(a, cfg);
  EXPECT_EQ(got.par, (std::vector<std::size_t>{50}));
  EXPECT_EQ(got.pause, (std::vector<std::size_t>{51}));
}

TEST(Policy, PauseOnEntropyExcursion) {
  PolicyConfig cfg;
  cfg.pause.enabled = true;
  cfg.pause.cadence = 1000;
  std::vector<double> a(20, 0.05), phi(20, 0.0);
  phi[3] = 0.4;
  EXPECT_EQ(drive(a, cfg, phi).pause, (std::vector<std::size_t>{4}));
}

TEST(Policy, ErdFlaggedWhenEnabled) {
  PolicyConfig cfg;
  cfg.erd.enabled = true;
  auto state = make_decode_state({1}, 16, 1.0);
  const auto d = decide(1, RawSignals{}, FatigueState{}, state, cfg);
  EXPECT_TRUE(d.erd_adjust);
  EXPECT_EQ(d.context_action, ContextAction::None);
}

TEST(Policy, Validation) {
  PolicyConfig cfg;
  EXPECT_TRUE(validate(cfg).empty());
  cfg.sca.tau_attention = -1.0;
  cfg.erd.t_min = 2.0;
  EXPECT_EQ(validate(cfg).size(), 2u);
}
