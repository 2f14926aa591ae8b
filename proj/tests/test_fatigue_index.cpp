// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fatigue/fatigue_index.hpp"
#include "oracles.hpp"

using namespace fatigue;

namespace {
NormalizerConfig normalizer_256() {
  NormalizerConfig c;
  c.entropy_ceiling = std::log(256.0);
  return c;
}
}  // namespace

TEST(NormalizeAttention, CalibratesThenRatios) {
  NormalizerConfig cfg;
  AttentionCalibration cal;
  for (int i = 0; i < 8; ++i) EXPECT_EQ(normalize_attention(i % 2 ? 0.03 : 0.05, cal, cfg), 0.0);
  EXPECT_NEAR(cal.mean, 0.04, 1e-15);
  EXPECT_NEAR(normalize_attention(0.01, cal, cfg), 0.75, 1e-12);
  EXPECT_NEAR(normalize_attention(0.04, cal, cfg), 0.0, 1e-12);
  EXPECT_EQ(normalize_attention(0.0, cal, cfg), 1.0);
  EXPECT_EQ(normalize_attention(0.5, cal, cfg), 0.0);
}

TEST(NormalizeAttention, FloorGuardsZeroCalibration) {
  NormalizerConfig cfg;
  cfg.attention_calibration_window = 1;
  AttentionCalibration cal;
  normalize_attention(0.0, cal, cfg);
  EXPECT_EQ(normalize_attention(0.0, cal, cfg), 1.0);
  EXPECT_EQ(normalize_attention(1e-7, cal, cfg), 0.9);
}

TEST(NormalizeDrift, ClosedForm) {
  EXPECT_EQ(normalize_drift(0.0, 2.0), 0.0);
  EXPECT_NEAR(normalize_drift(2.0, 2.0), 1.0 - std::exp(-1.0), 1e-15);
  EXPECT_NEAR(normalize_drift(2.0, 2.0), 0.6321, 1e-4);
  EXPECT_LE(normalize_drift(1e3, 1.0), 1.0);
  EXPECT_GT(normalize_drift(40.0, 1.0), 0.999999);
}

TEST(NormalizeEntropy, BandDistance) {
  const auto cfg = normalizer_256();
  EXPECT_EQ(normalize_entropy(2.0, cfg), 0.0);
  EXPECT_EQ(normalize_entropy(1.5, cfg), 0.0);
  EXPECT_EQ(normalize_entropy(3.0, cfg), 0.0);
  EXPECT_EQ(normalize_entropy(0.0, cfg), 1.0);
  EXPECT_DOUBLE_EQ(normalize_entropy(0.75, cfg), 0.5);
  EXPECT_NEAR(normalize_entropy(std::log(256.0), cfg), 1.0, 1e-15);
  EXPECT_NEAR(normalize_entropy(4.0, cfg), 1.0 / (std::log(256.0) - 3.0), 1e-15);
}

TEST(Fuse, DefaultWeights) {
  const FatigueWeights w;
  EXPECT_NEAR(fuse(1, 0, 0, w), 0.40, 1e-9);
  EXPECT_NEAR(fuse(0, 1, 0, w), 0.25, 1e-9);
  EXPECT_NEAR(fuse(0, 0, 1, w), 0.35, 1e-9);
  EXPECT_NEAR(fuse(1, 1, 1, w), 1.0, 1e-12);
  EXPECT_NEAR(fuse(0.5, 0.5, 0.5, w), 0.5, 1e-12);
}

TEST(Fuse, ConvexAndMonotone) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const FatigueWeights w;
  for (int i = 0; i < 10000; ++i) {
    const double a = u(gen), d = u(gen), e = u(gen);
    const double f = fuse(a, d, e, w);
    EXPECT_NEAR(f, 0.40 * a + 0.25 * d + 0.35 * e, 1e-12);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    EXPECT_GE(fuse(std::min(1.0, a + 0.1), d, e, w), f);
  }
}

TEST(Fuse, UnavailableChannelWeightIsRedistributed) {
  const FatigueWeights w;
  // Drift missing: attention and entropy share 0.75 proportionally.
  EXPECT_NEAR(fuse(1, 0.9, 0, w, {true, false, true}), 0.40 / 0.75, 1e-12);
  EXPECT_NEAR(fuse(0, 0.9, 1, w, {true, false, true}), 0.35 / 0.75, 1e-12);
  EXPECT_NEAR(fuse(1, 1, 1, w, {false, true, true}), 1.0, 1e-12);
  EXPECT_NEAR(fuse(0.3, 0.7, 0.2, w, {false, false, true}), 0.2, 1e-12);
  try {
    fuse(1, 1, 1, w, {false, false, false});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AllChannelsUnavailable);
  }
}

TEST(Update, FirstSmoothedValueIsFirstIndex) {
  FatigueConfig cfg;
  cfg.normalizer = normalizer_256();
  RawSignals raw;
  raw.attention_to_prompt = 0.3;
  raw.drift = 1.0;
  raw.entropy = 0.3;
  const auto s = update(raw, FatigueState{}, cfg, 2.0);
  EXPECT_EQ(s.index_smoothed, s.index);
  EXPECT_NEAR(s.index, 0.25 * (1 - std::exp(-0.5)) + 0.35 * 0.8, 1e-12);
  const auto s2 = update(raw, s, cfg, 2.0);
  EXPECT_NEAR(s2.index_smoothed, 0.2 * s2.index + 0.8 * s.index_smoothed, 1e-15);
  EXPECT_EQ(s2.steps_observed, 2u);
}

TEST(Update, DriftUnavailableWithoutAnchor) {
  FatigueConfig cfg;
  cfg.normalizer = normalizer_256();
  RawSignals raw;
  raw.drift = 100.0;
  raw.entropy = 0.0;
  const auto s = update(raw, FatigueState{}, cfg, std::nullopt);
  EXPECT_EQ(s.phi_drift, 0.0);
  EXPECT_NEAR(s.index, 0.35 / 0.75, 1e-12);
}

TEST(Hysteresis, CrossingWarnEnter) {
  const HysteresisConfig h;
  EXPECT_EQ(next_risk(RiskLevel::Safe, 0.48, h), RiskLevel::Safe);
  EXPECT_EQ(next_risk(RiskLevel::Safe, 0.52, h), RiskLevel::Warn);
}

TEST(Hysteresis, OscillationAboveExitStaysWarn) {
  const HysteresisConfig h;
  const std::vector<double> traj{0.52, 0.47, 0.52, 0.47, 0.52};
  RiskLevel r = RiskLevel::Safe;
  std::vector<std::string> got;
  for (double s : traj) {
    r = next_risk(r, s, h);
    got.emplace_back(to_string(r));
  }
  EXPECT_EQ(got, oracle::hysteresis(traj));
  for (const auto& g : got) EXPECT_EQ(g, "WARN");
}

TEST(Hysteresis, MatchesTransitionTableOnRandomWalks) {
  const HysteresisConfig h;
  std::mt19937_64 gen(4);
  std::normal_distribution<double> step(0.0, 0.04);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> traj;
    double s = 0.5;
    for (int i = 0; i < 60; ++i) {
      s = std::clamp(s + step(gen), 0.0, 1.0);
      traj.push_back(s);
    }
    RiskLevel r = RiskLevel::Safe;
    std::vector<std::string> got;
    for (double v : traj) {
      r = next_risk(r, v, h);
      got.emplace_back(to_string(r));
    }
    ASSERT_EQ(got, oracle::hysteresis(traj));
  }
}

TEST(Hysteresis, NoChatterInsideBand) {
  const HysteresisConfig h;
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> in_band(std::nextafter(0.45, 1.0), std::nextafter(0.50, 0.0));
  for (RiskLevel start : {RiskLevel::Safe, RiskLevel::Warn}) {
    for (int trial = 0; trial < 2000; ++trial) {
      RiskLevel r = start;
      for (int i = 0; i < 100; ++i) {
        const RiskLevel next = next_risk(r, in_band(gen), h);
        ASSERT_EQ(next, r);
        r = next;
      }
    }
  }
}

TEST(Hysteresis, CriticalLevels) {
  const HysteresisConfig h;
  EXPECT_EQ(next_risk(RiskLevel::Warn, 0.71, h), RiskLevel::Critical);
  EXPECT_EQ(next_risk(RiskLevel::Critical, 0.66, h), RiskLevel::Critical);
  EXPECT_EQ(next_risk(RiskLevel::Critical, 0.60, h), RiskLevel::Warn);
  EXPECT_EQ(next_risk(RiskLevel::Critical, 0.40, h), RiskLevel::Safe);
  EXPECT_EQ(next_risk(RiskLevel::Safe, 0.70, h), RiskLevel::Critical);
}

TEST(FatigueValidation, FieldLevelMessages) {
  FatigueWeights w{0.5, 0.5, 0.5};
  ASSERT_EQ(validate(w).size(), 1u);
  EXPECT_NE(validate(w)[0].find("fatigue.weights"), std::string::npos);
  HysteresisConfig h;
  h.warn_exit = 0.6;
  EXPECT_FALSE(validate(h).empty());
  NormalizerConfig n;
  n.entropy_ceiling = 2.0;
  EXPECT_FALSE(validate(n).empty());
}
