// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "fatigue/engine.hpp"
#include "test_support.hpp"

using namespace fatigue;
using namespace testing_support;

namespace {
// Records in a CSV document; newlines inside quoted fields do not count.
std::size_t csv_records(const std::string& csv) {
  std::size_t n = 0;
  bool quoted = false;
  for (char c : csv) {
    if (c == '"') quoted = !quoted;
    if (c == '\n' && !quoted) ++n;
  }
  return n;
}
const Trace& sample_trace() {
  static const Trace t = [] {
    auto cfg = toy_config(11);
    cfg.policy.par.enabled = true;
    cfg.policy.erd.enabled = true;
    cfg.backend.toy.eos_logit_bias = -1e3;
    return run(cfg).trace;
  }();
  return t;
}

}  // namespace

TEST(TraceJson, RoundTrip) {
  const auto& t = sample_trace();
  const auto back = import_json(export_json(t));
  EXPECT_EQ(back, t);
  EXPECT_EQ(export_json(back, 2), export_json(t, 2));
}

TEST(TraceJson, LatencyIsOptional) {
  auto t = sample_trace();
  t.metrics.latency_seconds.reset();
  const auto j = nlohmann::json::parse(export_json(t));
  EXPECT_TRUE(j["metrics"]["latency_seconds"].is_null());
  EXPECT_FALSE(import_json(export_json(t)).metrics.latency_seconds.has_value());
}

TEST(TraceJson, CorruptInputRejected) {
  try {
    import_json("{\"header\": 3");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CorruptTrace);
  }
  EXPECT_THROW(import_json("{}"), Error);
}

TEST(TraceCsv, HeaderPlusOneLinePerRow) {
  const auto csv = export_csv(sample_trace());
  EXPECT_EQ(csv_records(csv), 121u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kCsvHeader);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line.rfind("1,", 0), 0u);
}

TEST(TraceCsv, Escaping) {
  EXPECT_EQ(csv_escape("plain"), "plain");
  EXPECT_EQ(csv_escape("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_escape("\n"), "\"\n\"");
  Trace t;
  TraceRecord r;
  r.step = 1;
  r.token_text = ",";
  r.intervention = "SCA+ERD";
  t.rows.push_back(r);
  const auto csv = export_csv(t);
  EXPECT_NE(csv.find(",\",\",false,"), std::string::npos);
}

TEST(TokenText, InvalidUtf8IsEscaped) {
  EXPECT_EQ(display_text("a"), "a");
  EXPECT_EQ(display_text("\xC3\xA9"), "\xC3\xA9");
  EXPECT_EQ(display_text(std::string(1, '\xC3')), "<0xC3>");
  EXPECT_EQ(display_text("a\xFF" "b"), "a<0xFF>b");
}

TEST(Replay, CleanOnEngineTraces) {
  const auto report = replay_verify(sample_trace());
  EXPECT_TRUE(report.clean()) << report.render();
  EXPECT_EQ(report.rows_checked, 120u);
}

TEST(Replay, DerivedFieldEditIsLocalized) {
  const auto& base = sample_trace();
  for (const char* field : {"fatigue", "phi_entropy", "temperature"}) {
    auto t = base;
    auto& row = t.rows[40];
    if (std::string(field) == "fatigue") row.fatigue += 1e-3;
    if (std::string(field) == "phi_entropy") row.phi_entropy += 1e-3;
    if (std::string(field) == "temperature") row.temperature += 1e-3;
    const auto report = replay_verify(t);
    ASSERT_EQ(report.mismatches.size(), std::string(field) == "fatigue" ? 2u : 1u) << report.render();
    EXPECT_EQ(report.mismatches[0].step, 41u);
    EXPECT_EQ(report.mismatches[0].field, field);
  }
}

TEST(Replay, RiskEditReported) {
  auto t = sample_trace();
  auto& row = t.rows[5];
  row.risk = row.risk == RiskLevel::Critical ? RiskLevel::Safe : RiskLevel::Critical;
  const auto report = replay_verify(t);
  ASSERT_EQ(report.mismatches.size(), 1u);
  EXPECT_EQ(report.mismatches[0].field, "risk");
}

TEST(Replay, RawSignalEditCascades) {
  auto t = sample_trace();
  t.rows[30].entropy += 0.5;
  const auto report = replay_verify(t);
  ASSERT_FALSE(report.clean());
  EXPECT_EQ(report.mismatches[0].step, 31u);
  EXPECT_GT(report.mismatches.size(), 1u);
}

TEST(Replay, InterventionTagChecked) {
  auto t = sample_trace();
  for (auto& r : t.rows) {
    if (r.intervention.find("PAR") != std::string::npos) {
      r.intervention = "";
      break;
    }
  }
  const auto report = replay_verify(t);
  bool saw = false;
  for (const auto& m : report.mismatches) saw |= m.field == "intervention";
  EXPECT_TRUE(saw);
}

TEST(Replay, RejectsMisnumberedRows) {
  auto t = sample_trace();
  t.rows[3].step = 9;
  EXPECT_THROW(replay_verify(t), Error);
}

TEST(Metrics, ParCount) {
  EXPECT_EQ(sample_trace().metrics.interventions_fired.at("PAR"), 2u);
  EXPECT_EQ(count_interventions(sample_trace().rows), sample_trace().metrics.interventions_fired);
}

TEST(Compare, DeltaRendering) {
  EXPECT_EQ(format_delta(-0.05), "-0.05");
  EXPECT_EQ(format_delta(0.02), "+0.02");
  EXPECT_EQ(format_delta(0.0), "0.00");
  EXPECT_EQ(format_delta(-0.001), "0.00");
  EXPECT_EQ(format_value_with_delta(0.31, -0.05), "0.31 (-0.05)");

  Trace b, t;
  b.rows.resize(2);
  t.rows.resize(2);
  b.rows[0].fatigue = 0.36;
  b.rows[1].fatigue = 0.36;
  t.rows[0].fatigue = 0.31;
  t.rows[1].fatigue = 0.31;
  const auto report = compare(b, t);
  EXPECT_EQ(report.delta_text(), "0.31 (-0.05)");
  EXPECT_NE(report.render().find("0.31 (-0.05)"), std::string::npos);
  EXPECT_EQ(report.to_json()["delta_text"], "0.31 (-0.05)");
  EXPECT_EQ(report.series.size(), 2u);
}

TEST(Compare, Antisymmetric) {
  auto cfg = toy_config(8);
  cfg.policy.erd.enabled = true;
  const auto pair = run_pair(cfg);
  const auto ab = compare(pair.baseline.trace, pair.treated.trace);
  const auto ba = compare(pair.treated.trace, pair.baseline.trace);
  EXPECT_DOUBLE_EQ(ab.delta, -ba.delta);
  EXPECT_TRUE(ab.warnings.empty());
}

TEST(Compare, IncompatibleTracesWarn) {
  const auto a = run(toy_config(1)).trace;
  const auto b = run(toy_config(2, "A different prompt")).trace;
  const auto report = compare(a, b);
  ASSERT_EQ(report.warnings.size(), 2u);
  EXPECT_NE(report.render().find("warning: IncompatibleTraces"), std::string::npos);
}
