// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fatigue/config.hpp"
#include "fatigue/decode_state.hpp"
#include "fatigue/error.hpp"
#include "fatigue/fatigue_index.hpp"
#include "fatigue/interventions.hpp"
#include "fatigue/policy.hpp"

namespace fatigue {

/// One row per sampled token.
struct TraceRecord {
  std::size_t step = 0;
  TokenId token_id = 0;
  std::string token_text;
  bool meta = false;
  double attention = 0.0;
  double attention_total = 0.0;
  double drift = 0.0;
  double entropy = 0.0;
  bool attention_available = true;
  bool hidden_available = true;
  double phi_attention = 0.0;
  double phi_drift = 0.0;
  double phi_entropy = 0.0;
  double fatigue = 0.0;
  double fatigue_smoothed = 0.0;
  double temperature = 0.0;
  RiskLevel risk = RiskLevel::Safe;
  std::string intervention;  // "" when nothing fired, else e.g. "PAR+ERD"

  bool operator==(const TraceRecord&) const = default;
};

struct RunMetrics {
  double mean_fatigue_index = 0.0;
  /// Wall-clock decode time. Omitted from reproducible trace files.
  std::optional<double> latency_seconds;
  std::size_t tokens_generated = 0;
  std::map<std::string, std::size_t> interventions_fired;

  bool operator==(const RunMetrics&) const = default;
};

enum class RunStatus { Done, Error, Cancelled };

inline constexpr std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::Done: return "DONE";
    case RunStatus::Error: return "ERROR";
    case RunStatus::Cancelled: return "CANCELLED";
  }
  return "";
}

/// A control command and the first step that ran under it.
struct Annotation {
  std::size_t step = 0;
  nlohmann::json command;

  bool operator==(const Annotation&) const = default;
};

/// Everything replay needs: the resolved configuration snapshot (secrets
/// redacted) and the run constants derived from the backend.
struct TraceHeader {
  RunConfig config;
  BackendDescriptor backend;
  std::size_t prompt_token_count = 0;
  PromptSlice slice;
  std::optional<double> anchor_norm;
  RunStatus status = RunStatus::Done;
  std::string error;

  bool operator==(const TraceHeader& o) const {
    return config == o.config && descriptor_to_json(backend) == descriptor_to_json(o.backend) &&
           prompt_token_count == o.prompt_token_count && slice == o.slice && anchor_norm == o.anchor_norm &&
           status == o.status && error == o.error;
  }
};

struct Trace {
  TraceHeader header;
  std::vector<TraceRecord> rows;
  RunMetrics metrics;
  std::vector<Annotation> annotations;

  bool operator==(const Trace&) const = default;
};

// ---- token text -------------------------------------------------------------

/// Length of the valid UTF-8 sequence at the start of `s`, 0 if invalid.
inline std::size_t utf8_sequence_length(std::string_view s) noexcept {
  if (s.empty()) return 0;
  const auto c0 = static_cast<unsigned char>(s[0]);
  std::size_t len = 0;
  unsigned char lo = 0x80, hi = 0xBF;
  if (c0 < 0x80) return 1;
  if (c0 >= 0xC2 && c0 <= 0xDF) {
    len = 2;
  } else if (c0 >= 0xE0 && c0 <= 0xEF) {
    len = 3;
    if (c0 == 0xE0) lo = 0xA0;
    if (c0 == 0xED) hi = 0x9F;
  } else if (c0 >= 0xF0 && c0 <= 0xF4) {
    len = 4;
    if (c0 == 0xF0) lo = 0x90;
    if (c0 == 0xF4) hi = 0x8F;
  } else {
    return 0;
  }
  if (s.size() < len) return 0;
  for (std::size_t i = 1; i < len; ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c < (i == 1 ? lo : 0x80) || c > (i == 1 ? hi : 0xBF)) return 0;
  }
  return len;
}

/// Printable form of a token's bytes: valid UTF-8 passes through, stray
/// bytes become "<0xNN>". Keeps CSV and JSON exports well-formed.
inline std::string display_text(std::string_view bytes) {
  std::string out;
  std::size_t i = 0;
  while (i < bytes.size()) {
    const std::size_t len = utf8_sequence_length(bytes.substr(i));
    if (len == 0) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "<0x%02X>", static_cast<unsigned char>(bytes[i]));
      out += buf;
      ++i;
    } else {
      out.append(bytes.substr(i, len));
      i += len;
    }
  }
  return out;
}

// ---- metrics ----------------------------------------------------------------

/// Arithmetic mean of F_t over non-meta rows; 0 for an empty trace.
inline double mean_fatigue_index(const std::vector<TraceRecord>& rows) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& r : rows) {
    if (r.meta) continue;
    total += r.fatigue;
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

inline double mean_phi_entropy(const std::vector<TraceRecord>& rows) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& r : rows) {
    if (r.meta) continue;
    total += r.phi_entropy;
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

inline std::map<std::string, std::size_t> count_interventions(const std::vector<TraceRecord>& rows) {
  std::map<std::string, std::size_t> counts;
  for (auto k : kAllInterventions) counts[std::string(to_string(k))] = 0;
  for (const auto& r : rows) {
    std::string_view tag = r.intervention;
    while (!tag.empty()) {
      const auto plus = tag.find('+');
      ++counts[std::string(tag.substr(0, plus))];
      if (plus == std::string_view::npos) break;
      tag.remove_prefix(plus + 1);
    }
  }
  return counts;
}

/// Non-meta token ids, the basis of the user-visible answer.
inline std::vector<TokenId> answer_tokens(const Trace& trace) {
  std::vector<TokenId> ids;
  for (const auto& r : trace.rows) {
    if (!r.meta) ids.push_back(r.token_id);
  }
  return ids;
}

// ---- CSV ------------------------------------------------------------------------

inline constexpr std::string_view kCsvHeader =
    "step,token_id,token_text,meta,attention,drift,entropy,phi_attention,phi_drift,phi_entropy,"
    "fatigue,fatigue_smoothed,temperature,risk,intervention";

inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string export_csv(const Trace& trace) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : trace.rows) {
    out += std::to_string(r.step) + ',' + std::to_string(r.token_id) + ',' + csv_escape(r.token_text) + ',' +
           (r.meta ? "true" : "false") + ',' + csv_real(r.attention) + ',' + csv_real(r.drift) + ',' +
           csv_real(r.entropy) + ',' + csv_real(r.phi_attention) + ',' + csv_real(r.phi_drift) + ',' +
           csv_real(r.phi_entropy) + ',' + csv_real(r.fatigue) + ',' + csv_real(r.fatigue_smoothed) + ',' +
           csv_real(r.temperature) + ',' + std::string(to_string(r.risk)) + ',' + csv_escape(r.intervention) +
           '\n';
  }
  return out;
}

// ---- JSON -----------------------------------------------------------------------

inline nlohmann::json to_json(const TraceRecord& r) {
  return {{"step", r.step},
          {"token_id", r.token_id},
          {"token_text", r.token_text},
          {"meta", r.meta},
          {"attention", r.attention},
          {"attention_total", r.attention_total},
          {"drift", r.drift},
          {"entropy", r.entropy},
          {"attention_available", r.attention_available},
          {"hidden_available", r.hidden_available},
          {"phi_attention", r.phi_attention},
          {"phi_drift", r.phi_drift},
          {"phi_entropy", r.phi_entropy},
          {"fatigue", r.fatigue},
          {"fatigue_smoothed", r.fatigue_smoothed},
          {"temperature", r.temperature},
          {"risk", std::string(to_string(r.risk))},
          {"intervention", r.intervention.empty() ? nlohmann::json() : nlohmann::json(r.intervention)}};
}

inline TraceRecord trace_record_from_json(const nlohmann::json& j) {
  TraceRecord r;
  r.step = j.at("step").get<std::size_t>();
  r.token_id = j.at("token_id").get<TokenId>();
  r.token_text = j.at("token_text").get<std::string>();
  r.meta = j.at("meta").get<bool>();
  r.attention = j.at("attention").get<double>();
  r.attention_total = j.value("attention_total", 0.0);
  r.drift = j.at("drift").get<double>();
  r.entropy = j.at("entropy").get<double>();
  r.attention_available = j.value("attention_available", true);
  r.hidden_available = j.value("hidden_available", true);
  r.phi_attention = j.at("phi_attention").get<double>();
  r.phi_drift = j.at("phi_drift").get<double>();
  r.phi_entropy = j.at("phi_entropy").get<double>();
  r.fatigue = j.at("fatigue").get<double>();
  r.fatigue_smoothed = j.at("fatigue_smoothed").get<double>();
  r.temperature = j.at("temperature").get<double>();
  auto risk = risk_from_string(j.at("risk").get<std::string>());
  if (!risk) throw Error(ErrorKind::CorruptTrace, "unknown risk value at step " + std::to_string(r.step));
  r.risk = *risk;
  if (auto it = j.find("intervention"); it != j.end() && it->is_string()) r.intervention = it->get<std::string>();
  return r;
}

inline nlohmann::json to_json(const RunMetrics& m) {
  nlohmann::json j{{"mean_fatigue_index", m.mean_fatigue_index},
                   {"tokens_generated", m.tokens_generated},
                   {"interventions_fired", m.interventions_fired}};
  j["latency_seconds"] = m.latency_seconds ? nlohmann::json(*m.latency_seconds) : nlohmann::json();
  return j;
}

inline RunMetrics run_metrics_from_json(const nlohmann::json& j) {
  RunMetrics m;
  m.mean_fatigue_index = j.at("mean_fatigue_index").get<double>();
  m.tokens_generated = j.at("tokens_generated").get<std::size_t>();
  m.interventions_fired = j.at("interventions_fired").get<std::map<std::string, std::size_t>>();
  if (auto it = j.find("latency_seconds"); it != j.end() && !it->is_null()) m.latency_seconds = it->get<double>();
  return m;
}

inline nlohmann::json to_json(const Trace& t) {
  nlohmann::json header{{"config", to_json(t.header.config, true)},
                        {"backend", descriptor_to_json(t.header.backend)},
                        {"prompt_token_count", t.header.prompt_token_count},
                        {"prompt_slice", {{"start", t.header.slice.start}, {"end", t.header.slice.end}}},
                        {"status", std::string(to_string(t.header.status))},
                        {"error", t.header.error}};
  header["anchor_norm"] = t.header.anchor_norm ? nlohmann::json(*t.header.anchor_norm) : nlohmann::json();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) rows.push_back(to_json(r));
  nlohmann::json annotations = nlohmann::json::array();
  for (const auto& a : t.annotations) annotations.push_back({{"step", a.step}, {"command", a.command}});
  return {{"format", "fatigue-trace/1"},
          {"header", std::move(header)},
          {"rows", std::move(rows)},
          {"annotations", std::move(annotations)},
          {"metrics", to_json(t.metrics)}};
}

inline Trace trace_from_json(const nlohmann::json& j) {
  Trace t;
  try {
    const auto& h = j.at("header");
    t.header.config = run_config_from_json(h.at("config"));
    t.header.backend = descriptor_from_json(h.at("backend"));
    t.header.prompt_token_count = h.at("prompt_token_count").get<std::size_t>();
    t.header.slice = {h.at("prompt_slice").at("start").get<std::size_t>(),
                      h.at("prompt_slice").at("end").get<std::size_t>()};
    if (auto it = h.find("anchor_norm"); it != h.end() && !it->is_null()) t.header.anchor_norm = it->get<double>();
    const auto status = h.value("status", std::string("DONE"));
    t.header.status = status == "ERROR" ? RunStatus::Error
                      : status == "CANCELLED" ? RunStatus::Cancelled
                                              : RunStatus::Done;
    t.header.error = h.value("error", std::string{});
    for (const auto& r : j.at("rows")) t.rows.push_back(trace_record_from_json(r));
    if (auto it = j.find("annotations"); it != j.end()) {
      for (const auto& a : *it) t.annotations.push_back({a.at("step").get<std::size_t>(), a.at("command")});
    }
    t.metrics = run_metrics_from_json(j.at("metrics"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptTrace, e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CorruptTrace) throw;
    throw Error(ErrorKind::CorruptTrace, e.what());
  }
  return t;
}

inline std::string export_json(const Trace& trace, int indent = -1) {
  return to_json(trace).dump(indent, ' ', false, nlohmann::json::error_handler_t::replace);
}

inline Trace import_json(std::string_view text) {
  try {
    return trace_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::CorruptTrace, e.what());
  }
}

// ---- replay verification ---------------------------------------------------------

struct Mismatch {
  std::size_t step = 0;
  std::string field;
  std::string expected;
  std::string actual;
};

struct ReplayReport {
  std::vector<Mismatch> mismatches;
  std::size_t rows_checked = 0;

  [[nodiscard]] bool clean() const noexcept { return mismatches.empty(); }

  [[nodiscard]] std::string render() const {
    std::ostringstream os;
    if (clean()) {
      os << "replay clean: " << rows_checked << " rows, 0 mismatches\n";
      return os.str();
    }
    os << "replay found " << mismatches.size() << " mismatch(es) over " << rows_checked << " rows\n";
    for (const auto& m : mismatches) {
      os << "  step " << m.step << " " << m.field << ": expected " << m.expected << ", trace has " << m.actual << '\n';
    }
    return os.str();
  }
};

namespace detail {
inline bool same_real(double expected, double actual) {
  return std::abs(expected - actual) <= 1e-12 * std::max(1.0, std::abs(expected));
}
inline std::string real_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Recomputes every derived quantity (normalized signals, F_t, smoothing,
/// risk, policy decisions, temperatures, meta flags, metrics) from the raw
/// signals and the header's configuration, and lists each disagreement.
inline ReplayReport replay_verify(const Trace& trace) {
  ReplayReport report;
  const auto& cfg = trace.header.config;
  if (cfg.fatigue.normalizer.entropy_ceiling <= cfg.fatigue.normalizer.entropy_band_high) {
    throw Error(ErrorKind::CorruptTrace, "header has no resolved entropy ceiling");
  }
  PolicyConfig policy = cfg.policy;
  FatigueState fstate;
  DecodeState dstate = make_decode_state({}, std::numeric_limits<std::size_t>::max() / 2,
                                         cfg.decode.temperature_init);
  std::size_t next_annotation = 0;

  auto check_real = [&report](std::size_t step, const char* field, double expected, double actual) {
    if (!detail::same_real(expected, actual)) {
      report.mismatches.push_back({step, field, detail::real_text(expected), detail::real_text(actual)});
    }
  };

  for (std::size_t i = 0; i < trace.rows.size(); ++i) {
    const auto& row = trace.rows[i];
    const std::size_t step = i + 1;
    if (row.step != step) {
      throw Error(ErrorKind::CorruptTrace, "row " + std::to_string(i) + " has step " + std::to_string(row.step));
    }
    while (next_annotation < trace.annotations.size() && trace.annotations[next_annotation].step <= step) {
      const auto& a = trace.annotations[next_annotation++];
      try {
        const auto cmd = control_command_from_json(a.command);
        if (cmd.changes_policy()) apply_command(policy, cmd);
      } catch (const Error& e) {
        throw Error(ErrorKind::CorruptTrace, "annotation at step " + std::to_string(a.step) + ": " + e.what());
      }
    }

    RawSignals raw;
    raw.attention_to_prompt = row.attention;
    raw.attention_total = row.attention_total;
    raw.drift = row.drift;
    raw.entropy = row.entropy;
    raw.attention_available = row.attention_available;
    raw.hidden_available = row.hidden_available;

    fstate = update(raw, fstate, cfg.fatigue, trace.header.anchor_norm);
    check_real(step, "phi_attention", fstate.phi_attention, row.phi_attention);
    check_real(step, "phi_drift", fstate.phi_drift, row.phi_drift);
    check_real(step, "phi_entropy", fstate.phi_entropy, row.phi_entropy);
    check_real(step, "fatigue", fstate.index, row.fatigue);
    check_real(step, "fatigue_smoothed", fstate.index_smoothed, row.fatigue_smoothed);
    if (fstate.risk != row.risk) {
      report.mismatches.push_back({step, "risk", std::string(to_string(fstate.risk)), std::string(to_string(row.risk))});
    }
    if (dstate.next_is_meta() != row.meta) {
      report.mismatches.push_back({step, "meta", dstate.next_is_meta() ? "true" : "false", row.meta ? "true" : "false"});
    }
    check_real(step, "temperature", dstate.temperature, row.temperature);

    const Decision decision = decide(step, raw, fstate, dstate, policy);
    append_token(dstate, row.token_id);
    const auto events = execute(decision, dstate, policy, raw.entropy, {});
    const auto tag = intervention_tag(events);
    if (tag != row.intervention) report.mismatches.push_back({step, "intervention", tag, row.intervention});
    ++report.rows_checked;
  }

  const double mean = mean_fatigue_index(trace.rows);
  if (std::abs(mean - trace.metrics.mean_fatigue_index) > 1e-9) {
    report.mismatches.push_back({0, "metrics.mean_fatigue_index", detail::real_text(mean),
                                 detail::real_text(trace.metrics.mean_fatigue_index)});
  }
  if (trace.metrics.tokens_generated != trace.rows.size()) {
    report.mismatches.push_back({0, "metrics.tokens_generated", std::to_string(trace.rows.size()),
                                 std::to_string(trace.metrics.tokens_generated)});
  }
  if (count_interventions(trace.rows) != trace.metrics.interventions_fired) {
    report.mismatches.push_back({0, "metrics.interventions_fired", nlohmann::json(count_interventions(trace.rows)).dump(),
                                 nlohmann::json(trace.metrics.interventions_fired).dump()});
  }
  return report;
}

// ---- comparison ------------------------------------------------------------------

/// Two-decimal delta with explicit sign: "-0.05", "+0.02", or "0.00".
inline std::string format_delta(double delta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", std::abs(delta));
  if (std::string_view(buf) == "0.00") return "0.00";
  return std::string(delta < 0 ? "-" : "+") + buf;
}

inline std::string format_value_with_delta(double value, double delta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return std::string(buf) + " (" + format_delta(delta) + ")";
}

struct AlignedPoint {
  std::size_t step = 0;
  std::optional<double> baseline_fatigue, treated_fatigue;
  std::optional<double> baseline_smoothed, treated_smoothed;
  std::optional<double> baseline_entropy, treated_entropy;
  std::string treated_intervention;
};

struct CompareReport {
  double baseline_mean = 0.0;
  double treated_mean = 0.0;
  double delta = 0.0;
  std::optional<double> baseline_latency, treated_latency;
  std::map<std::string, std::size_t> baseline_interventions, treated_interventions;
  std::vector<std::string> warnings;
  std::vector<AlignedPoint> series;
  std::string baseline_label = "Baseline", treated_label = "Treated";

  [[nodiscard]] std::string delta_text() const { return format_value_with_delta(treated_mean, delta); }

  /// Table-style block: method, mean fatigue index (with delta), latency.
  [[nodiscard]] std::string render() const {
    auto latency = [](const std::optional<double>& l) {
      if (!l) return std::string("n/a");
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", *l);
      return std::string(buf);
    };
    auto fired = [](const std::map<std::string, std::size_t>& m) {
      std::string s;
      for (const auto& [k, v] : m) {
        if (v == 0) continue;
        s += (s.empty() ? "" : " ") + k + "=" + std::to_string(v);
      }
      return s.empty() ? std::string("-") : s;
    };
    char line[256];
    std::ostringstream os;
    std::snprintf(line, sizeof line, "%-12s %-24s %-12s %s\n", "Method", "Mean Fatigue Index", "Latency (s)",
                  "Interventions");
    os << line;
    char base[32];
    std::snprintf(base, sizeof base, "%.2f", baseline_mean);
    std::snprintf(line, sizeof line, "%-12s %-24s %-12s %s\n", baseline_label.c_str(), base,
                  latency(baseline_latency).c_str(), fired(baseline_interventions).c_str());
    os << line;
    std::snprintf(line, sizeof line, "%-12s %-24s %-12s %s\n", treated_label.c_str(), delta_text().c_str(),
                  latency(treated_latency).c_str(), fired(treated_interventions).c_str());
    os << line;
    os << "delta: " << format_delta(delta) << '\n';
    for (const auto& w : warnings) os << "warning: " << w << '\n';
    return os.str();
  }

  [[nodiscard]] nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : series) {
      points.push_back({{"step", p.step},
                        {"baseline_fatigue", opt(p.baseline_fatigue)},
                        {"treated_fatigue", opt(p.treated_fatigue)},
                        {"baseline_smoothed", opt(p.baseline_smoothed)},
                        {"treated_smoothed", opt(p.treated_smoothed)},
                        {"baseline_entropy", opt(p.baseline_entropy)},
                        {"treated_entropy", opt(p.treated_entropy)},
                        {"treated_intervention", p.treated_intervention}});
    }
    return {{"baseline_mean_fatigue_index", baseline_mean},
            {"treated_mean_fatigue_index", treated_mean},
            {"delta", delta},
            {"delta_text", delta_text()},
            {"baseline_latency_seconds", opt(baseline_latency)},
            {"treated_latency_seconds", opt(treated_latency)},
            {"baseline_interventions", baseline_interventions},
            {"treated_interventions", treated_interventions},
            {"warnings", warnings},
            {"series", points}};
  }
};

/// Baseline-versus-treated report. Traces from different prompts or seeds
/// still compare, with a warning.
inline CompareReport compare(const Trace& baseline, const Trace& treated) {
  CompareReport report;
  report.baseline_mean = mean_fatigue_index(baseline.rows);
  report.treated_mean = mean_fatigue_index(treated.rows);
  report.delta = report.treated_mean - report.baseline_mean;
  report.baseline_latency = baseline.metrics.latency_seconds;
  report.treated_latency = treated.metrics.latency_seconds;
  report.baseline_interventions = count_interventions(baseline.rows);
  report.treated_interventions = count_interventions(treated.rows);
  if (!baseline.header.config.label.empty()) report.baseline_label = baseline.header.config.label;
  if (!treated.header.config.label.empty()) report.treated_label = treated.header.config.label;
  if (report.baseline_label == report.treated_label) {
    report.baseline_label = "Baseline";
    report.treated_label = "Treated";
  }
  if (baseline.header.config.prompt != treated.header.config.prompt) {
    report.warnings.emplace_back("IncompatibleTraces: prompts differ");
  }
  if (baseline.header.config.decode.rng_seed != treated.header.config.decode.rng_seed) {
    report.warnings.emplace_back("IncompatibleTraces: seeds differ");
  }
  const std::size_t n = std::max(baseline.rows.size(), treated.rows.size());
  report.series.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    AlignedPoint p;
    p.step = i + 1;
    if (i < baseline.rows.size()) {
      p.baseline_fatigue = baseline.rows[i].fatigue;
      p.baseline_smoothed = baseline.rows[i].fatigue_smoothed;
      p.baseline_entropy = baseline.rows[i].entropy;
    }
    if (i < treated.rows.size()) {
      p.treated_fatigue = treated.rows[i].fatigue;
      p.treated_smoothed = treated.rows[i].fatigue_smoothed;
      p.treated_entropy = treated.rows[i].entropy;
      p.treated_intervention = treated.rows[i].intervention;
    }
    report.series.push_back(std::move(p));
  }
  return report;
}

}  // namespace fatigue
