// SPDX-License-Identifier: Apache-2.0
// fatigue: run, verify, compare and serve from the command line.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "fatigue/config.hpp"
#include "fatigue/engine.hpp"
#include "fatigue/service.hpp"
#include "fatigue/trace.hpp"

namespace {

using namespace fatigue;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitMismatch = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;

int exit_code_for(ErrorKind kind) { return is_backend_error(kind) ? kExitBackend : kExitConfig; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::InvalidConfig, "cannot write " + path.string());
  out << bytes;
  if (!out) throw Error(ErrorKind::InvalidConfig, "short write to " + path.string());
}

struct RunFlags {
  std::string prompt;
  std::string backend;
  std::string decode;
  std::vector<std::string> enable;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_new;
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<std::size_t> top_k;
  std::string label;
  std::string out;
  std::string format;
  bool pair = false;
  bool record_latency = false;
};

RunConfig build_config(const RunFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) merge_json(load_json_file(f.config_path), cfg);
  if (!f.prompt.empty()) cfg.prompt = f.prompt[0] == '@' ? read_file(f.prompt.substr(1)) : f.prompt;
  if (!f.backend.empty()) {
    auto sel = parse_backend_selector(f.backend);
    if (sel.kind == cfg.backend.kind && sel.kind == BackendKind::Toy) sel.toy = cfg.backend.toy;
    sel.auth = cfg.backend.auth;
    sel.timeout_ms = cfg.backend.timeout_ms;
    sel.script_max_context = cfg.backend.script_max_context;
    cfg.backend = sel;
  }
  if (!f.decode.empty()) {
    auto s = strategy_from_string(f.decode);
    if (!s) throw Error(ErrorKind::InvalidConfig, "--decode must be greedy, topk or topp, got '" + f.decode + "'");
    cfg.decode.strategy = *s;
  }
  for (const auto& name : f.enable) {
    auto kind = intervention_from_string(name);
    if (!kind) throw Error(ErrorKind::InvalidConfig, "--enable: unknown intervention '" + name + "'");
    ControlCommand on;
    on.type = CommandType::ToggleIntervention;
    on.kind = *kind;
    on.on = true;
    apply_command(cfg.policy, on);
  }
  if (f.seed) cfg.decode.rng_seed = *f.seed;
  if (f.max_new) cfg.decode.max_new = *f.max_new;
  if (f.temperature) cfg.decode.temperature_init = *f.temperature;
  if (f.top_p) cfg.decode.top_p = *f.top_p;
  if (f.top_k) cfg.decode.top_k = *f.top_k;
  if (!f.label.empty()) cfg.label = f.label;
  if (cfg.label.empty()) {
    std::string label;
    for (auto k : kAllInterventions) {
      const bool on = (k == InterventionKind::Sca && cfg.policy.sca.enabled) ||
                      (k == InterventionKind::Par && cfg.policy.par.enabled) ||
                      (k == InterventionKind::Erd && cfg.policy.erd.enabled) ||
                      (k == InterventionKind::Pause && cfg.policy.pause.enabled);
      if (on) label += (label.empty() ? "" : "+") + std::string(to_string(k));
    }
    cfg.label = label.empty() ? "Baseline" : label;
  }
  require_valid(cfg);
  return cfg;
}

std::string format_from(const RunFlags& f) {
  if (!f.format.empty()) return f.format;
  const auto ext = fs::path(f.out).extension().string();
  return ext == ".csv" ? "csv" : "json";
}

std::string serialize(Trace trace, const std::string& format, bool record_latency) {
  if (!record_latency) trace.metrics.latency_seconds.reset();
  return format == "csv" ? export_csv(trace) : export_json(trace, 1) + "\n";
}

// t.fatigue.json + "baseline" -> t.baseline.fatigue.json
fs::path tagged_path(const fs::path& out, const std::string& tag) {
  const auto name = out.filename().string();
  const auto dot = name.find('.');
  const auto stem = dot == std::string::npos ? name : name.substr(0, dot);
  const auto rest = dot == std::string::npos ? std::string() : name.substr(dot);
  return out.parent_path() / (stem + "." + tag + rest);
}

std::string summary_line(const RunResult& r) {
  const auto& m = r.trace.metrics;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s: status=%s tokens=%zu mean_fi=%.4f latency=%.3fs interventions=",
                r.trace.header.config.label.c_str(), std::string(to_string(r.status)).c_str(), m.tokens_generated,
                m.mean_fatigue_index, m.latency_seconds.value_or(0.0));
  std::string line = buf;
  bool first = true;
  for (const auto& [k, v] : m.interventions_fired) {
    line += (first ? "" : ",") + k + ":" + std::to_string(v);
    first = false;
  }
  return line;
}

int report_status(const RunResult& r) {
  if (r.status == RunStatus::Done) return kExitOk;
  std::cerr << "error: " << r.error << '\n';
  if (r.status == RunStatus::Cancelled) return kExitConfig;
  return r.error_kind ? exit_code_for(*r.error_kind) : kExitBackend;
}

int cmd_run(const RunFlags& flags) {
  const RunConfig cfg = build_config(flags);
  const auto format = format_from(flags);
  if (format != "csv" && format != "json") {
    throw Error(ErrorKind::InvalidConfig, "--format must be csv or json");
  }

  if (!flags.pair) {
    RunResult result = run(cfg);
    std::cout << summary_line(result) << '\n';
    char mean[32];
    std::snprintf(mean, sizeof mean, "%.2f", result.trace.metrics.mean_fatigue_index);
    std::printf("%-12s %-24s %-12s\n%-12s %-24s %-12.2f\n", "Method", "Mean Fatigue Index", "Latency (s)",
                cfg.label.c_str(), mean, result.trace.metrics.latency_seconds.value_or(0.0));
    if (!flags.out.empty()) write_file(flags.out, serialize(result.trace, format, flags.record_latency));
    return report_status(result);
  }

  PairResult pair = run_pair(cfg);
  std::cout << summary_line(pair.baseline) << '\n' << summary_line(pair.treated) << '\n';
  const auto report = compare(pair.baseline.trace, pair.treated.trace);
  std::cout << report.render();
  if (!flags.out.empty()) {
    write_file(tagged_path(flags.out, "baseline"), serialize(pair.baseline.trace, format, flags.record_latency));
    write_file(tagged_path(flags.out, "treated"), serialize(pair.treated.trace, format, flags.record_latency));
  }
  const int a = report_status(pair.baseline);
  return a != kExitOk ? a : report_status(pair.treated);
}

Trace load_trace(const fs::path& path) {
  if (path.extension() == ".csv") {
    throw Error(ErrorKind::CorruptTrace, path.string() + ": CSV traces are lossy; verify and compare need the JSON export");
  }
  return import_json(read_file(path));
}

int cmd_verify(const std::string& path) {
  const Trace trace = load_trace(path);
  const auto report = replay_verify(trace);
  std::cout << report.render();
  return report.clean() ? kExitOk : kExitMismatch;
}

int cmd_compare(const std::string& baseline, const std::string& treated, bool as_json) {
  const auto report = compare(load_trace(baseline), load_trace(treated));
  if (as_json) {
    std::cout << report.to_json().dump(2) << '\n';
  } else {
    std::cout << report.render();
  }
  return kExitOk;
}

std::atomic<bool> g_stop{false};

int cmd_serve(const std::string& config_path, const std::string& listen) {
  ServiceConfig cfg = config_path.empty() ? ServiceConfig{} : load_service_config(config_path);
  const auto [host, port] = listen.empty() ? listen_address_from_env() : parse_listen_address(listen);
  Service service(cfg);
  const int bound_port = port == 0 ? service.bind_any(host) : (service.bind(host, port) ? port : -1);
  if (bound_port <= 0) throw Error(ErrorKind::InvalidConfig, "cannot listen on " + host + ":" + std::to_string(port));
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  std::thread watcher([&service] {
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
  });
  std::cerr << "listening on " << host << ":" << bound_port << std::endl;
  service.serve();
  g_stop = true;
  watcher.join();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fatigue-aware decoding: run, verify, compare, serve"};
  app.require_subcommand(1);

  RunFlags flags;
  auto* run_cmd = app.add_subcommand("run", "Decode one prompt and write its trace");
  run_cmd->add_option("--prompt", flags.prompt, "Prompt text, or @file");
  run_cmd->add_option("--backend", flags.backend, "toy | scripted:<file> | remote:<url>");
  run_cmd->add_option("--decode", flags.decode, "greedy | topk | topp");
  run_cmd->add_option("--enable", flags.enable, "Interventions to enable: sca,par,erd,pause")->delimiter(',');
  run_cmd->add_option("--config", flags.config_path, "Run configuration JSON; flags override it");
  run_cmd->add_option("--seed", flags.seed, "Sampling seed");
  run_cmd->add_option("--max-new", flags.max_new, "Token budget, pause tokens included");
  run_cmd->add_option("--temperature", flags.temperature, "Initial temperature");
  run_cmd->add_option("--top-p", flags.top_p, "Nucleus mass");
  run_cmd->add_option("--top-k", flags.top_k, "Top-k support size");
  run_cmd->add_option("--label", flags.label, "Method label for reports");
  run_cmd->add_option("--out", flags.out, "Trace output path");
  run_cmd->add_option("--format", flags.format, "csv | json (default from --out extension)");
  run_cmd->add_flag("--pair", flags.pair, "Also run an all-disabled baseline and print the comparison");
  run_cmd->add_flag("--record-latency", flags.record_latency,
                    "Keep wall-clock latency in the trace file (makes it non-reproducible)");

  std::string verify_path;
  auto* verify_cmd = app.add_subcommand("verify", "Replay a JSON trace and report mismatches");
  verify_cmd->add_option("trace", verify_path, "Trace file (.json)")->required();

  std::string baseline_path, treated_path;
  bool compare_json = false;
  auto* compare_cmd = app.add_subcommand("compare", "Compare a baseline trace with a treated trace");
  compare_cmd->add_option("baseline", baseline_path, "Baseline trace (.json)")->required();
  compare_cmd->add_option("treated", treated_path, "Treated trace (.json)")->required();
  compare_cmd->add_flag("--json", compare_json, "Print the report as JSON with aligned series");

  std::string serve_config, serve_listen;
  auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP/SSE service");
  serve_cmd->add_option("--config", serve_config, "Service configuration JSON (capacity, corpus path)");
  serve_cmd->add_option("--listen", serve_listen, "host:port (overrides FATIGUE_LISTEN)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(flags);
    if (*verify_cmd) return cmd_verify(verify_path);
    if (*compare_cmd) return cmd_compare(baseline_path, treated_path, compare_json);
    if (*serve_cmd) return cmd_serve(serve_config, serve_listen);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
