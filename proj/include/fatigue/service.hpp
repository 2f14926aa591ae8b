// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fatigue/config.hpp"
#include "fatigue/engine.hpp"
#include "fatigue/error.hpp"
#include "fatigue/trace.hpp"

namespace fatigue {

enum class RunState { Pending, Running, Paused, Done, Error, Cancelled };

inline constexpr std::string_view to_string(RunState s) noexcept {
  switch (s) {
    case RunState::Pending: return "PENDING";
    case RunState::Running: return "RUNNING";
    case RunState::Paused: return "PAUSED";
    case RunState::Done: return "DONE";
    case RunState::Error: return "ERROR";
    case RunState::Cancelled: return "CANCELLED";
  }
  return "";
}

inline constexpr bool is_terminal(RunState s) noexcept {
  return s == RunState::Done || s == RunState::Error || s == RunState::Cancelled;
}

struct ServiceConfig {
  std::size_t max_active_runs = 16;
  std::filesystem::path corpus_path = "data/prompts.jsonl";
  /// Events buffered between a run and its log before the run fails.
  std::size_t event_queue_capacity = 65536;
};

inline ServiceConfig load_service_config(const std::filesystem::path& path) {
  const auto j = load_json_file(path);
  ServiceConfig c;
  try {
    detail::read(j, "max_active_runs", c.max_active_runs);
    detail::read(j, "event_queue_capacity", c.event_queue_capacity);
    if (auto it = j.find("corpus_path"); it != j.end()) {
      std::filesystem::path p = it->get<std::string>();
      c.corpus_path = p.is_relative() ? path.parent_path() / p : p;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
  if (c.max_active_runs == 0) throw Error(ErrorKind::InvalidConfig, "max_active_runs must be >= 1");
  if (c.event_queue_capacity == 0) throw Error(ErrorKind::InvalidConfig, "event_queue_capacity must be >= 1");
  return c;
}

inline std::pair<std::string, int> parse_listen_address(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::InvalidConfig, "listen address must be host:port, got " + text);
  try {
    const int port = std::stoi(text.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    return {text.substr(0, colon), port};
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, "listen address has a bad port: " + text);
  }
}

/// "host:port" from FATIGUE_LISTEN, defaulting to 127.0.0.1:8765.
inline std::pair<std::string, int> listen_address_from_env() {
  const char* env = std::getenv("FATIGUE_LISTEN");
  return parse_listen_address(env && *env ? env : "127.0.0.1:8765");
}

struct CorpusEntry {
  std::string id;
  std::string question;
  std::optional<std::string> answer;
};

/// Reads a JSON-lines corpus: {"question": ..., "answer"?: ..., "id"?: ...} per line.
inline std::vector<CorpusEntry> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::CorpusMissing, "prompt corpus not found at " + path.string());
  std::vector<CorpusEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      CorpusEntry e;
      e.question = j.at("question").get<std::string>();
      if (auto it = j.find("answer"); it != j.end() && it->is_string()) e.answer = it->get<std::string>();
      if (auto it = j.find("id"); it != j.end()) {
        e.id = it->is_string() ? it->get<std::string>() : it->dump();
      } else {
        e.id = std::to_string(entries.size());
      }
      entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::InvalidConfig, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return entries;
}

/// One hosted run: its event log (replayed to late subscribers), control
/// queue and final trace.
class RunEntry {
 public:
  RunEntry(std::string id, RunConfig cfg) : id_(std::move(id)), cfg_(std::move(cfg)) {
    created_at_ = std::chrono::system_clock::now();
  }

  [[nodiscard]] const std::string& id() const noexcept { return id_; }
  [[nodiscard]] const RunConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] RunControl& control() noexcept { return control_; }

  [[nodiscard]] RunState state() const {
    std::lock_guard lock(mutex_);
    return state_;
  }

  [[nodiscard]] nlohmann::json handle_json() const {
    std::lock_guard lock(mutex_);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(created_at_.time_since_epoch()).count();
    return {{"run_id", id_}, {"state", std::string(to_string(state_))}, {"created_at_ms", ms}};
  }

  void set_state(RunState s) {
    {
      std::lock_guard lock(mutex_);
      if (is_terminal(state_)) return;
      state_ = s;
    }
    cv_.notify_all();
  }

  void append(const StreamEvent& e) {
    {
      std::lock_guard lock(mutex_);
      if (e.type == EventType::Token) rows_.push_back(trace_record_from_json(e.payload));
      log_.push_back(e.to_json().dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
    }
    cv_.notify_all();
  }

  void finish(RunState final_state, std::optional<Trace> trace) {
    {
      std::lock_guard lock(mutex_);
      state_ = final_state;
      trace_ = std::move(trace);
      finished_ = true;
    }
    cv_.notify_all();
  }

  /// Waits up to `timeout` for events past `offset`. Returns the new events
  /// and whether the log is complete.
  std::pair<std::vector<std::string>, bool> events_after(std::size_t offset, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return log_.size() > offset || finished_; });
    std::vector<std::string> out;
    for (std::size_t i = offset; i < log_.size(); ++i) out.push_back(log_[i]);
    return {std::move(out), finished_};
  }

  [[nodiscard]] std::vector<std::string> event_log() const {
    std::lock_guard lock(mutex_);
    return log_;
  }

  /// Final trace when finished, otherwise the rows streamed so far.
  [[nodiscard]] Trace snapshot_trace() const {
    std::lock_guard lock(mutex_);
    if (trace_) return *trace_;
    Trace t;
    t.header.config = cfg_;
    if (t.header.config.backend.auth) t.header.config.backend.auth = "***";
    t.rows = rows_;
    t.metrics.mean_fatigue_index = mean_fatigue_index(rows_);
    t.metrics.tokens_generated = rows_.size();
    t.metrics.interventions_fired = count_interventions(rows_);
    return t;
  }

  [[nodiscard]] nlohmann::json risk_json() const {
    std::lock_guard lock(mutex_);
    nlohmann::json j{{"run_id", id_}, {"state", std::string(to_string(state_))}};
    if (rows_.empty()) {
      j["risk"] = "SAFE";
      j["fatigue"] = 0.0;
      j["fatigue_smoothed"] = 0.0;
      j["step"] = 0;
    } else {
      const auto& r = rows_.back();
      j["risk"] = std::string(to_string(r.risk));
      j["fatigue"] = r.fatigue;
      j["fatigue_smoothed"] = r.fatigue_smoothed;
      j["step"] = r.step;
    }
    return j;
  }

  std::thread worker;

 private:
  std::string id_;
  RunConfig cfg_;
  std::chrono::system_clock::time_point created_at_;
  RunControl control_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  RunState state_ = RunState::Pending;
  std::vector<std::string> log_;
  std::vector<TraceRecord> rows_;
  std::optional<Trace> trace_;
  bool finished_ = false;
};

/// Run registry plus the HTTP/SSE front end.
///
///   POST /runs                       RunConfig JSON -> handle
///   GET  /runs/{id}                  handle
///   GET  /runs/{id}/events           text/event-stream, past events then live tail
///   POST /runs/{id}/control          command JSON -> {ok, effective_step}
///   GET  /runs/{id}/export?format=   csv | json
///   GET  /runs/{id}/risk             {risk, fatigue, fatigue_smoothed, step}
///   GET  /prompts                    corpus entries with ids
///   GET  /backends                   available backend kinds
class Service {
 public:
  explicit Service(ServiceConfig cfg = {}) : cfg_(std::move(cfg)) { install_routes(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ~Service() {
    stop();
    shutdown_runs();
  }

  std::shared_ptr<RunEntry> start_run(const RunConfig& cfg) {
    require_valid(cfg);
    std::unique_lock lock(registry_mutex_);
    std::size_t active = 0;
    for (const auto& [id, entry] : runs_) {
      if (!is_terminal(entry->state())) ++active;
    }
    if (active >= cfg_.max_active_runs) {
      throw Error(ErrorKind::CapacityExceeded,
                  "already running " + std::to_string(active) + " runs (limit " + std::to_string(cfg_.max_active_runs) + ")");
    }
    lock.unlock();
    // Backend construction and the prompt-length check run here so that a bad
    // request fails the POST instead of producing a failed run.
    std::shared_ptr<Backend> backend = make_backend(cfg.backend);
    const auto prompt_tokens = backend->encode(cfg.prompt).size();
    if (prompt_tokens + 1 > backend->descriptor().max_context) {
      throw Error(ErrorKind::PromptTooLong, "prompt has " + std::to_string(prompt_tokens) +
                                                " tokens; max_context is " +
                                                std::to_string(backend->descriptor().max_context));
    }
    lock.lock();
    active = 0;
    for (const auto& [id, entry] : runs_) {
      if (!is_terminal(entry->state())) ++active;
    }
    if (active >= cfg_.max_active_runs) {
      throw Error(ErrorKind::CapacityExceeded,
                  "already running " + std::to_string(active) + " runs (limit " + std::to_string(cfg_.max_active_runs) + ")");
    }
    auto entry = std::make_shared<RunEntry>(new_run_id(), cfg);
    runs_.emplace(entry->id(), entry);
    lock.unlock();
    entry->worker = std::thread([this, entry, backend] { execute(*entry, *backend); });
    return entry;
  }

  std::shared_ptr<RunEntry> find(const std::string& id) const {
    std::shared_lock lock(registry_mutex_);
    auto it = runs_.find(id);
    if (it == runs_.end()) throw Error(ErrorKind::UnknownRun, "no run with id '" + id + "'");
    return it->second;
  }

  [[nodiscard]] std::vector<CorpusEntry> list_prompts() const { return load_corpus(cfg_.corpus_path); }

  static nlohmann::json backends_json() {
    const ToyTransformer toy(ToyConfig{});
    return nlohmann::json::array(
        {{{"kind", "toy"}, {"selector", "toy"}, {"descriptor", descriptor_to_json(toy.descriptor())}},
         {{"kind", "scripted"}, {"selector", "scripted:<file>"}, {"descriptor", nullptr}},
         {{"kind", "remote"}, {"selector", "remote:<url>"}, {"descriptor", nullptr}}});
  }

  httplib::Server& http() noexcept { return server_; }

  /// Binds to an ephemeral port on `host`; returns the port.
  int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }

  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }

  /// Serves until stop(). Call after bind/bind_any.
  bool serve() { return server_.listen_after_bind(); }

  void stop() {
    if (server_.is_running()) server_.stop();
  }

  /// Cancels live runs and joins their threads.
  void shutdown_runs() {
    std::vector<std::shared_ptr<RunEntry>> entries;
    {
      std::unique_lock lock(registry_mutex_);
      for (auto& [id, e] : runs_) entries.push_back(e);
    }
    for (auto& e : entries) {
      if (!is_terminal(e->state())) {
        try {
          ControlCommand cancel;
          cancel.type = CommandType::Cancel;
          (void)e->control().submit(cancel);
        } catch (const Error&) {
        }
      }
    }
    for (auto& e : entries) {
      if (e->worker.joinable()) e->worker.join();
    }
  }

 private:
  void execute(RunEntry& entry, Backend& backend) {
    RunHooks hooks;
    hooks.control = &entry.control();
    hooks.on_pause_change = [&entry](bool paused) { entry.set_state(paused ? RunState::Paused : RunState::Running); };
    std::optional<BoundedSink> buffer;
    try {
      buffer.emplace([&entry](const StreamEvent& e) { entry.append(e); }, cfg_.event_queue_capacity);
      hooks.sink = buffer->as_sink();
      entry.set_state(RunState::Running);
      RunResult result = run(entry.config(), backend, hooks);
      buffer->flush();
      const RunState final_state = result.status == RunStatus::Done        ? RunState::Done
                                   : result.status == RunStatus::Cancelled ? RunState::Cancelled
                                                                           : RunState::Error;
      entry.finish(final_state, std::move(result.trace));
    } catch (const Error& e) {
      if (buffer) buffer->flush();
      entry.control().close();
      entry.append(StreamEvent{EventType::Error, 0, {{"message", e.what()}, {"kind", std::string(to_string(e.kind()))}}});
      entry.finish(RunState::Error, std::nullopt);
    } catch (const std::exception& e) {
      if (buffer) buffer->flush();
      entry.control().close();
      entry.append(StreamEvent{EventType::Error, 0, {{"message", e.what()}, {"kind", "InternalError"}}});
      entry.finish(RunState::Error, std::nullopt);
    }
  }

  std::string new_run_id() {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string id = "run-";
    for (int i = 0; i < 12; ++i) id += kHex[id_rng_() & 15U];
    return id;
  }

  static int http_status(ErrorKind k) {
    switch (k) {
      case ErrorKind::UnknownRun:
      case ErrorKind::CorpusMissing: return 404;
      case ErrorKind::CapacityExceeded: return 429;
      case ErrorKind::InvalidConfig:
      case ErrorKind::InvalidKnob:
      case ErrorKind::PromptTooLong: return 400;
      case ErrorKind::BackendUnavailable:
      case ErrorKind::ProtocolError:
      case ErrorKind::TokenizationError: return 502;
      default: return 500;
    }
  }

  static void send_error(httplib::Response& res, const Error& e) {
    res.status = http_status(e.kind());
    res.set_content(nlohmann::json{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}}.dump(),
                    "application/json");
  }

  static void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace), "application/json");
  }

  template <typename Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const nlohmann::json::exception& e) {
      send_error(res, Error(ErrorKind::InvalidConfig, e.what()));
    }
  }

  void install_routes() {
    server_.Post("/runs", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = nlohmann::json::parse(req.body);
        auto entry = start_run(run_config_from_json(body));
        send_json(res, entry->handle_json(), 201);
      });
    });

    server_.Get("/runs", [this](const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(registry_mutex_);
      nlohmann::json list = nlohmann::json::array();
      for (const auto& [id, e] : runs_) list.push_back(e->handle_json());
      send_json(res, list);
    });

    server_.Get(R"(/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, find(req.matches[1])->handle_json()); });
    });

    server_.Get(R"(/runs/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto entry = find(req.matches[1]);
        auto offset = std::make_shared<std::size_t>(0);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [entry, offset](std::size_t, httplib::DataSink& sink) {
          auto [events, finished] = entry->events_after(*offset, std::chrono::milliseconds(200));
          for (const auto& e : events) {
            const std::string frame = "id: " + std::to_string(*offset) + "\ndata: " + e + "\n\n";
            if (!sink.write(frame.data(), frame.size())) return false;
            ++*offset;
          }
          if (finished && events.empty()) {
            sink.done();
          } else if (!sink.is_writable()) {
            return false;
          }
          return true;
        });
      });
    });

    server_.Post(R"(/runs/([^/]+)/control)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto entry = find(req.matches[1]);
        const auto cmd = control_command_from_json(nlohmann::json::parse(req.body));
        if (is_terminal(entry->state())) {
          send_json(res, {{"ok", false}, {"error", "run is " + std::string(to_string(entry->state()))}}, 409);
          return;
        }
        auto future = entry->control().submit(cmd);
        if (future.wait_for(std::chrono::seconds(30)) != std::future_status::ready) {
          send_json(res, {{"ok", false}, {"error", "timed out waiting for a step boundary"}}, 504);
          return;
        }
        const auto ack = future.get();
        nlohmann::json body{{"ok", ack.ok}, {"command", to_json(cmd)}, {"state", std::string(to_string(entry->state()))}};
        if (ack.ok) {
          body["effective_step"] = ack.effective_step;
        } else {
          body["error"] = ack.error;
        }
        send_json(res, body, ack.ok ? 200 : 409);
      });
    });

    server_.Get(R"(/runs/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto entry = find(req.matches[1]);
        const auto format = req.has_param("format") ? req.get_param_value("format") : std::string("json");
        const auto trace = entry->snapshot_trace();
        if (format == "csv") {
          res.set_content(export_csv(trace), "text/csv");
        } else if (format == "json") {
          res.set_content(export_json(trace), "application/json");
        } else {
          throw Error(ErrorKind::InvalidConfig, "format must be csv or json");
        }
      });
    });

    server_.Get(R"(/runs/([^/]+)/risk)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, find(req.matches[1])->risk_json()); });
    });

    server_.Get("/prompts", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& e : list_prompts()) {
          nlohmann::json item{{"id", e.id}, {"question", e.question}};
          item["answer"] = e.answer ? nlohmann::json(*e.answer) : nlohmann::json();
          list.push_back(std::move(item));
        }
        send_json(res, list);
      });
    });

    server_.Get("/backends", [](const httplib::Request&, httplib::Response& res) { send_json(res, backends_json()); });
  }

  ServiceConfig cfg_;
  httplib::Server server_;
  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<RunEntry>> runs_;
  std::mt19937_64 id_rng_{std::random_device{}()};
};

}  // namespace fatigue
