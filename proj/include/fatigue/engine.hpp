// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fatigue/backend.hpp"
#include "fatigue/config.hpp"
#include "fatigue/decode_state.hpp"
#include "fatigue/error.hpp"
#include "fatigue/fatigue_index.hpp"
#include "fatigue/interventions.hpp"
#include "fatigue/policy.hpp"
#include "fatigue/rng.hpp"
#include "fatigue/sampler.hpp"
#include "fatigue/signal_probe.hpp"
#include "fatigue/trace.hpp"

namespace fatigue {

// ---- events -------------------------------------------------------------------

enum class EventType { RunStarted, Token, Intervention, RiskChanged, RunFinished, Error };

inline constexpr std::string_view to_string(EventType t) noexcept {
  switch (t) {
    case EventType::RunStarted: return "run_started";
    case EventType::Token: return "token";
    case EventType::Intervention: return "intervention";
    case EventType::RiskChanged: return "risk_changed";
    case EventType::RunFinished: return "run_finished";
    case EventType::Error: return "error";
  }
  return "";
}

/// One item of the live stream. `payload` is the type-specific body; token
/// events carry every TraceRecord field.
struct StreamEvent {
  EventType type = EventType::Token;
  std::size_t step = 0;
  nlohmann::json payload = nlohmann::json::object();

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j = payload;
    j["type"] = std::string(fatigue::to_string(type));
    j["step"] = step;
    return j;
  }
};

using EventSink = std::function<void(const StreamEvent&)>;

/// Decouples the decode loop from a slow consumer. Events are delivered in
/// order on a worker thread; when `capacity` events are waiting, push throws
/// SinkOverflow and the run fails instead of dropping or growing.
class BoundedSink {
 public:
  BoundedSink(EventSink downstream, std::size_t capacity)
      : downstream_(std::move(downstream)), capacity_(capacity), worker_([this] { drain(); }) {}

  BoundedSink(const BoundedSink&) = delete;
  BoundedSink& operator=(const BoundedSink&) = delete;

  ~BoundedSink() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }

  void push(const StreamEvent& event) {
    {
      std::lock_guard lock(mutex_);
      if (queue_.size() >= capacity_) {
        throw Error(ErrorKind::SinkOverflow, "event sink stalled with " + std::to_string(capacity_) + " queued events");
      }
      queue_.push_back(event);
    }
    cv_.notify_all();
  }

  /// Blocks until every queued event has been delivered.
  void flush() {
    std::unique_lock lock(mutex_);
    idle_cv_.wait(lock, [this] { return queue_.empty() && !delivering_; });
  }

  EventSink as_sink() {
    return [this](const StreamEvent& e) { push(e); };
  }

 private:
  void drain() {
    std::unique_lock lock(mutex_);
    for (;;) {
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) {
        if (stopping_) return;
        continue;
      }
      StreamEvent e = std::move(queue_.front());
      queue_.pop_front();
      delivering_ = true;
      lock.unlock();
      downstream_(e);
      lock.lock();
      delivering_ = false;
      if (queue_.empty()) idle_cv_.notify_all();
    }
  }

  EventSink downstream_;
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable cv_, idle_cv_;
  std::deque<StreamEvent> queue_;
  bool stopping_ = false;
  bool delivering_ = false;
  std::thread worker_;
};

// ---- mid-run control ------------------------------------------------------------

struct ControlAck {
  bool ok = true;
  std::size_t effective_step = 0;
  std::string error;
};

/// Command queue between an operator and a running decode loop. Commands are
/// applied together at the next step boundary; the ack reports that step.
class RunControl {
 public:
  /// Queues a command. Unknown knobs and out-of-range values are rejected
  /// immediately with InvalidKnob.
  std::future<ControlAck> submit(ControlCommand cmd) {
    std::lock_guard lock(mutex_);
    if (cmd.changes_policy()) {
      PolicyConfig probe = policy_snapshot_;
      apply_command(probe, cmd);  // throws InvalidKnob
    }
    std::promise<ControlAck> promise;
    auto future = promise.get_future();
    if (closed_) {
      promise.set_value({false, 0, "run is no longer active"});
      return future;
    }
    pending_.push_back({std::move(cmd), std::move(promise)});
    cv_.notify_all();
    return future;
  }

  struct Boundary {
    std::vector<Annotation> applied;
    bool cancelled = false;
  };

  /// Engine side: drains the queue before step `step`, blocking while paused.
  /// `on_pause_change` is told about PAUSED/RUNNING transitions.
  Boundary at_boundary(std::size_t step, PolicyConfig& policy,
                       const std::function<void(bool paused)>& on_pause_change = {}) {
    Boundary result;
    std::unique_lock lock(mutex_);
    policy_snapshot_ = policy;
    for (;;) {
      while (!pending_.empty()) {
        auto [cmd, promise] = std::move(pending_.front());
        pending_.pop_front();
        ControlAck ack{true, step, {}};
        switch (cmd.type) {
          case CommandType::Pause:
            if (!paused_ && on_pause_change) on_pause_change(true);
            paused_ = true;
            break;
          case CommandType::Resume:
            if (paused_ && on_pause_change) on_pause_change(false);
            paused_ = false;
            break;
          case CommandType::Cancel:
            cancelled_ = true;
            break;
          default:
            try {
              apply_command(policy, cmd);
            } catch (const Error& e) {
              ack = {false, step, e.what()};
            }
        }
        if (ack.ok) result.applied.push_back({step, to_json(cmd)});
        promise.set_value(ack);
      }
      policy_snapshot_ = policy;
      if (cancelled_) {
        result.cancelled = true;
        return result;
      }
      if (!paused_) return result;
      cv_.wait(lock, [this] { return !pending_.empty(); });
    }
  }

  /// Fails every queued command; later submissions are refused.
  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    for (auto& [cmd, promise] : pending_) promise.set_value({false, 0, "run is no longer active"});
    pending_.clear();
  }

  void set_policy_snapshot(const PolicyConfig& policy) {
    std::lock_guard lock(mutex_);
    policy_snapshot_ = policy;
  }

  [[nodiscard]] bool paused() const {
    std::lock_guard lock(mutex_);
    return paused_;
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::pair<ControlCommand, std::promise<ControlAck>>> pending_;
  PolicyConfig policy_snapshot_;
  bool paused_ = false;
  bool cancelled_ = false;
  bool closed_ = false;
};

// ---- the decode loop -------------------------------------------------------------

struct RunResult {
  Trace trace;
  RunStatus status = RunStatus::Done;
  std::string error;
  std::optional<ErrorKind> error_kind;
};

struct RunHooks {
  EventSink sink;
  RunControl* control = nullptr;
  std::function<void(bool paused)> on_pause_change;
};

inline nlohmann::json risk_snapshot_json(const TraceRecord& row) {
  return {{"risk", std::string(to_string(row.risk))},
          {"fatigue", row.fatigue},
          {"fatigue_smoothed", row.fatigue_smoothed}};
}

/// Sense/Decide/Intervene loop. Per step: backend.step, probe, fatigue
/// update, policy decision, sample with the temperature the entropy was
/// measured at, append, execute interventions (they shape the next step),
/// record and emit. Stops at max_new sampled tokens (meta included) or EOS.
///
/// Configuration problems throw before any token is produced. Backend
/// failures, sink overflow and cancellation end the run with a partial trace.
inline RunResult run(const RunConfig& cfg, Backend& backend, const RunHooks& hooks = {}) {
  require_valid(cfg);
  backend.reset();
  const BackendDescriptor desc = backend.descriptor();

  RunResult result;
  Trace& trace = result.trace;
  trace.header.backend = desc;
  trace.header.config = cfg;
  if (trace.header.config.backend.auth) trace.header.config.backend.auth = "***";

  auto& fatigue_cfg = trace.header.config.fatigue;
  if (fatigue_cfg.normalizer.entropy_ceiling == 0.0) {
    fatigue_cfg.normalizer.entropy_ceiling = std::log(static_cast<double>(desc.vocab_size));
  }
  if (auto errors = validate(fatigue_cfg.normalizer); !errors.empty()) {
    throw Error(ErrorKind::InvalidConfig, join_errors(errors) + " (vocabulary " + std::to_string(desc.vocab_size) + ")");
  }

  std::vector<TokenId> prompt = backend.encode(cfg.prompt);
  if (prompt.size() + 1 > desc.max_context) {
    throw Error(ErrorKind::PromptTooLong, "prompt has " + std::to_string(prompt.size()) +
                                              " tokens; max_context is " + std::to_string(desc.max_context));
  }
  const PromptSlice slice = cfg.prompt_slice.value_or(PromptSlice{0, prompt.size()});
  if (slice.start >= slice.end || slice.end > prompt.size()) {
    throw Error(ErrorKind::InvalidConfig, "prompt_slice must lie within the " + std::to_string(prompt.size()) +
                                              "-token prompt");
  }
  std::vector<TokenId> focus_tokens;
  if (!cfg.policy.pause.focus_text.empty()) focus_tokens = backend.encode(cfg.policy.pause.focus_text);
  trace.header.prompt_token_count = prompt.size();
  trace.header.slice = slice;

  PolicyConfig policy = cfg.policy;
  if (hooks.control) hooks.control->set_policy_snapshot(policy);
  Rng rng(cfg.decode.rng_seed);
  DecodeState dstate = make_decode_state(std::move(prompt), desc.max_context, cfg.decode.temperature_init);
  FatigueState fstate;
  std::optional<DriftAnchor> anchor;

  auto emit = [&hooks](EventType type, std::size_t step, nlohmann::json payload) {
    if (hooks.sink) hooks.sink(StreamEvent{type, step, std::move(payload)});
  };

  auto fail = [&](RunStatus status, const std::string& message, std::optional<ErrorKind> kind) {
    result.status = status;
    result.error = message;
    result.error_kind = kind;
  };

  const auto started = std::chrono::steady_clock::now();
  try {
    emit(EventType::RunStarted, 0,
         {{"config", to_json(trace.header.config, true)}, {"backend", descriptor_to_json(desc)}});

    while (dstate.step < cfg.decode.max_new) {
      const std::size_t step = dstate.step + 1;
      if (hooks.control) {
        auto boundary = hooks.control->at_boundary(step, policy, hooks.on_pause_change);
        for (auto& a : boundary.applied) trace.annotations.push_back(std::move(a));
        if (boundary.cancelled) {
          fail(RunStatus::Cancelled, "cancelled by operator", ErrorKind::RunCancelled);
          break;
        }
      }

      const StepOutput out = backend.step(dstate.context);
      validate_step_output(out, desc);
      if (step == 1 && out.hidden_last) {
        anchor = make_drift_anchor(*out.hidden_last);
        if (anchor) trace.header.anchor_norm = anchor->h0_norm;
      }

      const double temperature = dstate.temperature;
      const RawSignals raw = probe(out, slice, anchor ? &*anchor : nullptr, temperature);
      const FatigueState next_fstate = update(raw, fstate, fatigue_cfg, trace.header.anchor_norm);
      const Decision decision = decide(step, raw, next_fstate, dstate, policy);

      const TokenId token = sample(out.logits, temperature, cfg.decode, rng);
      const bool meta = dstate.next_is_meta();
      append_token(dstate, token);
      const auto events = execute(decision, dstate, policy, raw.entropy, focus_tokens);

      TraceRecord row;
      row.step = step;
      row.token_id = token;
      row.token_text = display_text(backend.decode(std::span<const TokenId>(&token, 1)));
      row.meta = meta;
      row.attention = raw.attention_to_prompt;
      row.attention_total = raw.attention_total;
      row.drift = raw.drift;
      row.entropy = raw.entropy;
      row.attention_available = raw.attention_available;
      row.hidden_available = raw.hidden_available;
      row.phi_attention = next_fstate.phi_attention;
      row.phi_drift = next_fstate.phi_drift;
      row.phi_entropy = next_fstate.phi_entropy;
      row.fatigue = next_fstate.index;
      row.fatigue_smoothed = next_fstate.index_smoothed;
      row.temperature = temperature;
      row.risk = next_fstate.risk;
      row.intervention = intervention_tag(events);
      trace.rows.push_back(row);

      emit(EventType::Token, step, to_json(row));
      for (const auto& e : events) {
        emit(EventType::Intervention, step, {{"kind", std::string(to_string(e.kind))}, {"detail", e.detail}});
      }
      if (next_fstate.risk != fstate.risk) {
        emit(EventType::RiskChanged, step,
             {{"from", std::string(to_string(fstate.risk))}, {"to", std::string(to_string(next_fstate.risk))},
              {"fatigue", row.fatigue}, {"fatigue_smoothed", row.fatigue_smoothed}});
      }
      fstate = next_fstate;
      if (desc.eos_token && token == *desc.eos_token) break;
    }
  } catch (const Error& e) {
    fail(e.kind() == ErrorKind::RunCancelled ? RunStatus::Cancelled : RunStatus::Error, e.what(), e.kind());
  }
  const auto finished = std::chrono::steady_clock::now();
  if (hooks.control) hooks.control->close();

  trace.header.status = result.status;
  trace.header.error = result.error;
  trace.metrics.mean_fatigue_index = mean_fatigue_index(trace.rows);
  trace.metrics.latency_seconds = std::chrono::duration<double>(finished - started).count();
  trace.metrics.tokens_generated = trace.rows.size();
  trace.metrics.interventions_fired = count_interventions(trace.rows);

  try {
    if (result.status == RunStatus::Error) {
      emit(EventType::Error, trace.rows.size(),
           {{"message", result.error},
            {"kind", result.error_kind ? std::string(to_string(*result.error_kind)) : std::string()},
            {"metrics", to_json(trace.metrics)}});
    } else {
      emit(EventType::RunFinished, trace.rows.size(),
           {{"status", std::string(to_string(result.status))}, {"metrics", to_json(trace.metrics)}});
    }
  } catch (const Error& e) {
    if (result.status != RunStatus::Error) fail(RunStatus::Error, e.what(), e.kind());
    trace.header.status = result.status;
    trace.header.error = result.error;
  }
  return result;
}

/// Builds the backend from the configuration's selector.
inline RunResult run(const RunConfig& cfg, const RunHooks& hooks = {});

struct PairResult {
  RunResult baseline;
  RunResult treated;
};

/// Runs the configuration twice with identical seeds: once with every
/// intervention disabled, once as configured. Rows align by step.
inline PairResult run_pair(const RunConfig& cfg, Backend& backend) {
  RunConfig base = cfg;
  base.policy = cfg.policy.all_disabled();
  base.label = "Baseline";
  RunConfig treated = cfg;
  if (treated.label.empty() || treated.label == "Baseline") treated.label = "Treated";
  PairResult pair;
  pair.baseline = run(base, backend);
  pair.treated = run(treated, backend);
  return pair;
}

}  // namespace fatigue

#include "fatigue/backend_factory.hpp"

namespace fatigue {

inline RunResult run(const RunConfig& cfg, const RunHooks& hooks) {
  require_valid(cfg);
  auto backend = make_backend(cfg.backend);
  return run(cfg, *backend, hooks);
}

inline PairResult run_pair(const RunConfig& cfg) {
  require_valid(cfg);
  auto backend = make_backend(cfg.backend);
  return run_pair(cfg, *backend);
}

}  // namespace fatigue
