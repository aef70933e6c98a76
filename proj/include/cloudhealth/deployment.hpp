#pragma once

// Materializes probe plans: diffs the desired plan against what is running,
// starts and stops probes through executors, and supervises heartbeats.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cloudhealth/probe_catalog.hpp"

namespace cloudhealth {

enum class ProbeStatus { pending, running, failed, stopped };

std::string_view to_string(ProbeStatus s);

inline constexpr int kDefaultRetries = 3;
inline constexpr std::int64_t kRetryBackoffMs = 5000;
inline constexpr int kDefaultHeartbeatTimeoutSeconds = 30;

struct DeploymentEntry {
  ProbeStatus status = ProbeStatus::pending;
  std::int64_t started_at = 0;
  std::optional<std::int64_t> last_heartbeat;  // present iff running
  ProbeBinding binding;
  int retries_left = kDefaultRetries;
  std::optional<std::int64_t> failed_at;
  std::string last_error;
};

struct DeploymentState {
  std::map<BindingKey, DeploymentEntry> entries;

  /// Keys of entries that are not stopped.
  std::vector<BindingKey> active_keys() const;
  std::vector<BindingKey> keys_with(ProbeStatus status) const;
};

struct PlanDiff {
  std::vector<ProbeBinding> to_start;
  std::vector<BindingKey> to_stop;
  std::vector<BindingKey> unchanged;
};

class LaunchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownExecutor : public std::runtime_error {
 public:
  explicit UnknownExecutor(ExecutorKind kind)
      : std::runtime_error("UnknownExecutor: " + std::string(to_string(kind))), kind_(kind) {}
  ExecutorKind kind() const noexcept { return kind_; }

 private:
  ExecutorKind kind_;
};

class ProbeExecutor {
 public:
  virtual ~ProbeExecutor() = default;
  /// Starts the probe task. Throws LaunchError when it cannot run.
  virtual void launch(const ProbeBinding& binding) = 0;
  virtual void stop(const BindingKey& key) = 0;
};

using ExecutorRegistry = std::map<ExecutorKind, ProbeExecutor*>;

/// Set difference on binding keys against the non-stopped entries. A binding
/// whose content changed is restarted: it shows up in to_stop and to_start.
PlanDiff diff_plans(const DeploymentState& current, const ProbePlan& desired);

/// Stops what the plan no longer wants, then launches what it adds. Launch
/// failures are recorded on the entry; a missing executor for any binding to
/// start throws UnknownExecutor before anything changes.
DeploymentState apply_plan(DeploymentState state, const ProbePlan& plan, const ExecutorRegistry& executors,
                           std::int64_t now_ms, PlanDiff* diff_out = nullptr);

/// Running entries with a heartbeat older than the timeout become failed;
/// failed entries with retries left re-enter pending once the backoff passed.
DeploymentState supervise(DeploymentState state, std::int64_t now_ms, int heartbeat_timeout_seconds);

/// Single owner of the deployment state. All mutations go through here.
class Reconciler {
 public:
  explicit Reconciler(ExecutorRegistry executors, int heartbeat_timeout_seconds = kDefaultHeartbeatTimeoutSeconds);

  PlanDiff apply(const ProbePlan& plan, std::int64_t now_ms);
  /// Applies supervise() and relaunches entries that went back to pending.
  void supervise(std::int64_t now_ms);
  /// Marks the running binding that serves (metric, component) as alive.
  void heartbeat_for(const std::string& metric_id, const std::string& component_id, std::int64_t now_ms);
  DeploymentState snapshot() const;

 private:
  void launch_entry(DeploymentEntry& entry, std::int64_t now_ms);

  mutable std::mutex mu_;
  ExecutorRegistry executors_;
  int heartbeat_timeout_seconds_;
  DeploymentState state_;
};

}  // namespace cloudhealth
