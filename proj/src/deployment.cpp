#include "cloudhealth/deployment.hpp"

#include <algorithm>
#include <set>

namespace cloudhealth {

std::string_view to_string(ProbeStatus s) {
  switch (s) {
    case ProbeStatus::pending: return "pending";
    case ProbeStatus::running: return "running";
    case ProbeStatus::failed: return "failed";
    case ProbeStatus::stopped: return "stopped";
  }
  return "?";
}

std::vector<BindingKey> DeploymentState::active_keys() const {
  std::vector<BindingKey> out;
  for (const auto& [key, e] : entries) {
    if (e.status != ProbeStatus::stopped) out.push_back(key);
  }
  return out;
}

std::vector<BindingKey> DeploymentState::keys_with(ProbeStatus status) const {
  std::vector<BindingKey> out;
  for (const auto& [key, e] : entries) {
    if (e.status == status) out.push_back(key);
  }
  return out;
}

PlanDiff diff_plans(const DeploymentState& current, const ProbePlan& desired) {
  PlanDiff diff;
  std::set<BindingKey> wanted;
  for (const auto& b : desired.bindings) {
    wanted.insert(b.key());
    auto it = current.entries.find(b.key());
    if (it == current.entries.end() || it->second.status == ProbeStatus::stopped) {
      diff.to_start.push_back(b);
    } else if (it->second.binding == b) {
      diff.unchanged.push_back(b.key());
    } else {
      diff.to_stop.push_back(b.key());
      diff.to_start.push_back(b);
    }
  }
  for (const auto& [key, e] : current.entries) {
    if (e.status != ProbeStatus::stopped && !wanted.contains(key)) diff.to_stop.push_back(key);
  }
  std::sort(diff.to_stop.begin(), diff.to_stop.end());
  return diff;
}

namespace {

void launch_into(DeploymentEntry& entry, const ExecutorRegistry& executors, std::int64_t now_ms) {
  entry.status = ProbeStatus::pending;
  entry.last_heartbeat.reset();
  try {
    executors.at(entry.binding.executor)->launch(entry.binding);
    entry.status = ProbeStatus::running;
    entry.started_at = now_ms;
    entry.last_heartbeat = now_ms;
    entry.failed_at.reset();
    entry.last_error.clear();
  } catch (const std::exception& e) {
    entry.status = ProbeStatus::failed;
    entry.failed_at = now_ms;
    entry.last_error = e.what();
  }
}

void stop_entry(DeploymentEntry& entry, const ExecutorRegistry& executors) {
  if (auto it = executors.find(entry.binding.executor); it != executors.end()) {
    it->second->stop(entry.binding.key());
  }
  entry.status = ProbeStatus::stopped;
  entry.last_heartbeat.reset();
}

}  // namespace

DeploymentState apply_plan(DeploymentState state, const ProbePlan& plan, const ExecutorRegistry& executors,
                           std::int64_t now_ms, PlanDiff* diff_out) {
  auto diff = diff_plans(state, plan);
  for (const auto& b : diff.to_start) {
    if (!executors.contains(b.executor) || executors.at(b.executor) == nullptr) throw UnknownExecutor(b.executor);
  }

  for (const auto& key : diff.to_stop) stop_entry(state.entries.at(key), executors);
  for (const auto& b : diff.to_start) {
    DeploymentEntry entry;
    entry.binding = b;
    entry.started_at = now_ms;
    launch_into(entry, executors, now_ms);
    state.entries[b.key()] = std::move(entry);
  }
  if (diff_out) *diff_out = std::move(diff);
  return state;
}

DeploymentState supervise(DeploymentState state, std::int64_t now_ms, int heartbeat_timeout_seconds) {
  const std::int64_t timeout_ms = static_cast<std::int64_t>(std::max(heartbeat_timeout_seconds, 1)) * 1000;
  for (auto& [_, e] : state.entries) {
    if (e.status == ProbeStatus::running) {
      const auto hb = e.last_heartbeat.value_or(e.started_at);
      if (now_ms - hb > timeout_ms) {
        e.status = ProbeStatus::failed;
        e.failed_at = now_ms;
        e.last_heartbeat.reset();
        e.last_error = "heartbeat timeout";
      }
    } else if (e.status == ProbeStatus::failed && e.retries_left > 0 &&
               now_ms - e.failed_at.value_or(now_ms) >= kRetryBackoffMs) {
      e.status = ProbeStatus::pending;
      --e.retries_left;
    }
  }
  return state;
}

Reconciler::Reconciler(ExecutorRegistry executors, int heartbeat_timeout_seconds)
    : executors_(std::move(executors)), heartbeat_timeout_seconds_(heartbeat_timeout_seconds) {}

PlanDiff Reconciler::apply(const ProbePlan& plan, std::int64_t now_ms) {
  std::lock_guard lock(mu_);
  PlanDiff diff;
  state_ = apply_plan(std::move(state_), plan, executors_, now_ms, &diff);
  return diff;
}

void Reconciler::launch_entry(DeploymentEntry& entry, std::int64_t now_ms) {
  if (!executors_.contains(entry.binding.executor)) {
    entry.status = ProbeStatus::failed;
    entry.failed_at = now_ms;
    entry.last_error = "no executor registered";
    return;
  }
  launch_into(entry, executors_, now_ms);
}

void Reconciler::supervise(std::int64_t now_ms) {
  std::lock_guard lock(mu_);
  const auto before = state_;
  state_ = cloudhealth::supervise(std::move(state_), now_ms, heartbeat_timeout_seconds_);
  for (auto& [key, e] : state_.entries) {
    const auto prev = before.entries.at(key).status;
    if (prev == ProbeStatus::running && e.status == ProbeStatus::failed) {
      // The task may still be alive but silent; tear it down before any retry.
      if (auto it = executors_.find(e.binding.executor); it != executors_.end()) it->second->stop(key);
    }
    if (e.status == ProbeStatus::pending) launch_entry(e, now_ms);
  }
}

void Reconciler::heartbeat_for(const std::string& metric_id, const std::string& component_id,
                               std::int64_t now_ms) {
  std::lock_guard lock(mu_);
  for (auto& [key, e] : state_.entries) {
    if (key.second != component_id || e.status != ProbeStatus::running) continue;
    if (!e.binding.metrics_served.contains(metric_id)) continue;
    e.last_heartbeat = std::max(e.last_heartbeat.value_or(now_ms), now_ms);
  }
}

DeploymentState Reconciler::snapshot() const {
  std::lock_guard lock(mu_);
  return state_;
}

}  // namespace cloudhealth
