#pragma once

// Probe executors: in-process probes that read the simulator, and probes run
// as child processes that push samples over HTTP.

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <sys/types.h>
#include <vector>

#include "cloudhealth/deployment.hpp"
#include "cloudhealth/metrics_pipeline.hpp"
#include "cloudhealth/microgrid_sim.hpp"

namespace cloudhealth {

using SampleSink = std::function<void(const Sample&)>;

/// Runs each binding as a periodic task on the simulator's clock. Tasks fire
/// from the simulation thread after each tick, so samples carry simulated
/// timestamps.
class SimulatedExecutor : public ProbeExecutor {
 public:
  SimulatedExecutor(sim::SimHandle& sim, SampleSink sink);

  void launch(const ProbeBinding& binding) override;
  void stop(const BindingKey& key) override;

  /// Emits samples for every task that is due at `now_ms`. Registered as a
  /// tick listener by attach(); callable directly in tests.
  void on_tick(std::int64_t now_ms);
  void attach();

  std::size_t task_count() const;

 private:
  struct Outages {
    bool down = false;
    std::int64_t down_since = 0;
    double completed_seconds = 0.0;
    int completed = 0;

    void update(bool is_down, std::int64_t now_ms);
    double mean_seconds(std::int64_t now_ms) const;
  };

  struct Task {
    ProbeBinding binding;
    std::int64_t interval_ms = 1000;
    std::optional<std::int64_t> next_due;
    Outages outages;
  };

  void measure(Task& task, std::int64_t now_ms, std::vector<Sample>& out);

  sim::SimHandle& sim_;
  SampleSink sink_;
  mutable std::mutex mu_;
  std::map<BindingKey, Task> tasks_;
};

/// Spawns the probe's command as a child process. The child gets its
/// configuration through PROBE_ID, COMPONENT_ID, TARGET, INTERVAL_SECONDS,
/// INGEST_URL and METRICS (comma-separated metric ids), and pushes samples
/// to the ingestion endpoint.
class LocalProcessExecutor : public ProbeExecutor {
 public:
  LocalProcessExecutor(std::string ingest_url, std::vector<std::string> search_dirs);
  ~LocalProcessExecutor() override;

  LocalProcessExecutor(const LocalProcessExecutor&) = delete;
  LocalProcessExecutor& operator=(const LocalProcessExecutor&) = delete;

  void launch(const ProbeBinding& binding) override;
  void stop(const BindingKey& key) override;
  void stop_all();

  std::optional<pid_t> pid_of(const BindingKey& key) const;
  void set_ingest_url(std::string url);

 private:
  std::optional<std::string> resolve(const std::string& command) const;

  std::string ingest_url_;
  std::vector<std::string> search_dirs_;
  mutable std::mutex mu_;
  std::map<BindingKey, pid_t> children_;
};

}  // namespace cloudhealth
