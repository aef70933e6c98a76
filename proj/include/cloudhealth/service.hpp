#pragma once

// The monitoring service: holds the runtime state and exposes the
// configure / deploy / operate stages both as methods and over HTTP.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cloudhealth/architecture.hpp"
#include "cloudhealth/deployment.hpp"
#include "cloudhealth/executors.hpp"
#include "cloudhealth/metrics_pipeline.hpp"
#include "cloudhealth/microgrid_sim.hpp"
#include "cloudhealth/probe_catalog.hpp"
#include "cloudhealth/quality_model.hpp"

namespace httplib {
class Server;
}

namespace cloudhealth {

enum class View { manager, technician };

std::optional<View> parse_view(std::string_view s);

struct ServiceOptions {
  bool sim_enabled = false;
  std::uint64_t sim_seed = 42;
  double sim_speedup = 1.0;
  int sim_tick_ms = 100;
  std::vector<sim::FaultSpec> fault_schedule;
  std::optional<std::string> sample_log_path;
  std::optional<std::string> static_dir;
  std::vector<std::string> probe_dirs;
  int heartbeat_timeout_seconds = kDefaultHeartbeatTimeoutSeconds;
  StoreConfig store;
  int supervise_interval_ms = 200;
};

class EmptySelection : public std::runtime_error {
 public:
  EmptySelection() : std::runtime_error("EmptySelection: select at least one goal before deploying") {}
};

class SimDisabled : public std::runtime_error {
 public:
  SimDisabled() : std::runtime_error("SimDisabled: the simulator is not enabled") {}
};

struct DeploySummary {
  ProbePlan plan;
  std::size_t started = 0;
  std::size_t stopped = 0;
  std::size_t unchanged = 0;
  DeploymentState state;
};

class Service {
 public:
  Service(QualityModel model, ArchitectureDescriptor architecture, ProbeCatalog catalog, ServiceOptions options);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Service clock: simulated time when the simulator runs, wall time otherwise.
  std::int64_t now_ms() const;

  /// Replaces the selection atomically. Throws ModelError(unknown_goal).
  GoalSelection configure_selection(const std::vector<std::string>& goal_ids);
  GoalSelection selection() const;

  /// resolve -> match -> reconcile. Throws EmptySelection, UncoveredMetrics,
  /// UnresolvableConfig.
  DeploySummary trigger_deploy();

  ScoreReport kpis() const;
  nlohmann::json kpis_json(View view) const;

  IngestCounts ingest(std::string_view ndjson_body);

  /// Throws SimDisabled, sim::SimError.
  int inject_fault(const sim::FaultSpec& fault);

  DeploymentState deployment() const { return reconciler_->snapshot(); }
  const QualityModel& model() const noexcept { return model_; }
  const ArchitectureDescriptor& architecture() const noexcept { return architecture_; }
  const SeriesStore& store() const noexcept { return *store_; }
  sim::SimHandle* simulation() const noexcept { return sim_.get(); }

  /// Registers every HTTP route on `server`.
  void mount(httplib::Server& server);

  /// Binds the HTTP listener. Port 0 picks a free port. Returns the bound
  /// port; throws std::runtime_error when binding fails.
  int bind(const std::string& host, int port);
  /// Serves on the calling thread until stop(). Requires bind().
  bool serve();
  /// bind() plus serve() on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  void accept_sample(const Sample& sample);
  void supervise_loop();
  void set_ingest_host(const std::string& host, int port);

  const QualityModel model_;
  const ArchitectureDescriptor architecture_;
  const ProbeCatalog catalog_;
  const ServiceOptions options_;

  mutable std::shared_mutex state_mu_;
  GoalSelection selection_;
  std::optional<ProbePlan> plan_;
  std::mutex deploy_mu_;

  std::unique_ptr<SeriesStore> store_;
  std::unique_ptr<SampleLog> sample_log_;
  std::unique_ptr<sim::SimHandle> sim_;
  std::unique_ptr<SimulatedExecutor> sim_executor_;
  std::unique_ptr<LocalProcessExecutor> process_executor_;
  std::unique_ptr<Reconciler> reconciler_;

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;

  std::mutex supervise_mu_;
  std::condition_variable supervise_cv_;
  bool stopping_ = false;
  std::thread supervise_thread_;
};

}  // namespace cloudhealth
