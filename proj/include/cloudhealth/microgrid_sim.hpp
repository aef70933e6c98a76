#pragma once

// Discrete-tick simulation of a district micro-grid (smart meters, an edge
// aggregator, application services) with seeded noise and fault injection.
// Gives the monitoring loop a deterministic target to observe.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cloudhealth/architecture.hpp"

namespace cloudhealth::sim {

enum class Signal { up, request_latency_ms, served_requests_per_s, offered_requests_per_s, energy_reading_kwh };

std::string_view to_string(Signal s);
std::optional<Signal> parse_signal(std::string_view s);

enum class FaultKind { downtime, latency_spike, drop_rate };

std::string_view to_string(FaultKind k);
std::optional<FaultKind> parse_fault_kind(std::string_view s);

struct SimComponent {
  std::string id;
  Layer layer = Layer::application;
};

/// The roster mirrored by arch/microgrid.json.
std::vector<SimComponent> default_microgrid();

/// Components of an architecture reachable through the simulator
/// (endpoint protocol "sim").
std::vector<SimComponent> components_from(const ArchitectureDescriptor& arch);

struct SimConfig {
  std::uint64_t seed = 42;
  int tick_ms = 100;
  double speedup = 1.0;
  std::vector<SimComponent> components = default_microgrid();
  // Wall-clock epoch that tick 0 maps to.
  std::int64_t epoch_ms = 0;
};

struct FaultSpec {
  FaultKind kind = FaultKind::downtime;
  std::string component_id;
  std::int64_t start_tick = 0;
  std::int64_t duration_ticks = 1;
  double magnitude = 1.0;
};

std::vector<FaultSpec> load_fault_schedule(std::string_view text);

enum class SimErrorKind { invalid_config, unknown_component, unsupported_signal, invalid_fault };

std::string_view to_string(SimErrorKind k);

class SimError : public std::runtime_error {
 public:
  SimError(SimErrorKind kind, const std::string& message);
  SimErrorKind kind() const noexcept { return kind_; }

 private:
  SimErrorKind kind_;
};

inline constexpr double kEdgeLatencyMs = 20.0;
inline constexpr double kApplicationLatencyMs = 50.0;
inline constexpr double kRequestRate = 10.0;
inline constexpr double kMeterLoadKw = 0.5;
inline constexpr double kNoise = 0.10;

bool supports(Layer layer, Signal signal);

/// Single-threaded deterministic core. The observable state at every tick is
/// a pure function of (config, fault schedule).
class Simulation {
 public:
  explicit Simulation(SimConfig config);

  const SimConfig& config() const noexcept { return config_; }
  std::int64_t tick() const noexcept { return tick_; }
  std::int64_t sim_time_ms() const noexcept { return config_.epoch_ms + tick_ * config_.tick_ms; }
  std::vector<std::string> component_ids() const;
  bool has_component(const std::string& id) const { return index_.contains(id); }
  std::optional<Layer> layer_of(const std::string& id) const;

  void step();
  double observe(const std::string& component_id, Signal signal) const;
  int inject_fault(const FaultSpec& fault);

 private:
  struct ComponentState {
    SimComponent spec;
    std::mt19937_64 rng;
    double latency_factor = 1.0;
    double rate_factor = 1.0;
    double energy_kwh = 0.0;
  };

  void draw(ComponentState& c);
  bool down(const std::string& id) const;
  double spike_factor(const std::string& id) const;
  double drop_probability(const std::string& id) const;
  const ComponentState& state_of(const std::string& id) const;

  SimConfig config_;
  std::int64_t tick_ = 0;
  std::vector<ComponentState> components_;
  std::map<std::string, std::size_t> index_;
  std::vector<FaultSpec> faults_;
};

/// Runs a Simulation on its own thread, advancing ticks at the configured
/// speedup. Observation and fault injection are serialized with ticking.
class SimHandle {
 public:
  using TickListener = std::function<void(std::int64_t tick, std::int64_t sim_time_ms)>;

  explicit SimHandle(SimConfig config);
  ~SimHandle();

  SimHandle(const SimHandle&) = delete;
  SimHandle& operator=(const SimHandle&) = delete;

  void start();
  void stop();

  /// Called on the simulation thread after every tick.
  void add_tick_listener(TickListener listener);

  std::int64_t tick() const;
  std::int64_t sim_time_ms() const;
  const SimConfig& config() const noexcept { return config_; }
  bool has_component(const std::string& id) const;
  std::optional<Layer> layer_of(const std::string& id) const;
  double observe(const std::string& component_id, Signal signal) const;
  /// `start_tick` < 0 means "the next tick".
  int inject_fault(FaultSpec fault);

 private:
  void run();

  SimConfig config_;
  mutable std::mutex mu_;
  Simulation sim_;
  std::vector<TickListener> listeners_;

  std::mutex wake_mu_;
  std::condition_variable wake_;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
};

/// Validates the config and starts ticking. Throws SimError(invalid_config).
std::unique_ptr<SimHandle> start_sim(const SimConfig& config);

}  // namespace cloudhealth::sim
