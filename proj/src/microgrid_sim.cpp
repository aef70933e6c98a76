#include "cloudhealth/microgrid_sim.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>

#include "json_util.hpp"

namespace cloudhealth::sim {

using nlohmann::json;

std::string_view to_string(Signal s) {
  switch (s) {
    case Signal::up: return "up";
    case Signal::request_latency_ms: return "request_latency_ms";
    case Signal::served_requests_per_s: return "served_requests_per_s";
    case Signal::offered_requests_per_s: return "offered_requests_per_s";
    case Signal::energy_reading_kwh: return "energy_reading_kwh";
  }
  return "?";
}

std::optional<Signal> parse_signal(std::string_view s) {
  for (auto sig : {Signal::up, Signal::request_latency_ms, Signal::served_requests_per_s,
                   Signal::offered_requests_per_s, Signal::energy_reading_kwh}) {
    if (to_string(sig) == s) return sig;
  }
  return std::nullopt;
}

std::string_view to_string(FaultKind k) {
  switch (k) {
    case FaultKind::downtime: return "downtime";
    case FaultKind::latency_spike: return "latency_spike";
    case FaultKind::drop_rate: return "drop_rate";
  }
  return "?";
}

std::optional<FaultKind> parse_fault_kind(std::string_view s) {
  for (auto k : {FaultKind::downtime, FaultKind::latency_spike, FaultKind::drop_rate}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::string_view to_string(SimErrorKind k) {
  switch (k) {
    case SimErrorKind::invalid_config: return "InvalidConfig";
    case SimErrorKind::unknown_component: return "UnknownComponent";
    case SimErrorKind::unsupported_signal: return "UnsupportedSignal";
    case SimErrorKind::invalid_fault: return "InvalidFault";
  }
  return "?";
}

SimError::SimError(SimErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

std::vector<SimComponent> default_microgrid() {
  return {
      {"meter_1", Layer::device},
      {"meter_2", Layer::device},
      {"meter_3", Layer::device},
      {"meter_aggregator", Layer::edge},
      {"energy_optimizer", Layer::application},
      {"actuator_gateway", Layer::application},
  };
}

std::vector<SimComponent> components_from(const ArchitectureDescriptor& arch) {
  std::vector<SimComponent> out;
  for (const auto& c : arch.components) {
    if (c.endpoint && c.endpoint->protocol == Protocol::sim) out.push_back({c.id, c.layer});
  }
  return out;
}

std::vector<FaultSpec> load_fault_schedule(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SimError(SimErrorKind::invalid_fault, std::string("fault schedule: ") + e.what());
  }
  auto fail = [](const std::string& m) { throw SimError(SimErrorKind::invalid_fault, m); };
  if (!doc.is_array()) fail("fault schedule must be an array");
  std::vector<FaultSpec> out;
  for (const auto& fj : doc) {
    if (!fj.is_object()) fail("fault entries must be objects");
    FaultSpec f;
    auto kind = detail::require_string(fj, "kind", fail);
    auto k = parse_fault_kind(kind);
    if (!k) fail("unknown fault kind '" + kind + "'");
    f.kind = *k;
    f.component_id = detail::require_string(fj, "component_id", fail);
    f.start_tick = static_cast<std::int64_t>(detail::require_number(fj, "start_tick", fail));
    f.duration_ticks = static_cast<std::int64_t>(detail::require_number(fj, "duration_ticks", fail));
    if (fj.contains("magnitude")) f.magnitude = detail::require_number(fj, "magnitude", fail);
    out.push_back(f);
  }
  return out;
}

bool supports(Layer layer, Signal signal) {
  switch (signal) {
    case Signal::up: return true;
    case Signal::energy_reading_kwh: return layer == Layer::device;
    default: return layer != Layer::device;
  }
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double noise_factor(std::mt19937_64& rng) { return 1.0 + kNoise * (2.0 * unit(rng) - 1.0); }

}  // namespace

Simulation::Simulation(SimConfig config) : config_(std::move(config)) {
  if (config_.tick_ms < 1) throw SimError(SimErrorKind::invalid_config, "tick_ms must be >= 1");
  if (!(config_.speedup > 0.0)) throw SimError(SimErrorKind::invalid_config, "speedup must be positive");
  for (std::size_t i = 0; i < config_.components.size(); ++i) {
    const auto& spec = config_.components[i];
    if (!index_.emplace(spec.id, i).second) {
      throw SimError(SimErrorKind::invalid_config, "duplicate component " + spec.id);
    }
    // Per-component streams keep one component's draws independent of the rest.
    ComponentState st{spec, std::mt19937_64(splitmix64(config_.seed ^ splitmix64(i + 1)))};
    components_.push_back(std::move(st));
  }
  for (auto& c : components_) draw(c);
}

std::vector<std::string> Simulation::component_ids() const {
  std::vector<std::string> out;
  for (const auto& c : components_) out.push_back(c.spec.id);
  return out;
}

std::optional<Layer> Simulation::layer_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return components_[it->second].spec.layer;
}

void Simulation::draw(ComponentState& c) {
  c.latency_factor = noise_factor(c.rng);
  c.rate_factor = noise_factor(c.rng);
  const double load_kw = kMeterLoadKw * noise_factor(c.rng);
  if (c.spec.layer == Layer::device) c.energy_kwh += load_kw * config_.tick_ms / 3.6e6;
}

void Simulation::step() {
  ++tick_;
  for (auto& c : components_) draw(c);
}

const Simulation::ComponentState& Simulation::state_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw SimError(SimErrorKind::unknown_component, id);
  return components_[it->second];
}

bool Simulation::down(const std::string& id) const {
  for (const auto& f : faults_) {
    if (f.kind == FaultKind::downtime && f.component_id == id && tick_ >= f.start_tick &&
        tick_ < f.start_tick + f.duration_ticks) {
      return true;
    }
  }
  return false;
}

double Simulation::spike_factor(const std::string& id) const {
  double factor = 1.0;
  for (const auto& f : faults_) {
    if (f.kind == FaultKind::latency_spike && f.component_id == id && tick_ >= f.start_tick &&
        tick_ < f.start_tick + f.duration_ticks) {
      factor *= f.magnitude;
    }
  }
  return factor;
}

double Simulation::drop_probability(const std::string& id) const {
  double pass = 1.0;
  for (const auto& f : faults_) {
    if (f.kind == FaultKind::drop_rate && f.component_id == id && tick_ >= f.start_tick &&
        tick_ < f.start_tick + f.duration_ticks) {
      pass *= 1.0 - f.magnitude;
    }
  }
  return 1.0 - pass;
}

double Simulation::observe(const std::string& component_id, Signal signal) const {
  const auto& c = state_of(component_id);
  if (!supports(c.spec.layer, signal)) {
    throw SimError(SimErrorKind::unsupported_signal,
                   std::string(to_string(signal)) + " on " + component_id);
  }
  switch (signal) {
    case Signal::up: return down(component_id) ? 0.0 : 1.0;
    case Signal::request_latency_ms: {
      const double base = c.spec.layer == Layer::edge ? kEdgeLatencyMs : kApplicationLatencyMs;
      return base * c.latency_factor * spike_factor(component_id);
    }
    case Signal::offered_requests_per_s: return kRequestRate * c.rate_factor;
    case Signal::served_requests_per_s:
      if (down(component_id)) return 0.0;
      return kRequestRate * c.rate_factor * (1.0 - drop_probability(component_id));
    case Signal::energy_reading_kwh: return c.energy_kwh;
  }
  return 0.0;
}

int Simulation::inject_fault(const FaultSpec& fault) {
  if (!has_component(fault.component_id)) throw SimError(SimErrorKind::unknown_component, fault.component_id);
  if (fault.duration_ticks < 1) throw SimError(SimErrorKind::invalid_fault, "duration_ticks must be >= 1");
  if (fault.start_tick < tick_) {
    throw SimError(SimErrorKind::invalid_fault, "start_tick " + std::to_string(fault.start_tick) +
                                                    " is before the current tick " + std::to_string(tick_));
  }
  switch (fault.kind) {
    case FaultKind::downtime: break;
    case FaultKind::latency_spike:
      if (!(fault.magnitude >= 1.0) || !std::isfinite(fault.magnitude)) {
        throw SimError(SimErrorKind::invalid_fault, "latency_spike magnitude must be >= 1");
      }
      break;
    case FaultKind::drop_rate:
      if (!(fault.magnitude >= 0.0 && fault.magnitude <= 1.0)) {
        throw SimError(SimErrorKind::invalid_fault, "drop_rate magnitude must be in [0, 1]");
      }
      break;
  }
  faults_.push_back(fault);
  return static_cast<int>(faults_.size());
}

SimHandle::SimHandle(SimConfig config) : config_(config), sim_(std::move(config)) {}

SimHandle::~SimHandle() { stop(); }

void SimHandle::start() {
  if (thread_.joinable()) return;
  stopping_ = false;
  thread_ = std::thread([this] { run(); });
}

void SimHandle::stop() {
  {
    std::lock_guard lock(wake_mu_);
    stopping_ = true;
  }
  wake_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void SimHandle::add_tick_listener(TickListener listener) {
  std::lock_guard lock(mu_);
  listeners_.push_back(std::move(listener));
}

std::int64_t SimHandle::tick() const {
  std::lock_guard lock(mu_);
  return sim_.tick();
}

std::int64_t SimHandle::sim_time_ms() const {
  std::lock_guard lock(mu_);
  return sim_.sim_time_ms();
}

bool SimHandle::has_component(const std::string& id) const {
  std::lock_guard lock(mu_);
  return sim_.has_component(id);
}

std::optional<Layer> SimHandle::layer_of(const std::string& id) const {
  std::lock_guard lock(mu_);
  return sim_.layer_of(id);
}

double SimHandle::observe(const std::string& component_id, Signal signal) const {
  std::lock_guard lock(mu_);
  return sim_.observe(component_id, signal);
}

int SimHandle::inject_fault(FaultSpec fault) {
  std::lock_guard lock(mu_);
  if (fault.start_tick < 0) fault.start_tick = sim_.tick() + 1;
  return sim_.inject_fault(fault);
}

void SimHandle::run() {
  using clock = std::chrono::steady_clock;
  const auto origin = clock::now();
  const double wall_ms_per_tick = config_.tick_ms / config_.speedup;
  std::int64_t ticks_done = 0;

  while (!stopping_) {
    const auto due = origin + std::chrono::duration_cast<clock::duration>(
                                  std::chrono::duration<double, std::milli>(wall_ms_per_tick * (ticks_done + 1)));
    {
      std::unique_lock lock(wake_mu_);
      if (wake_.wait_until(lock, due, [this] { return stopping_.load(); })) break;
    }

    std::vector<TickListener> listeners;
    std::int64_t tick = 0;
    std::int64_t now = 0;
    {
      std::lock_guard lock(mu_);
      sim_.step();
      tick = sim_.tick();
      now = sim_.sim_time_ms();
      listeners = listeners_;
    }
    ++ticks_done;
    for (const auto& l : listeners) l(tick, now);
  }
}

std::unique_ptr<SimHandle> start_sim(const SimConfig& config) {
  auto handle = std::make_unique<SimHandle>(config);
  handle->start();
  return handle;
}

}  // namespace cloudhealth::sim
