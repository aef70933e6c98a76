#include "cloudhealth/executors.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <thread>

extern char** environ;

namespace cloudhealth {

namespace {

// How a simulated probe measures one metric, in terms of simulator signals.
enum class Measurement { uptime, latency, throughput, failed_ratio, recovery, raw_signal };

std::optional<Measurement> measurement_for(const std::string& metric) {
  if (metric == "uptime_ratio") return Measurement::uptime;
  if (metric == "latency_ms" || metric == "response_time_ms") return Measurement::latency;
  if (metric == "throughput_rps") return Measurement::throughput;
  if (metric == "failed_request_ratio") return Measurement::failed_ratio;
  if (metric == "mtr_seconds") return Measurement::recovery;
  if (sim::parse_signal(metric)) return Measurement::raw_signal;
  return std::nullopt;
}

bool measurable(Measurement m, const std::string& metric, Layer layer) {
  switch (m) {
    case Measurement::uptime:
    case Measurement::recovery: return true;
    case Measurement::latency: return sim::supports(layer, sim::Signal::request_latency_ms);
    case Measurement::throughput:
    case Measurement::failed_ratio: return sim::supports(layer, sim::Signal::served_requests_per_s);
    case Measurement::raw_signal: return sim::supports(layer, *sim::parse_signal(metric));
  }
  return false;
}

}  // namespace

void SimulatedExecutor::Outages::update(bool is_down, std::int64_t now_ms) {
  if (is_down && !down) {
    down = true;
    down_since = now_ms;
  } else if (!is_down && down) {
    down = false;
    completed_seconds += static_cast<double>(now_ms - down_since) / 1000.0;
    ++completed;
  }
}

double SimulatedExecutor::Outages::mean_seconds(std::int64_t now_ms) const {
  double total = completed_seconds;
  int count = completed;
  if (down) {
    total += static_cast<double>(now_ms - down_since) / 1000.0;
    ++count;
  }
  return count == 0 ? 0.0 : total / count;
}

SimulatedExecutor::SimulatedExecutor(sim::SimHandle& sim, SampleSink sink) : sim_(sim), sink_(std::move(sink)) {}

void SimulatedExecutor::attach() {
  sim_.add_tick_listener([this](std::int64_t, std::int64_t now_ms) { on_tick(now_ms); });
}

void SimulatedExecutor::launch(const ProbeBinding& binding) {
  auto layer = sim_.layer_of(binding.component_id);
  if (!layer) throw LaunchError("component " + binding.component_id + " is not part of the simulation");
  for (const auto& metric : binding.metrics_served) {
    auto m = measurement_for(metric);
    if (!m) throw LaunchError("simulated probes cannot measure " + metric);
    if (!measurable(*m, metric, *layer)) {
      throw LaunchError(metric + " is not observable on " + binding.component_id);
    }
  }
  std::lock_guard lock(mu_);
  Task task;
  task.binding = binding;
  task.interval_ms = static_cast<std::int64_t>(binding.interval_seconds) * 1000;
  tasks_[binding.key()] = std::move(task);
}

void SimulatedExecutor::stop(const BindingKey& key) {
  std::lock_guard lock(mu_);
  tasks_.erase(key);
}

std::size_t SimulatedExecutor::task_count() const {
  std::lock_guard lock(mu_);
  return tasks_.size();
}

void SimulatedExecutor::measure(Task& task, std::int64_t now_ms, std::vector<Sample>& out) {
  const auto& component = task.binding.component_id;
  const bool up = sim_.observe(component, sim::Signal::up) > 0.5;
  task.outages.update(!up, now_ms);

  auto emit = [&](const std::string& metric, double value) {
    out.push_back(Sample{metric, component, now_ms, value});
  };
  for (const auto& metric : task.binding.metrics_served) {
    switch (*measurement_for(metric)) {
      case Measurement::uptime: emit(metric, up ? 1.0 : 0.0); break;
      case Measurement::recovery: emit(metric, task.outages.mean_seconds(now_ms)); break;
      // A component that is down answers no requests, so there is nothing
      // to time or count.
      case Measurement::latency:
        if (up) emit(metric, sim_.observe(component, sim::Signal::request_latency_ms));
        break;
      case Measurement::throughput:
        if (up) emit(metric, sim_.observe(component, sim::Signal::served_requests_per_s));
        break;
      case Measurement::failed_ratio: {
        if (!up) {
          emit(metric, 1.0);
          break;
        }
        const double offered = sim_.observe(component, sim::Signal::offered_requests_per_s);
        const double served = sim_.observe(component, sim::Signal::served_requests_per_s);
        emit(metric, offered > 0.0 ? 1.0 - served / offered : 0.0);
        break;
      }
      case Measurement::raw_signal: emit(metric, sim_.observe(component, *sim::parse_signal(metric))); break;
    }
  }
}

void SimulatedExecutor::on_tick(std::int64_t now_ms) {
  std::vector<Sample> samples;
  {
    std::lock_guard lock(mu_);
    for (auto& [_, task] : tasks_) {
      if (task.next_due && *task.next_due > now_ms) continue;
      task.next_due = now_ms + task.interval_ms;
      measure(task, now_ms, samples);
    }
  }
  for (const auto& s : samples) sink_(s);
}

LocalProcessExecutor::LocalProcessExecutor(std::string ingest_url, std::vector<std::string> search_dirs)
    : ingest_url_(std::move(ingest_url)), search_dirs_(std::move(search_dirs)) {}

LocalProcessExecutor::~LocalProcessExecutor() { stop_all(); }

void LocalProcessExecutor::set_ingest_url(std::string url) {
  std::lock_guard lock(mu_);
  ingest_url_ = std::move(url);
}

std::optional<std::string> LocalProcessExecutor::resolve(const std::string& command) const {
  auto executable = [](const std::string& p) { return ::access(p.c_str(), X_OK) == 0; };
  if (command.find('/') != std::string::npos) {
    if (executable(command)) return command;
    return std::nullopt;
  }
  std::vector<std::string> dirs = search_dirs_;
  if (const char* path = std::getenv("PATH")) {
    std::string p(path);
    std::size_t pos = 0;
    while (pos <= p.size()) {
      auto end = p.find(':', pos);
      if (end == std::string::npos) end = p.size();
      if (end > pos) dirs.push_back(p.substr(pos, end - pos));
      pos = end + 1;
    }
  }
  for (const auto& d : dirs) {
    auto candidate = d + "/" + command;
    if (executable(candidate)) return candidate;
  }
  return std::nullopt;
}

void LocalProcessExecutor::launch(const ProbeBinding& binding) {
  auto path = resolve(binding.command);
  if (!path) throw LaunchError("probe command '" + binding.command + "' not found");

  std::string metrics;
  for (const auto& m : binding.metrics_served) metrics += (metrics.empty() ? "" : ",") + m;
  auto target = binding.config.contains("target") ? binding.config.at("target") : std::string{};

  std::vector<std::string> env_strings;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    bool ours = false;
    for (const char* name : {"PROBE_ID=", "COMPONENT_ID=", "TARGET=", "INTERVAL_SECONDS=", "INGEST_URL=", "METRICS="}) {
      if (kv.starts_with(name)) ours = true;
    }
    if (!ours) env_strings.emplace_back(kv);
  }
  {
    std::lock_guard lock(mu_);
    env_strings.push_back("INGEST_URL=" + ingest_url_);
  }
  env_strings.push_back("PROBE_ID=" + binding.probe_id);
  env_strings.push_back("COMPONENT_ID=" + binding.component_id);
  env_strings.push_back("TARGET=" + target);
  env_strings.push_back("INTERVAL_SECONDS=" + std::to_string(binding.interval_seconds));
  env_strings.push_back("METRICS=" + metrics);

  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::string arg0 = *path;
  char* argv[] = {arg0.data(), nullptr};

  // The parent may block signals for its own handling; children start clean.
  posix_spawnattr_t attr;
  ::posix_spawnattr_init(&attr);
  sigset_t empty;
  sigemptyset(&empty);
  ::posix_spawnattr_setsigmask(&attr, &empty);
  ::posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETSIGMASK);
  pid_t pid = 0;
  const int rc = ::posix_spawn(&pid, path->c_str(), nullptr, &attr, argv, envp.data());
  ::posix_spawnattr_destroy(&attr);
  if (rc != 0) throw LaunchError("spawn " + *path + ": " + std::strerror(rc));
  std::lock_guard lock(mu_);
  children_[binding.key()] = pid;
}

namespace {

void terminate_child(pid_t pid) {
  ::kill(pid, SIGTERM);
  for (int i = 0; i < 200; ++i) {
    int status = 0;
    pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid || r < 0) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ::kill(pid, SIGKILL);
  ::waitpid(pid, nullptr, 0);
}

}  // namespace

void LocalProcessExecutor::stop(const BindingKey& key) {
  pid_t pid = 0;
  {
    std::lock_guard lock(mu_);
    auto it = children_.find(key);
    if (it == children_.end()) return;
    pid = it->second;
    children_.erase(it);
  }
  terminate_child(pid);
}

void LocalProcessExecutor::stop_all() {
  std::map<BindingKey, pid_t> children;
  {
    std::lock_guard lock(mu_);
    children.swap(children_);
  }
  for (const auto& [_, pid] : children) terminate_child(pid);
}

std::optional<pid_t> LocalProcessExecutor::pid_of(const BindingKey& key) const {
  std::lock_guard lock(mu_);
  auto it = children_.find(key);
  if (it == children_.end()) return std::nullopt;
  return it->second;
}

}  // namespace cloudhealth
