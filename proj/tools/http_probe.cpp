// cloudhealth-http-probe: a local_process probe. Polls an HTTP target and
// pushes uptime and latency samples to the ingestion endpoint.
//
// Configuration comes from the environment set by the deployment engine:
// PROBE_ID, COMPONENT_ID, TARGET (host:port), INTERVAL_SECONDS, INGEST_URL,
// METRICS (comma-separated). PROBE_PATH optionally overrides the polled path.
// Timestamps follow the service clock read from the ingest host's /healthz,
// which is simulated time when the service runs the simulator.

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "cloudhealth/metrics_pipeline.hpp"

namespace {

std::atomic<bool> g_stop{false};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

struct Url {
  std::string scheme_host_port;
  std::string path;
};

Url split_url(const std::string& url) {
  auto scheme = url.find("://");
  auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::int64_t wall_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::int64_t service_now_ms(httplib::Client& ingest_client) {
  if (auto res = ingest_client.Get("/healthz"); res && res->status == 200) {
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_object() && j.contains("now_ms") && j["now_ms"].is_number_integer()) {
      return j["now_ms"].get<std::int64_t>();
    }
  }
  return wall_ms();
}

}  // namespace

int main() {
  std::signal(SIGTERM, [](int) { g_stop = true; });
  std::signal(SIGINT, [](int) { g_stop = true; });

  const auto component = env_or("COMPONENT_ID", "");
  const auto target = env_or("TARGET", "");
  const auto ingest = env_or("INGEST_URL", "");
  const auto path = env_or("PROBE_PATH", "/healthz");
  const int interval = std::max(1, std::atoi(env_or("INTERVAL_SECONDS", "1").c_str()));
  std::set<std::string> metrics;
  {
    std::stringstream ss(env_or("METRICS", "uptime_ratio,latency_ms"));
    std::string m;
    while (std::getline(ss, m, ',')) {
      if (!m.empty()) metrics.insert(m);
    }
  }
  if (component.empty() || target.empty() || ingest.empty()) {
    std::cerr << "cloudhealth-http-probe: COMPONENT_ID, TARGET and INGEST_URL are required\n";
    return 2;
  }

  httplib::Client probe_client("http://" + target);
  probe_client.set_connection_timeout(2);
  probe_client.set_read_timeout(2);
  const auto sink = split_url(ingest);
  httplib::Client ingest_client(sink.scheme_host_port);

  while (!g_stop) {
    const auto started = std::chrono::steady_clock::now();
    auto res = probe_client.Get(path);
    const double elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    const bool up = res && res->status >= 200 && res->status < 500;
    const auto ts = service_now_ms(ingest_client);

    std::string body;
    auto add = [&](const std::string& metric, double value) {
      body += cloudhealth::format_sample_line({metric, component, ts, value}) + "\n";
    };
    if (metrics.contains("uptime_ratio")) add("uptime_ratio", up ? 1.0 : 0.0);
    if (up && metrics.contains("latency_ms")) add("latency_ms", elapsed_ms);
    if (up && metrics.contains("response_time_ms")) add("response_time_ms", elapsed_ms);
    if (!body.empty()) ingest_client.Post(sink.path, body, "application/x-ndjson");

    for (int i = 0; i < interval * 10 && !g_stop; ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  }
  return 0;
}
