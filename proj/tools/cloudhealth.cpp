// cloudhealth: serve the monitoring API, validate model files, or preview a
// probe plan.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "cloudhealth/architecture.hpp"
#include "cloudhealth/probe_catalog.hpp"
#include "cloudhealth/quality_model.hpp"
#include "cloudhealth/service.hpp"

namespace {

using namespace cloudhealth;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::pair<std::string, int> split_host_port(const std::string& listen) {
  auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw std::runtime_error("--listen must be HOST:PORT");
  return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
}

std::string executable_dir(const char* argv0) {
  std::string self;
  char buf[4096];
  auto n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n > 0) self.assign(buf, static_cast<std::size_t>(n));
  else self = argv0;
  auto slash = self.rfind('/');
  return slash == std::string::npos ? "." : self.substr(0, slash);
}

int run_validate(const std::string& model_path, const std::string& arch_path, const std::string& catalog_path) {
  int problems = 0;
  auto report = [&](const std::string& line) {
    std::cout << line << "\n";
    ++problems;
  };

  std::optional<QualityModel> model;
  try {
    model = parse_model(read_file(model_path));
  } catch (const ModelError& e) {
    report(std::string("model: ") + e.what());
  }
  if (model) {
    for (const auto& v : validate_model(*model)) {
      report("model: " + std::string(to_string(v.rule)) + "(" + v.id + "): " + v.detail);
    }
  }
  if (!arch_path.empty()) {
    try {
      load_architecture(read_file(arch_path));
    } catch (const ArchitectureError& e) {
      report(std::string("architecture: ") + e.what());
    }
  }
  if (!catalog_path.empty()) {
    try {
      auto catalog = load_catalog(read_file(catalog_path));
      if (model) {
        for (const auto& p : catalog) {
          for (const auto& m : p.provides) {
            // Probes may offer extra signals; only flag ids that collide with goals.
            if (model->is_goal(m)) report("catalog: probe " + p.id + " provides goal id '" + m + "'");
          }
        }
      }
    } catch (const CatalogError& e) {
      report(std::string("catalog: ") + e.what());
    }
  }
  if (problems == 0) std::cout << "ok\n";
  return problems == 0 ? 0 : 1;
}

int run_plan(const std::string& model_path, const std::string& arch_path, const std::string& catalog_path,
             const std::string& goals) {
  auto model = parse_model(read_file(model_path));
  auto arch = load_architecture(read_file(arch_path));
  auto catalog = load_catalog(read_file(catalog_path));
  auto ids = split_csv(goals);
  GoalSelection selection(ids.begin(), ids.end());
  try {
    auto plan = match_probes(resolve_goals(model, selection), arch, catalog);
    std::cout << dump_plan(plan) << "\n";
  } catch (const UncoveredMetrics& e) {
    std::cerr << e.what() << "\n";
    return 3;
  }
  return 0;
}

Service* g_service = nullptr;

int run_serve(const std::string& model_path, const std::string& arch_path, const std::string& catalog_path,
              std::string listen, ServiceOptions options) {
  if (const char* env = std::getenv("CLOUDHEALTH_LISTEN"); env && *env) listen = env;
  auto [host, port] = split_host_port(listen);

  auto model = parse_model(read_file(model_path));
  auto arch = load_architecture(read_file(arch_path));
  auto catalog = load_catalog(read_file(catalog_path));

  // Block shutdown signals before any thread starts; one thread waits for them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Service service(std::move(model), std::move(arch), std::move(catalog), std::move(options));
  g_service = &service;

  std::thread waiter([set] {
    int sig = 0;
    sigwait(&set, &sig);
    if (g_service) g_service->stop();
  });
  waiter.detach();

  const int bound = service.bind(host, port);
  std::cout << "cloudhealth listening on " << host << ":" << bound << std::endl;
  service.serve();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-driven monitoring orchestrator"};
  app.require_subcommand(1);

  std::string model_path, arch_path, catalog_path, listen = "127.0.0.1:8080", goals;
  ServiceOptions options;
  std::string sample_log, fault_schedule, static_dir;

  auto* serve = app.add_subcommand("serve", "Run the monitoring service");
  serve->add_option("--model", model_path, "Quality model file")->required()->check(CLI::ExistingFile);
  serve->add_option("--architecture", arch_path, "Architecture descriptor")->required()->check(CLI::ExistingFile);
  serve->add_option("--catalog", catalog_path, "Probe catalog")->required()->check(CLI::ExistingFile);
  serve->add_option("--listen", listen, "HOST:PORT (overridden by CLOUDHEALTH_LISTEN)");
  serve->add_flag("--sim", options.sim_enabled, "Run the micro-grid simulator as the monitored system");
  serve->add_option("--sim-seed", options.sim_seed, "Simulator seed");
  serve->add_option("--sim-speedup", options.sim_speedup, "Simulated seconds per wall second")
      ->check(CLI::PositiveNumber);
  serve->add_option("--sim-tick-ms", options.sim_tick_ms, "Simulated milliseconds per tick")
      ->check(CLI::PositiveNumber);
  serve->add_option("--fault-schedule", fault_schedule, "JSON array of faults injected at start")
      ->check(CLI::ExistingFile);
  serve->add_option("--sample-log", sample_log, "Append accepted samples to this file");
  serve->add_option("--static-dir", static_dir, "Serve dashboard assets from this directory at /");
  serve->add_option("--retention-seconds", options.store.retention_seconds, "Sample retention")
      ->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Check model, architecture and catalog files");
  validate->add_option("--model", model_path, "Quality model file")->required();
  validate->add_option("--architecture", arch_path, "Architecture descriptor");
  validate->add_option("--catalog", catalog_path, "Probe catalog");

  auto* plan = app.add_subcommand("plan", "Print the probe plan for a goal selection without deploying");
  plan->add_option("--model", model_path, "Quality model file")->required();
  plan->add_option("--architecture", arch_path, "Architecture descriptor")->required();
  plan->add_option("--catalog", catalog_path, "Probe catalog")->required();
  plan->add_option("--goals", goals, "Comma-separated goal ids")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return run_validate(model_path, arch_path, catalog_path);
    if (*plan) return run_plan(model_path, arch_path, catalog_path, goals);
    if (*serve) {
      if (!sample_log.empty()) options.sample_log_path = sample_log;
      if (!static_dir.empty()) options.static_dir = static_dir;
      if (!fault_schedule.empty()) options.fault_schedule = sim::load_fault_schedule(read_file(fault_schedule));
      options.probe_dirs.push_back(executable_dir(argv[0]));
      return run_serve(model_path, arch_path, catalog_path, listen, std::move(options));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
