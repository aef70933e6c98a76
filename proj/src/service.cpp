#include "cloudhealth/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>

namespace cloudhealth {

using nlohmann::json;

std::optional<View> parse_view(std::string_view s) {
  if (s == "manager") return View::manager;
  if (s == "technician") return View::technician;
  return std::nullopt;
}

namespace {

std::int64_t wall_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::set<std::string> metric_ids(const QualityModel& model) {
  std::set<std::string> out;
  for (const auto& [id, _] : model.metrics) out.insert(id);
  return out;
}

std::set<std::string> component_ids(const ArchitectureDescriptor& arch) {
  std::set<std::string> out;
  for (const auto& c : arch.components) out.insert(c.id);
  return out;
}

json optional_number(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

}  // namespace

Service::Service(QualityModel model, ArchitectureDescriptor architecture, ProbeCatalog catalog,
                 ServiceOptions options)
    : model_(std::move(model)),
      architecture_(std::move(architecture)),
      catalog_(std::move(catalog)),
      options_(std::move(options)) {
  store_ = std::make_unique<SeriesStore>(options_.store, metric_ids(model_), component_ids(architecture_));
  if (options_.sample_log_path) sample_log_ = std::make_unique<SampleLog>(*options_.sample_log_path);

  ExecutorRegistry registry;
  if (options_.sim_enabled) {
    sim::SimConfig cfg;
    cfg.seed = options_.sim_seed;
    cfg.speedup = options_.sim_speedup;
    cfg.tick_ms = options_.sim_tick_ms;
    cfg.components = sim::components_from(architecture_);
    cfg.epoch_ms = wall_ms();
    sim_ = std::make_unique<sim::SimHandle>(cfg);
    for (const auto& f : options_.fault_schedule) sim_->inject_fault(f);
    sim_executor_ = std::make_unique<SimulatedExecutor>(*sim_, [this](const Sample& s) { accept_sample(s); });
    sim_executor_->attach();
    registry[ExecutorKind::simulated] = sim_executor_.get();
  }
  process_executor_ = std::make_unique<LocalProcessExecutor>("", options_.probe_dirs);
  registry[ExecutorKind::local_process] = process_executor_.get();
  reconciler_ = std::make_unique<Reconciler>(registry, options_.heartbeat_timeout_seconds);

  if (sim_) sim_->start();
  supervise_thread_ = std::thread([this] { supervise_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(supervise_mu_);
    stopping_ = true;
  }
  supervise_cv_.notify_all();
  if (supervise_thread_.joinable()) supervise_thread_.join();
  if (sim_) sim_->stop();
  process_executor_->stop_all();
}

std::int64_t Service::now_ms() const { return sim_ ? sim_->sim_time_ms() : wall_ms(); }

void Service::supervise_loop() {
  std::unique_lock lock(supervise_mu_);
  while (!stopping_) {
    supervise_cv_.wait_for(lock, std::chrono::milliseconds(options_.supervise_interval_ms));
    if (stopping_) break;
    lock.unlock();
    reconciler_->supervise(now_ms());
    lock.lock();
  }
}

void Service::accept_sample(const Sample& sample) {
  const auto now = now_ms();
  if (!store_->ingest(sample, now).accepted) return;
  if (sample_log_) sample_log_->append(sample);
  reconciler_->heartbeat_for(sample.metric_id, sample.component_id, now);
}

IngestCounts Service::ingest(std::string_view body) {
  const auto now = now_ms();
  return ingest_ndjson(*store_, body, now, [&](const Sample& s) {
    if (sample_log_) sample_log_->append(s);
    reconciler_->heartbeat_for(s.metric_id, s.component_id, now);
  });
}

GoalSelection Service::configure_selection(const std::vector<std::string>& goal_ids) {
  GoalSelection next;
  for (const auto& id : goal_ids) {
    if (!model_.is_goal(id)) throw ModelError(ModelErrorKind::unknown_goal, id, "not a goal of the model");
    next.insert(id);
  }
  std::unique_lock lock(state_mu_);
  selection_ = next;
  return next;
}

GoalSelection Service::selection() const {
  std::shared_lock lock(state_mu_);
  return selection_;
}

DeploySummary Service::trigger_deploy() {
  std::lock_guard deploy_lock(deploy_mu_);
  const auto sel = selection();
  if (sel.empty()) throw EmptySelection();

  auto plan = match_probes(resolve_goals(model_, sel), architecture_, catalog_);
  auto diff = reconciler_->apply(plan, now_ms());
  {
    std::unique_lock lock(state_mu_);
    plan_ = plan;
  }
  DeploySummary summary;
  summary.started = diff.to_start.size();
  summary.stopped = diff.to_stop.size();
  summary.unchanged = diff.unchanged.size();
  summary.plan = std::move(plan);
  summary.state = reconciler_->snapshot();
  return summary;
}

ScoreReport Service::kpis() const { return compute_kpis(*store_, model_, selection(), now_ms()); }

json Service::kpis_json(View view) const {
  const auto sel = selection();
  const auto report = compute_kpis(*store_, model_, sel, now_ms());

  json nodes = json::object();
  for (const auto& [id, ns] : report.nodes) {
    if (view == View::manager && ns.is_metric) continue;
    json n{{"score", optional_number(ns.score)},
           {"status", to_string(ns.status)},
           {"confidence", ns.confidence}};
    if (const auto* g = model_.goal(id)) {
      n["kind"] = "goal";
      n["name"] = g->name;
      json children = json::array();
      for (const auto& c : g->children) {
        if (view == View::technician || model_.is_goal(c)) children.push_back(c);
      }
      n["children"] = children;
    } else {
      const auto& m = model_.metrics.at(id);
      n["kind"] = "metric";
      n["name"] = m.name;
      n["unit"] = m.unit;
      n["raw"] = optional_number(ns.raw);
      json series = json::array();
      for (const auto& component : store_->components_for(id)) {
        series.push_back({{"component", component},
                          {"href", "/series?metric=" + id + "&component=" + component}});
      }
      n["series"] = series;
    }
    nodes[id] = std::move(n);
  }
  json selection = json::array();
  for (const auto& g : sel) selection.push_back(g);
  return json{{"timestamp", report.timestamp_ms},
              {"view", view == View::manager ? "manager" : "technician"},
              {"selection", selection},
              {"nodes", nodes}};
}

int Service::inject_fault(const sim::FaultSpec& fault) {
  if (!sim_) throw SimDisabled();
  return sim_->inject_fault(fault);
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json error_body(std::string_view error, const std::string& message) {
  return json{{"error", error}, {"message", message}};
}

json binding_json(const ProbeBinding& b) {
  return json{{"probe", b.probe_id},
              {"component", b.component_id},
              {"metrics", b.metrics_served},
              {"config", b.config},
              {"executor", to_string(b.executor)},
              {"interval_seconds", b.interval_seconds}};
}

json entry_json(const DeploymentEntry& e) {
  auto j = binding_json(e.binding);
  j["status"] = to_string(e.status);
  j["started_at"] = e.started_at;
  j["last_heartbeat"] = e.last_heartbeat ? json(*e.last_heartbeat) : json(nullptr);
  j["retries_left"] = e.retries_left;
  if (!e.last_error.empty()) j["error"] = e.last_error;
  return j;
}

std::optional<std::int64_t> int_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  try {
    return std::stoll(req.get_param_value(name));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

void Service::mount(httplib::Server& server) {
  server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    json body{{"status", "ok"}, {"now_ms", now_ms()}};
    if (sim_) {
      body["sim"] = {{"enabled", true},
                     {"tick", sim_->tick()},
                     {"tick_ms", sim_->config().tick_ms},
                     {"epoch_ms", sim_->config().epoch_ms},
                     {"speedup", sim_->config().speedup}};
    } else {
      body["sim"] = {{"enabled", false}};
    }
    reply(res, 200, body);
  });

  server.Get("/model", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(dump_model(model_, -1), "application/json");
  });

  server.Get("/goals", [this](const httplib::Request&, httplib::Response& res) {
    json goals = json::array();
    for (const auto& [id, g] : model_.goals) {
      auto parent = model_.parent_of(id);
      goals.push_back({{"id", id},
                       {"name", g.name},
                       {"children", g.children},
                       {"weights", g.weights},
                       {"combinator", to_string(g.combinator)},
                       {"parent", parent ? json(*parent) : json(nullptr)},
                       {"root", std::find(model_.roots.begin(), model_.roots.end(), id) != model_.roots.end()}});
    }
    reply(res, 200, goals);
  });

  server.Get("/selection", [this](const httplib::Request&, httplib::Response& res) {
    json sel = json::array();
    for (const auto& g : selection()) sel.push_back(g);
    reply(res, 200, sel);
  });

  server.Put("/selection", [this](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body, nullptr, false);
    if (body.is_object() && body.contains("goals")) body = body["goals"];
    if (!body.is_array()) {
      reply(res, 400, error_body("BadRequest", "expected a JSON array of goal ids"));
      return;
    }
    std::vector<std::string> ids;
    for (const auto& v : body) {
      if (!v.is_string()) {
        reply(res, 400, error_body("BadRequest", "goal ids must be strings"));
        return;
      }
      ids.push_back(v.get<std::string>());
    }
    try {
      json sel = json::array();
      for (const auto& g : configure_selection(ids)) sel.push_back(g);
      reply(res, 200, sel);
    } catch (const ModelError& e) {
      auto body_out = error_body("UnknownGoal", e.what());
      body_out["id"] = e.subject();
      reply(res, 400, body_out);
    }
  });

  server.Post("/deploy", [this](const httplib::Request&, httplib::Response& res) {
    try {
      auto summary = trigger_deploy();
      json bindings = json::array();
      for (const auto& b : summary.plan.bindings) {
        auto it = summary.state.entries.find(b.key());
        bindings.push_back(it != summary.state.entries.end() ? entry_json(it->second) : binding_json(b));
      }
      reply(res, 200,
            json{{"bindings", bindings},
                 {"started", summary.started},
                 {"stopped", summary.stopped},
                 {"unchanged", summary.unchanged}});
    } catch (const EmptySelection& e) {
      reply(res, 409, error_body("EmptySelection", e.what()));
    } catch (const UncoveredMetrics& e) {
      auto body = error_body("UncoveredMetrics", e.what());
      body["metrics"] = e.metrics();
      reply(res, 422, body);
    } catch (const UnresolvableConfig& e) {
      auto body = error_body("UnresolvableConfig", e.what());
      body["probe"] = e.probe_id();
      body["component"] = e.component_id();
      body["key"] = e.key();
      reply(res, 422, body);
    } catch (const UnknownExecutor& e) {
      auto body = error_body("UnknownExecutor", e.what());
      body["executor"] = to_string(e.kind());
      reply(res, 409, body);
    }
  });

  server.Get("/kpis", [this](const httplib::Request& req, httplib::Response& res) {
    auto view = View::technician;
    if (req.has_param("view")) {
      auto v = parse_view(req.get_param_value("view"));
      if (!v) {
        reply(res, 400, error_body("BadRequest", "view must be manager or technician"));
        return;
      }
      view = *v;
    }
    reply(res, 200, kpis_json(view));
  });

  server.Get("/probes", [this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& [_, e] : reconciler_->snapshot().entries) out.push_back(entry_json(e));
    reply(res, 200, out);
  });

  server.Get("/series", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("metric") || !req.has_param("component")) {
      reply(res, 400, error_body("BadRequest", "metric and component are required"));
      return;
    }
    const auto metric = req.get_param_value("metric");
    const auto component = req.get_param_value("component");
    if (!model_.is_metric(metric)) {
      reply(res, 404, error_body("UnknownMetric", metric));
      return;
    }
    if (!architecture_.contains(component)) {
      reply(res, 404, error_body("UnknownComponent", component));
      return;
    }
    const auto now = now_ms();
    const auto to = int_param(req, "to").value_or(now + store_->config().clock_skew_ms);
    const auto from = int_param(req, "from").value_or(now - store_->config().retention_seconds * 1000LL);
    json points = json::array();
    for (const auto& p : store_->query(metric, component, from, to, now)) {
      points.push_back(json::array({p.timestamp_ms, p.value}));
    }
    reply(res, 200, json{{"metric", metric}, {"component", component}, {"points", points}});
  });

  server.Post("/ingest", [this](const httplib::Request& req, httplib::Response& res) {
    auto counts = ingest(req.body);
    reply(res, 202, json{{"accepted", counts.accepted}, {"rejected", counts.rejected}});
  });

  server.Post("/sim/faults", [this](const httplib::Request& req, httplib::Response& res) {
    if (!sim_) {
      reply(res, 409, error_body("SimDisabled", "the simulator is not enabled"));
      return;
    }
    auto body = json::parse(req.body, nullptr, false);
    if (!body.is_object()) {
      reply(res, 400, error_body("InvalidFault", "expected a JSON object"));
      return;
    }
    sim::FaultSpec fault;
    fault.start_tick = -1;
    try {
      auto kind = body.value("kind", std::string{});
      auto k = sim::parse_fault_kind(kind);
      if (!k) throw sim::SimError(sim::SimErrorKind::invalid_fault, "unknown fault kind '" + kind + "'");
      fault.kind = *k;
      fault.component_id = body.value("component_id", std::string{});
      if (body.contains("start_tick")) fault.start_tick = body.at("start_tick").get<std::int64_t>();
      fault.duration_ticks = body.value("duration_ticks", std::int64_t{0});
      fault.magnitude = body.value("magnitude", 1.0);
    } catch (const json::exception& e) {
      reply(res, 400, error_body("InvalidFault", e.what()));
      return;
    } catch (const sim::SimError& e) {
      reply(res, 400, error_body("InvalidFault", e.what()));
      return;
    }
    try {
      const int id = inject_fault(fault);
      reply(res, 201, json{{"fault_id", id}});
    } catch (const sim::SimError& e) {
      const bool unknown = e.kind() == sim::SimErrorKind::unknown_component;
      reply(res, unknown ? 404 : 400, error_body(unknown ? "UnknownComponent" : "InvalidFault", e.what()));
    }
  });

  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    reply(res, 500, error_body("InternalError", what));
  });

  if (options_.static_dir) server.set_mount_point("/", *options_.static_dir);
}

void Service::set_ingest_host(const std::string& host, int port) {
  const std::string h = (host == "0.0.0.0" || host.empty()) ? "127.0.0.1" : host;
  process_executor_->set_ingest_url("http://" + h + ":" + std::to_string(port) + "/ingest");
}

int Service::bind(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  mount(*server_);
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    server_.reset();
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  set_ingest_host(host, bound);
  return bound;
}

bool Service::serve() { return server_ && server_->listen_after_bind(); }

int Service::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  server_thread_ = std::thread([this] { serve(); });
  server_->wait_until_ready();
  return bound;
}

void Service::stop() {
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
}

}  // namespace cloudhealth
