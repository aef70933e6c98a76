// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if
// every criterion passes.
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cloudhealth/deployment.hpp"
#include "cloudhealth/metrics_pipeline.hpp"
#include "cloudhealth/microgrid_sim.hpp"
#include "cloudhealth/probe_catalog.hpp"
#include "cloudhealth/quality_model.hpp"
#include "support/generators.hpp"
#include "support/process.hpp"

using namespace cloudhealth;
using nlohmann::json;
using testsupport::Rng;
using testsupport::source_path;
using namespace std::chrono_literals;

namespace {

const std::string kBin = std::string(CLOUDHEALTH_BIN_DIR) + "/cloudhealth";

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Counts failed expectations and keeps the first message.
struct Checker {
  int checks = 0;
  int failures = 0;
  std::string first;

  void expect(bool ok, const std::string& what) {
    ++checks;
    if (!ok && failures++ == 0) first = what;
  }
  Outcome outcome(const std::string& summary) const {
    if (failures == 0) return {true, summary + ", " + std::to_string(checks) + " checks"};
    return {false, std::to_string(failures) + "/" + std::to_string(checks) + " checks failed; first: " + first};
  }
};

std::vector<std::string> file_args() {
  return {"--model", source_path("models/default.json"), "--architecture", source_path("arch/microgrid.json"),
          "--catalog", source_path("catalog/default.json")};
}

QualityModel shipped_model() { return parse_model(testsupport::read_file(source_path("models/default.json"))); }

/// A `cloudhealth serve` child process plus a client for it.
class Server {
 public:
  explicit Server(const std::vector<std::string>& extra) {
    std::vector<std::string> args{kBin, "serve", "--listen", "127.0.0.1:0"};
    for (const auto& a : file_args()) args.push_back(a);
    args.insert(args.end(), extra.begin(), extra.end());
    child_ = std::make_unique<testsupport::Child>(args);
    const auto line = child_->read_line(10s);
    const auto colon = line.rfind(':');
    if (line.rfind("cloudhealth listening on ", 0) != 0 || colon == std::string::npos) {
      throw std::runtime_error("server did not start: '" + line + "'");
    }
    http_ = std::make_unique<httplib::Client>("127.0.0.1", std::stoi(line.substr(colon + 1)));
    http_->set_read_timeout(10);
  }
  ~Server() { child_->terminate(); }

  std::pair<int, json> get(const std::string& path) { return unpack(http_->Get(path)); }
  std::pair<int, json> put(const std::string& path, const json& body) {
    return unpack(http_->Put(path, body.dump(), "application/json"));
  }
  std::pair<int, json> post(const std::string& path, const json& body) {
    return unpack(http_->Post(path, body.dump(), "application/json"));
  }

 private:
  static std::pair<int, json> unpack(const httplib::Result& r) {
    if (!r) throw std::runtime_error("request failed: " + httplib::to_string(r.error()));
    return {r->status, json::parse(r->body, nullptr, false)};
  }

  std::unique_ptr<testsupport::Child> child_;
  std::unique_ptr<httplib::Client> http_;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome reliability_decomposition() {
  Checker c;
  const auto model = shipped_model();
  const auto resolved = resolve_goals(model, {"reliability"});
  std::set<std::string> expected;
  for (const auto& sub : {"continuity", "recoverability", "availability"}) testsupport::leaves_under(model, sub, expected);
  std::set<std::string> got;
  for (const auto& [id, _] : resolved.entries) got.insert(id);
  c.expect(got == expected, "resolved leaves differ from the subgoal leaves");
  c.expect(!expected.empty(), "no leaves under the reliability subgoals");

  Server s({});
  const auto [status, goals] = s.get("/goals");
  c.expect(status == 200, "GET /goals status " + std::to_string(status));
  json children;
  for (const auto& g : goals) {
    if (g["id"] == "reliability") children = g["children"];
  }
  c.expect(children == json::array({"continuity", "recoverability", "availability"}),
           "reliability children are " + children.dump());
  return c.outcome("leaves " + json(got).dump());
}

struct KpiSample {
  std::int64_t ts;
  std::optional<double> availability;
  std::optional<double> performance;
};

Outcome end_to_end() {
  const auto wall0 = std::chrono::steady_clock::now();
  Checker c;
  Server s({"--sim", "--sim-seed", "42", "--sim-speedup", "100"});

  c.expect(s.put("/selection", json::array({"reliability", "performance"})).first == 200, "configure failed");
  const auto [dstatus, deployed] = s.post("/deploy", json::object());
  if (dstatus != 200) return {false, "deploy returned " + std::to_string(dstatus) + ": " + deployed.dump()};

  // Aggregation window of the availability subtree.
  const auto model = parse_model(s.get("/model").second.dump());
  std::set<std::string> avail_leaves;
  testsupport::leaves_under(model, "availability", avail_leaves);
  int window_s = 0;
  for (const auto& id : avail_leaves) window_s = std::max(window_s, model.metrics.at(id).window_seconds);
  const std::int64_t window_ms = window_s * 1000LL;

  const auto health = s.get("/healthz").second;
  const std::int64_t tick_ms = health["sim"]["tick_ms"];
  const std::int64_t epoch_ms = health["sim"]["epoch_ms"];
  const std::int64_t t0 = health["now_ms"];

  std::vector<KpiSample> samples;
  auto poll_until = [&](std::int64_t until_ms) {
    for (;;) {
      const auto k = s.get("/kpis?view=manager").second;
      KpiSample x{k["timestamp"].get<std::int64_t>(), std::nullopt, std::nullopt};
      const auto& a = k["nodes"]["availability"]["score"];
      const auto& p = k["nodes"]["performance"]["score"];
      if (!a.is_null()) x.availability = a.get<double>();
      if (!p.is_null()) x.performance = p.get<double>();
      samples.push_back(x);
      if (x.ts >= until_ms) return;
      std::this_thread::sleep_for(5ms);
    }
  };

  poll_until(t0 + 60'000);

  // Inject the outage a few ticks ahead so its start is known exactly.
  std::int64_t start_tick = 0;
  for (int attempt = 0; attempt < 5 && start_tick == 0; ++attempt) {
    const std::int64_t tick = s.get("/healthz").second["sim"]["tick"];
    const auto [fs, fb] = s.post("/sim/faults", {{"kind", "downtime"},
                                                 {"component_id", "meter_aggregator"},
                                                 {"start_tick", tick + 20},
                                                 {"duration_ticks", 30'000 / tick_ms}});
    if (fs == 201) start_tick = tick + 20;
  }
  if (start_tick == 0) return {false, "fault injection was rejected"};
  const std::int64_t fault_start = epoch_ms + start_tick * tick_ms;
  const std::int64_t fault_end = fault_start + 30'000;
  poll_until(fault_end + 2 * window_ms + 10'000);

  auto mean_of = [&](auto member, std::int64_t from, std::int64_t to) {
    double sum = 0;
    int n = 0;
    for (const auto& x : samples) {
      if (x.ts >= from && x.ts <= to && (x.*member)) {
        sum += *(x.*member);
        ++n;
      }
    }
    return n ? std::optional<double>(sum / n) : std::nullopt;
  };

  // Baseline: the pre-fault period once the first window has filled.
  const auto base_a = mean_of(&KpiSample::availability, t0 + window_ms, fault_start - 1);
  const auto base_p = mean_of(&KpiSample::performance, t0 + window_ms, fault_start - 1);
  if (!base_a || !base_p) return {false, "no baseline scores"};

  const auto during_a = mean_of(&KpiSample::availability, fault_start + window_ms, fault_end);
  c.expect(during_a && *during_a <= *base_a - 0.2,
           "availability during fault " + (during_a ? fmt(*during_a) : "none") + " vs baseline " + fmt(*base_a));

  // Recovered from the first post-fault sample after which every sample
  // stays within tolerance.
  std::optional<std::int64_t> recovered_at;
  for (auto it = samples.rbegin(); it != samples.rend() && it->ts > fault_end; ++it) {
    if (!it->availability || std::abs(*it->availability - *base_a) > 0.05) break;
    recovered_at = it->ts;
  }
  c.expect(recovered_at && *recovered_at - fault_end <= 2 * window_ms,
           recovered_at ? "recovery took " + std::to_string(*recovered_at - fault_end) + " ms" : "never recovered");

  double worst_perf_dev = 0;
  for (const auto& x : samples) {
    if (x.ts < fault_start) continue;
    if (!x.performance) {
      c.expect(false, "performance unscored at " + std::to_string(x.ts));
      continue;
    }
    worst_perf_dev = std::max(worst_perf_dev, std::abs(*x.performance - *base_p));
  }
  c.expect(worst_perf_dev <= 0.05, "performance deviated by " + fmt(worst_perf_dev));

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  c.expect(wall < 30.0, "wall time " + fmt(wall, 1) + " s");
  return c.outcome("availability baseline " + fmt(*base_a) + ", during fault " + (during_a ? fmt(*during_a) : "-") +
                   ", recovered after " + (recovered_at ? std::to_string(*recovered_at - fault_end) : "-") +
                   " sim-ms; performance baseline " + fmt(*base_p) + ", max deviation " + fmt(worst_perf_dev) +
                   "; wall " + fmt(wall, 1) + " s");
}

Outcome cover_soundness() {
  Checker c;
  Rng rng(1001);
  int solved = 0, uncovered = 0;
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const auto inst = testsupport::random_match_instance(rng, 10);
    const auto want_uncovered = testsupport::oracle_uncovered(inst);
    try {
      const auto plan = match_probes(inst.metrics, inst.arch, inst.catalog);
      c.expect(want_uncovered.empty(), "plan produced although metrics are uncoverable");
      c.expect(plan.covered == testsupport::oracle_required_pairs(inst), "covered != required pairs");
      std::set<MetricPair> served;
      for (const auto& b : plan.bindings) {
        const auto* p = find_probe(inst.catalog, b.probe_id);
        c.expect(p && testsupport::oracle_applies(*p, *inst.arch.find(b.component_id)), "binding does not apply");
        for (const auto& m : b.metrics_served) served.insert({m, b.component_id});
      }
      c.expect(served == plan.covered, "served pairs != covered");
      const double opt = testsupport::oracle_optimal_cost(inst);
      const double cost = plan.total_cost(inst.catalog);
      c.expect(cost <= 2.0 * opt + 1e-9, "greedy " + fmt(cost) + " > 2x optimum " + fmt(opt));
      if (opt > 0) worst = std::max(worst, cost / opt);
      ++solved;
    } catch (const UncoveredMetrics& e) {
      c.expect(std::set<std::string>(e.metrics().begin(), e.metrics().end()) == want_uncovered,
               "reported uncovered set differs from brute force");
      c.expect(!want_uncovered.empty(), "spurious UncoveredMetrics");
      ++uncovered;
    }
  }
  return c.outcome("200 instances (" + std::to_string(solved) + " covered, " + std::to_string(uncovered) +
                   " uncovered), worst greedy/optimum " + fmt(worst));
}

Outcome reconciliation() {
  Checker c;
  Rng rng(1002);
  auto keys_of = [](const ProbePlan& p) {
    std::set<BindingKey> out;
    for (const auto& b : p.bindings) out.insert(b.key());
    return out;
  };
  for (int i = 0; i < 500; ++i) {
    testsupport::FakeExecutor fake;
    ExecutorRegistry reg{{ExecutorKind::simulated, &fake}};
    const auto p1 = testsupport::random_plan(rng);
    const auto p2 = testsupport::random_plan(rng);
    const auto s1 = apply_plan({}, p1, reg, 0);

    const auto d = diff_plans(s1, p2);
    std::map<BindingKey, ProbeBinding> old_b, new_b;
    for (const auto& b : p1.bindings) old_b[b.key()] = b;
    for (const auto& b : p2.bindings) new_b[b.key()] = b;
    std::set<BindingKey> stop, start, same;
    for (const auto& [k, b] : old_b) {
      if (!new_b.count(k) || !(new_b[k] == b)) stop.insert(k);
    }
    for (const auto& [k, b] : new_b) {
      if (!old_b.count(k) || !(old_b[k] == b)) {
        start.insert(k);
      } else {
        same.insert(k);
      }
    }
    std::set<BindingKey> got_start;
    for (const auto& b : d.to_start) got_start.insert(b.key());
    c.expect(std::set<BindingKey>(d.to_stop.begin(), d.to_stop.end()) == stop, "to_stop differs");
    c.expect(got_start == start, "to_start differs");
    c.expect(std::set<BindingKey>(d.unchanged.begin(), d.unchanged.end()) == same, "unchanged differs");

    const auto once = apply_plan(s1, p2, reg, 1);
    const auto twice = apply_plan(once, p2, reg, 2);
    c.expect(testsupport::status_view(once) == testsupport::status_view(twice), "double apply != single apply");
    const auto running = once.keys_with(ProbeStatus::running);
    c.expect(std::set<BindingKey>(running.begin(), running.end()) == keys_of(p2), "running keys != plan keys");
    c.expect(fake.running == keys_of(p2), "executor tasks != plan keys");
  }
  return c.outcome("500 random plan pairs");
}

Outcome score_algebra() {
  Checker c;
  Rng rng(1003);
  int monotone = 0;
  for (int i = 0; i < 300; ++i) {
    auto m = testsupport::random_model(rng);
    const auto comb = static_cast<Combinator>(i % 3);
    for (auto& [_, g] : m.goals) g.combinator = comb;
    auto values = testsupport::random_values(rng, m, 0.15);
    GoalSelection roots(m.roots.begin(), m.roots.end());
    const auto before = compute_scores(m, roots, values, 0);
    for (const auto& [id, n] : before.nodes) {
      if (n.score) c.expect(*n.score >= 0.0 && *n.score <= 1.0, "score of " + id + " out of [0,1]");
    }

    // Monotonicity.
    const auto& metric =
        std::next(m.metrics.begin(), rng.uniform_int(0, static_cast<int>(m.metrics.size()) - 1))->second;
    if (values[metric.id]) {
      auto improved = values;
      const double step = rng.uniform(0.01, 0.5) * (metric.norm_hi - metric.norm_lo);
      improved[metric.id] = *values[metric.id] + (metric.direction == Direction::higher_better ? step : -step);
      const auto after = compute_scores(m, roots, improved, 0);
      for (const auto& anc : testsupport::ancestors_of(m, metric.id)) {
        const auto& b = before.nodes.at(anc);
        if (!b.score) continue;
        c.expect(*after.nodes.at(anc).score >= *b.score - 1e-12, "improvement lowered " + anc);
        ++monotone;
      }
    }

    // Selection-order invariance.
    std::vector<std::string> ids;
    for (const auto& [id, _] : m.goals) {
      if (rng.coin()) ids.push_back(id);
    }
    GoalSelection forward(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng.gen);
    GoalSelection shuffled;
    for (const auto& id : ids) shuffled.insert(id);
    c.expect(compute_scores(m, forward, values, 0).nodes == compute_scores(m, shuffled, values, 0).nodes,
             "selection order changed scores");
    c.expect(resolve_goals(m, forward).entries == resolve_goals(m, shuffled).entries,
             "selection order changed resolution");

    // Missing-data locality.
    const auto victim =
        std::next(m.metrics.begin(), rng.uniform_int(0, static_cast<int>(m.metrics.size()) - 1))->first;
    auto thinned = values;
    thinned.erase(victim);
    const auto after = compute_scores(m, roots, thinned, 0);
    auto chain = testsupport::ancestors_of(m, victim);
    chain.insert(victim);
    for (const auto& [id, n] : before.nodes) {
      if (!chain.count(id)) c.expect(after.nodes.at(id) == n, "removing " + victim + " changed " + id);
    }
  }
  c.expect(monotone > 100, "too few monotonicity comparisons");
  return c.outcome("300 random models, all three combinators");
}

Outcome pipeline() {
  Checker c;
  Rng rng(1004);
  constexpr std::int64_t now0 = 50'000'000;
  const std::vector<Statistic> stats{Statistic::mean, Statistic::min,  Statistic::max,
                                     Statistic::p95,  Statistic::rate, Statistic::last};
  for (int i = 0; i < 300; ++i) {
    StoreConfig cfg;
    cfg.retention_seconds = rng.uniform_int(5, 120);
    SeriesStore store(cfg, {"m"}, {"c"});
    std::vector<TimedValue> accepted;
    const int n = rng.uniform_int(0, 200);
    for (int k = 0; k < n; ++k) {
      const std::int64_t ts = now0 - rng.uniform_int(0, 150'000) + rng.uniform_int(0, 6000);
      const double v = std::round(rng.uniform(-50, 50));
      if (store.ingest(Sample{"m", "c", ts, v}, now0).accepted) accepted.push_back({ts, v});
    }
    const std::int64_t now = now0 + rng.uniform_int(0, 30'000);
    const int window = rng.uniform_int(1, 150);
    for (auto st : stats) {
      const auto got = window_aggregate(store, "m", "c", window, st, now);
      const auto want = testsupport::oracle_statistic(accepted, window, st, now, cfg.retention_seconds);
      c.expect(got.has_value() == want.has_value() && (!got || std::abs(*got - *want) <= 1e-9 * (1 + std::abs(*want))),
               std::string("statistic ") + std::string(to_string(st)) + " differs from brute force");
    }
  }
  for (int i = 0; i < 200; ++i) {
    std::vector<Sample> samples;
    const int n = rng.uniform_int(1, 100);
    for (int k = 0; k < n; ++k) samples.push_back({"m", "c", now0 - rng.uniform_int(0, 20'000), rng.uniform(0, 1000) / 7.0});
    SeriesStore a({}, {"m"}, {"c"});
    for (const auto& x : samples) a.ingest(x, now0);
    std::shuffle(samples.begin(), samples.end(), rng.gen);
    SeriesStore b({}, {"m"}, {"c"});
    for (const auto& x : samples) b.ingest(x, now0);
    c.expect(a.snapshot("m", "c", now0) == b.snapshot("m", "c", now0), "stored order depends on arrival");
    for (auto st : stats) {
      c.expect(window_aggregate(a, "m", "c", 15, st, now0) == window_aggregate(b, "m", "c", 15, st, now0),
               std::string("statistic ") + std::string(to_string(st)) + " depends on arrival order");
    }
  }
  return c.outcome("300 brute-force sets, 200 shuffled ingests");
}

Outcome determinism() {
  Checker c;
  auto trajectory = [] {
    sim::SimConfig cfg;
    cfg.seed = 42;
    sim::Simulation s(cfg);
    std::vector<double> out;
    const std::vector<sim::Signal> signals{sim::Signal::up, sim::Signal::request_latency_ms,
                                           sim::Signal::served_requests_per_s, sim::Signal::offered_requests_per_s,
                                           sim::Signal::energy_reading_kwh};
    for (int t = 0; t < 1000; ++t) {
      for (const auto& id : s.component_ids()) {
        for (auto sig : signals) {
          if (sim::supports(*s.layer_of(id), sig)) out.push_back(s.observe(id, sig));
        }
      }
      s.step();
    }
    return out;
  };
  const auto a = trajectory();
  const auto b = trajectory();
  c.expect(!a.empty() && a == b, "seed-42 trajectories differ");

  std::vector<std::string> args{kBin, "plan", "--goals", "reliability,performance"};
  for (const auto& x : file_args()) args.push_back(x);
  const auto p1 = testsupport::run(args);
  const auto p2 = testsupport::run(args);
  c.expect(p1.exit_code == 0 && p2.exit_code == 0, "plan exited nonzero");
  c.expect(!p1.out.empty() && p1.out == p2.out, "plan output differs between runs");
  return c.outcome(std::to_string(a.size()) + " observations over 1000 ticks, plan " +
                   std::to_string(p1.out.size()) + " bytes");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"reliability decomposition", reliability_decomposition},
      {"end-to-end fault scenario", end_to_end},
      {"cover soundness and greedy quality", cover_soundness},
      {"reconciliation idempotence and convergence", reconciliation},
      {"score algebra", score_algebra},
      {"pipeline correctness", pipeline},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << " (" << fmt(secs, 2) << " s)" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
