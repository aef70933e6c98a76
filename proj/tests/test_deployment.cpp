#include <doctest.h>

#include "cloudhealth/deployment.hpp"
#include "support/generators.hpp"

using namespace cloudhealth;
using testsupport::FakeExecutor;
using testsupport::Rng;

namespace {

ProbeBinding binding(const std::string& probe, const std::string& component, const std::string& target = "t") {
  ProbeBinding b;
  b.probe_id = probe;
  b.component_id = component;
  b.metrics_served = {"m"};
  b.config = {{"target", target}};
  return b;
}

ProbePlan plan_of(std::vector<ProbeBinding> bindings) {
  ProbePlan p;
  p.bindings = std::move(bindings);
  for (const auto& b : p.bindings) {
    for (const auto& m : b.metrics_served) p.covered.insert({m, b.component_id});
  }
  return p;
}

std::set<BindingKey> keys_of(const ProbePlan& p) {
  std::set<BindingKey> out;
  for (const auto& b : p.bindings) out.insert(b.key());
  return out;
}

template <class C>
std::set<BindingKey> as_set(const C& c) {
  return std::set<BindingKey>(c.begin(), c.end());
}

}  // namespace

TEST_CASE("diff_plans examples") {
  FakeExecutor fake;
  ExecutorRegistry reg{{ExecutorKind::simulated, &fake}};
  const auto four = plan_of({binding("a", "1"), binding("b", "1"), binding("a", "2"), binding("b", "2")});

  SUBCASE("empty current starts everything") {
    const auto d = diff_plans({}, four);
    CHECK(d.to_start.size() == 4);
    CHECK(d.to_stop.empty());
    CHECK(d.unchanged.empty());
  }
  SUBCASE("equal plans are all unchanged") {
    const auto s = apply_plan({}, four, reg, 0);
    const auto d = diff_plans(s, four);
    CHECK(d.to_start.empty());
    CHECK(d.to_stop.empty());
    CHECK(d.unchanged.size() == 4);
  }
  SUBCASE("removing one of three bindings") {
    const auto three = plan_of({binding("a", "1"), binding("b", "1"), binding("c", "1")});
    const auto s = apply_plan({}, three, reg, 0);
    const auto d = diff_plans(s, plan_of({binding("a", "1"), binding("c", "1")}));
    CHECK(d.to_stop == std::vector<BindingKey>{{"b", "1"}});
    CHECK(as_set(d.unchanged) == std::set<BindingKey>{{"a", "1"}, {"c", "1"}});
    CHECK(d.to_start.empty());
  }
  SUBCASE("changed config restarts the binding") {
    const auto s = apply_plan({}, plan_of({binding("a", "1", "x")}), reg, 0);
    const auto d = diff_plans(s, plan_of({binding("a", "1", "y")}));
    CHECK(d.to_stop == std::vector<BindingKey>{{"a", "1"}});
    REQUIRE(d.to_start.size() == 1);
    CHECK(d.to_start[0].config.at("target") == "y");
    CHECK(d.unchanged.empty());
  }
}

TEST_CASE("apply_plan examples") {
  FakeExecutor fake;
  ExecutorRegistry reg{{ExecutorKind::simulated, &fake}};
  const auto p = plan_of({binding("a", "1"), binding("b", "1")});

  SUBCASE("idempotent on keys and status") {
    const auto once = apply_plan({}, p, reg, 0);
    const auto twice = apply_plan(once, p, reg, 10);
    CHECK(testsupport::status_view(once) == testsupport::status_view(twice));
    CHECK(fake.launches == 2);
  }
  SUBCASE("single binding runs with a heartbeat") {
    const auto s = apply_plan({}, plan_of({binding("a", "1")}), reg, 1234);
    const auto& e = s.entries.at({"a", "1"});
    CHECK(e.status == ProbeStatus::running);
    CHECK(e.last_heartbeat == std::optional<std::int64_t>(1234));
    CHECK(e.retries_left == kDefaultRetries);
  }
  SUBCASE("one failed launch does not abort the rest") {
    fake.fail = {{"a", "1"}};
    const auto s = apply_plan({}, p, reg, 0);
    CHECK(s.entries.at({"a", "1"}).status == ProbeStatus::failed);
    CHECK_FALSE(s.entries.at({"a", "1"}).last_error.empty());
    CHECK_FALSE(s.entries.at({"a", "1"}).last_heartbeat.has_value());
    CHECK(s.entries.at({"b", "1"}).status == ProbeStatus::running);
  }
  SUBCASE("unknown executor throws before changing anything") {
    auto q = p;
    q.bindings[1].executor = ExecutorKind::local_process;
    CHECK_THROWS_AS(apply_plan({}, q, reg, 0), UnknownExecutor);
    CHECK(fake.launches == 0);
  }
  SUBCASE("removed bindings are stopped and kept as stopped") {
    const auto s1 = apply_plan({}, p, reg, 0);
    PlanDiff d;
    const auto s2 = apply_plan(s1, plan_of({binding("b", "1")}), reg, 5, &d);
    CHECK(d.to_stop == std::vector<BindingKey>{{"a", "1"}});
    CHECK(s2.entries.at({"a", "1"}).status == ProbeStatus::stopped);
    CHECK(fake.running == std::set<BindingKey>{{"b", "1"}});
    // Bringing it back starts it again.
    const auto s3 = apply_plan(s2, p, reg, 6);
    CHECK(s3.entries.at({"a", "1"}).status == ProbeStatus::running);
  }
}

TEST_CASE("supervise examples") {
  FakeExecutor fake;
  ExecutorRegistry reg{{ExecutorKind::simulated, &fake}};
  const auto s = apply_plan({}, plan_of({binding("a", "1")}), reg, 0);

  CHECK(supervise(s, 5000, 30).entries.at({"a", "1"}).status == ProbeStatus::running);
  CHECK(supervise(s, 30000, 30).entries.at({"a", "1"}).status == ProbeStatus::running);
  const auto failed = supervise(s, 31000, 30);
  CHECK(failed.entries.at({"a", "1"}).status == ProbeStatus::failed);
  CHECK_FALSE(failed.entries.at({"a", "1"}).last_heartbeat.has_value());

  // Backoff, then back to pending with one retry spent.
  CHECK(supervise(failed, 31000 + kRetryBackoffMs - 1, 30).entries.at({"a", "1"}).status == ProbeStatus::failed);
  const auto retry = supervise(failed, 31000 + kRetryBackoffMs, 30);
  CHECK(retry.entries.at({"a", "1"}).status == ProbeStatus::pending);
  CHECK(retry.entries.at({"a", "1"}).retries_left == kDefaultRetries - 1);

  auto exhausted = failed;
  exhausted.entries.at({"a", "1"}).retries_left = 0;
  CHECK(supervise(exhausted, 10'000'000, 30).entries.at({"a", "1"}).status == ProbeStatus::failed);
}

TEST_CASE("reconciler retries a failing launch three times, then gives up") {
  FakeExecutor fake;
  fake.fail = {{"a", "1"}};
  Reconciler r({{ExecutorKind::simulated, &fake}}, 30);
  r.apply(plan_of({binding("a", "1")}), 0);
  std::int64_t now = 0;
  for (int i = 0; i < 10; ++i) {
    now += kRetryBackoffMs;
    r.supervise(now);
  }
  CHECK(fake.launches == 1 + kDefaultRetries);
  const auto e = r.snapshot().entries.at({"a", "1"});
  CHECK(e.status == ProbeStatus::failed);
  CHECK(e.retries_left == 0);
}

TEST_CASE("reconciler heartbeats keep probes alive; silence restarts them") {
  FakeExecutor fake;
  Reconciler r({{ExecutorKind::simulated, &fake}}, 30);
  r.apply(plan_of({binding("a", "1"), binding("b", "2")}), 0);
  for (std::int64_t t = 1000; t <= 60000; t += 1000) {
    r.heartbeat_for("m", "1", t);
    r.supervise(t);
  }
  auto s = r.snapshot();
  CHECK(s.entries.at({"a", "1"}).status == ProbeStatus::running);
  // b went silent at 31 s, was stopped, then relaunched after the backoff.
  CHECK(fake.stops == 1);
  CHECK(fake.launches == 3);
  CHECK(s.entries.at({"b", "2"}).status == ProbeStatus::running);
  CHECK(s.entries.at({"b", "2"}).retries_left == kDefaultRetries - 1);
}

// ---------------------------------------------------------------------------
// Properties over random plan pairs.

TEST_CASE("property: diff equals brute-force set difference") {
  Rng rng(31);
  FakeExecutor fake;
  ExecutorRegistry reg{{ExecutorKind::simulated, &fake}};
  for (int i = 0; i < 500; ++i) {
    const auto p1 = testsupport::random_plan(rng);
    const auto p2 = testsupport::random_plan(rng);
    const auto s = apply_plan({}, p1, reg, 0);
    const auto d = diff_plans(s, p2);

    std::map<BindingKey, ProbeBinding> old_b, new_b;
    for (const auto& b : p1.bindings) old_b[b.key()] = b;
    for (const auto& b : p2.bindings) new_b[b.key()] = b;
    std::set<BindingKey> stop, start, same;
    for (const auto& [k, b] : old_b) {
      if (!new_b.count(k)) stop.insert(k);
    }
    for (const auto& [k, b] : new_b) {
      if (!old_b.count(k)) {
        start.insert(k);
      } else if (old_b[k] == b) {
        same.insert(k);
      } else {
        stop.insert(k);
        start.insert(k);
      }
    }
    std::set<BindingKey> got_start;
    for (const auto& b : d.to_start) got_start.insert(b.key());
    CHECK(as_set(d.to_stop) == stop);
    CHECK(got_start == start);
    CHECK(as_set(d.unchanged) == same);
    // to_start and unchanged partition the desired keys.
    std::set<BindingKey> u = got_start;
    u.insert(d.unchanged.begin(), d.unchanged.end());
    CHECK(u == keys_of(p2));
    CHECK(got_start.size() + d.unchanged.size() == keys_of(p2).size());
  }
}

TEST_CASE("property: idempotence, convergence, no orphans") {
  Rng rng(32);
  for (int i = 0; i < 500; ++i) {
    FakeExecutor fake;
    ExecutorRegistry reg{{ExecutorKind::simulated, &fake}};
    const auto p1 = testsupport::random_plan(rng);
    const auto p2 = testsupport::random_plan(rng);
    const auto s1 = apply_plan({}, p1, reg, 0);
    const auto once = apply_plan(s1, p2, reg, 1);
    const auto twice = apply_plan(once, p2, reg, 2);
    CHECK(testsupport::status_view(once) == testsupport::status_view(twice));

    const auto running = once.keys_with(ProbeStatus::running);
    CHECK(as_set(running) == keys_of(p2));
    CHECK(fake.running == keys_of(p2));
    for (const auto& [k, e] : once.entries) {
      CHECK(e.last_heartbeat.has_value() == (e.status == ProbeStatus::running));
    }
  }
}

TEST_CASE("property: launch failures are contained") {
  Rng rng(33);
  for (int i = 0; i < 300; ++i) {
    FakeExecutor fake;
    ExecutorRegistry reg{{ExecutorKind::simulated, &fake}};
    const auto p = testsupport::random_plan(rng);
    for (const auto& b : p.bindings) {
      if (rng.coin(0.3)) fake.fail.insert(b.key());
    }
    const auto s = apply_plan({}, p, reg, 0);
    for (const auto& b : p.bindings) {
      const auto expected = fake.fail.count(b.key()) ? ProbeStatus::failed : ProbeStatus::running;
      CHECK(s.entries.at(b.key()).status == expected);
    }
    CHECK(s.entries.size() == p.bindings.size());
  }
}
