#include "cloudhealth/quality_model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <json.hpp>

#include "json_util.hpp"

namespace cloudhealth {

using nlohmann::json;

std::string_view to_string(Direction d) {
  return d == Direction::higher_better ? "higher_better" : "lower_better";
}

std::string_view to_string(Statistic s) {
  switch (s) {
    case Statistic::mean: return "mean";
    case Statistic::min: return "min";
    case Statistic::max: return "max";
    case Statistic::p95: return "p95";
    case Statistic::rate: return "rate";
    case Statistic::last: return "last";
  }
  return "?";
}

std::string_view to_string(Combinator c) {
  switch (c) {
    case Combinator::weighted_mean: return "weighted_mean";
    case Combinator::min: return "min";
    case Combinator::max: return "max";
  }
  return "?";
}

std::string_view to_string(CrossComponentRule r) {
  return r == CrossComponentRule::mean ? "mean" : "worst_case";
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::ok: return "ok";
    case Status::degraded: return "degraded";
    case Status::critical: return "critical";
    case Status::unknown: return "unknown";
  }
  return "?";
}

std::optional<Direction> parse_direction(std::string_view s) {
  if (s == "higher_better") return Direction::higher_better;
  if (s == "lower_better") return Direction::lower_better;
  return std::nullopt;
}

std::optional<Statistic> parse_statistic(std::string_view s) {
  for (auto st : {Statistic::mean, Statistic::min, Statistic::max, Statistic::p95, Statistic::rate,
                  Statistic::last}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

std::optional<Combinator> parse_combinator(std::string_view s) {
  for (auto c : {Combinator::weighted_mean, Combinator::min, Combinator::max}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::optional<CrossComponentRule> parse_cross_component_rule(std::string_view s) {
  if (s == "mean") return CrossComponentRule::mean;
  if (s == "worst_case") return CrossComponentRule::worst_case;
  return std::nullopt;
}

std::string_view to_string(ModelErrorKind k) {
  switch (k) {
    case ModelErrorKind::syntax_error: return "SyntaxError";
    case ModelErrorKind::duplicate_id: return "DuplicateId";
    case ModelErrorKind::dangling_reference: return "DanglingReference";
    case ModelErrorKind::cycle_detected: return "CycleDetected";
    case ModelErrorKind::multiple_parents: return "MultipleParents";
    case ModelErrorKind::non_metric_leaf: return "NonMetricLeaf";
    case ModelErrorKind::invalid_field: return "InvalidField";
    case ModelErrorKind::unknown_goal: return "UnknownGoal";
  }
  return "?";
}

std::string_view to_string(ViolationRule r) {
  switch (r) {
    case ViolationRule::DuplicateId: return "DuplicateId";
    case ViolationRule::DuplicateChild: return "DuplicateChild";
    case ViolationRule::DanglingReference: return "DanglingReference";
    case ViolationRule::MultipleParents: return "MultipleParents";
    case ViolationRule::CycleDetected: return "CycleDetected";
    case ViolationRule::NonMetricLeaf: return "NonMetricLeaf";
    case ViolationRule::UnknownRoot: return "UnknownRoot";
    case ViolationRule::RootHasParent: return "RootHasParent";
    case ViolationRule::WeightsLengthMismatch: return "WeightsLengthMismatch";
    case ViolationRule::NegativeWeight: return "NegativeWeight";
    case ViolationRule::ZeroWeightSum: return "ZeroWeightSum";
    case ViolationRule::InvalidBounds: return "InvalidBounds";
    case ViolationRule::InvalidWindow: return "InvalidWindow";
    case ViolationRule::InvalidStatusBands: return "InvalidStatusBands";
  }
  return "?";
}

ModelError::ModelError(ModelErrorKind kind, std::string subject, std::string message, int line)
    : std::runtime_error(std::string(to_string(kind)) + "(" + subject + "): " + message),
      kind_(kind),
      subject_(std::move(subject)),
      line_(line) {}

const GoalNode* QualityModel::goal(const std::string& id) const {
  auto it = goals.find(id);
  return it == goals.end() ? nullptr : &it->second;
}

const MetricDef* QualityModel::metric(const std::string& id) const {
  auto it = metrics.find(id);
  return it == metrics.end() ? nullptr : &it->second;
}

std::optional<std::string> QualityModel::parent_of(const std::string& id) const {
  for (const auto& [gid, g] : goals) {
    if (std::find(g.children.begin(), g.children.end(), id) != g.children.end()) return gid;
  }
  return std::nullopt;
}

namespace {

[[noreturn]] void invalid(const std::string& subject, const std::string& msg) {
  throw ModelError(ModelErrorKind::invalid_field, subject, msg);
}

GoalNode goal_from_json(const json& j) {
  GoalNode g;
  g.id = detail::require_string(j, "id", [](const std::string& m) { invalid("goal", m); });
  auto fail = [&](const std::string& m) { invalid(g.id, m); };
  g.name = detail::optional_string(j, "name", fail).value_or(g.id);
  if (!j.contains("children") || !j["children"].is_array()) fail("'children' must be an array");
  for (const auto& c : j["children"]) {
    if (!c.is_string()) fail("child ids must be strings");
    g.children.push_back(c.get<std::string>());
  }
  if (j.contains("weights")) {
    if (!j["weights"].is_array()) fail("'weights' must be an array");
    for (const auto& w : j["weights"]) {
      if (!w.is_number()) fail("weights must be numbers");
      g.weights.push_back(w.get<double>());
    }
  } else {
    g.weights.assign(g.children.size(), 1.0);
  }
  if (auto c = detail::optional_string(j, "combinator", fail)) {
    auto parsed = parse_combinator(*c);
    if (!parsed) fail("unknown combinator '" + *c + "'");
    g.combinator = *parsed;
  }
  return g;
}

MetricDef metric_from_json(const json& j) {
  MetricDef m;
  m.id = detail::require_string(j, "id", [](const std::string& msg) { invalid("metric", msg); });
  auto fail = [&](const std::string& msg) { invalid(m.id, msg); };
  m.name = detail::optional_string(j, "name", fail).value_or(m.id);
  m.description = detail::optional_string(j, "description", fail).value_or("");
  m.unit = detail::optional_string(j, "unit", fail).value_or("");
  auto dir = detail::require_string(j, "direction", fail);
  auto d = parse_direction(dir);
  if (!d) fail("unknown direction '" + dir + "'");
  m.direction = *d;
  m.norm_lo = detail::require_number(j, "norm_lo", fail);
  m.norm_hi = detail::require_number(j, "norm_hi", fail);
  if (!j.contains("window_seconds") || !j["window_seconds"].is_number_integer()) {
    fail("'window_seconds' must be an integer");
  }
  m.window_seconds = j["window_seconds"].get<int>();
  auto st = detail::require_string(j, "statistic", fail);
  auto s = parse_statistic(st);
  if (!s) fail("unknown statistic '" + st + "'");
  m.statistic = *s;
  if (auto agg = detail::optional_string(j, "aggregation", fail)) {
    auto r = parse_cross_component_rule(*agg);
    if (!r) fail("unknown aggregation '" + *agg + "'");
    m.aggregation = *r;
  }
  return m;
}

ModelErrorKind error_kind_for(ViolationRule r) {
  switch (r) {
    case ViolationRule::DuplicateId:
    case ViolationRule::DuplicateChild: return ModelErrorKind::duplicate_id;
    case ViolationRule::DanglingReference:
    case ViolationRule::UnknownRoot: return ModelErrorKind::dangling_reference;
    case ViolationRule::MultipleParents:
    case ViolationRule::RootHasParent: return ModelErrorKind::multiple_parents;
    case ViolationRule::CycleDetected: return ModelErrorKind::cycle_detected;
    case ViolationRule::NonMetricLeaf: return ModelErrorKind::non_metric_leaf;
    default: return ModelErrorKind::invalid_field;
  }
}

}  // namespace

QualityModel parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    int line = detail::line_of_offset(text, e.byte);
    throw ModelError(ModelErrorKind::syntax_error, "line " + std::to_string(line), e.what(), line);
  }
  if (!doc.is_object()) invalid("document", "top level must be an object");

  QualityModel model;
  auto fail_doc = [](const std::string& m) { invalid("document", m); };
  model.version = detail::optional_string(doc, "version", fail_doc).value_or("");
  if (doc.contains("roots")) {
    if (!doc["roots"].is_array()) fail_doc("'roots' must be an array");
    for (const auto& r : doc["roots"]) {
      if (!r.is_string()) fail_doc("root ids must be strings");
      model.roots.push_back(r.get<std::string>());
    }
  }
  if (doc.contains("status_bands")) {
    const auto& b = doc["status_bands"];
    if (!b.is_object()) fail_doc("'status_bands' must be an object");
    if (b.contains("ok")) model.bands.ok = detail::require_number(b, "ok", fail_doc);
    if (b.contains("degraded")) model.bands.degraded = detail::require_number(b, "degraded", fail_doc);
  }

  std::set<std::string> seen;
  auto claim = [&](const std::string& id) {
    if (!seen.insert(id).second) {
      throw ModelError(ModelErrorKind::duplicate_id, id, "id declared more than once");
    }
  };
  for (const char* key : {"goals", "metrics"}) {
    if (doc.contains(key) && !doc[key].is_array()) fail_doc(std::string("'") + key + "' must be an array");
  }
  if (doc.contains("goals")) {
    for (const auto& gj : doc["goals"]) {
      if (!gj.is_object()) fail_doc("goal entries must be objects");
      auto g = goal_from_json(gj);
      claim(g.id);
      model.goals.emplace(g.id, std::move(g));
    }
  }
  if (doc.contains("metrics")) {
    for (const auto& mj : doc["metrics"]) {
      if (!mj.is_object()) fail_doc("metric entries must be objects");
      auto m = metric_from_json(mj);
      claim(m.id);
      model.metrics.emplace(m.id, std::move(m));
    }
  }

  auto violations = validate_model(model);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw ModelError(error_kind_for(v.rule), v.id, v.detail);
  }
  return model;
}

std::vector<Violation> validate_model(const QualityModel& model) {
  std::vector<Violation> out;
  auto add = [&](ViolationRule r, const std::string& id, std::string detail) {
    out.push_back({r, id, std::move(detail)});
  };

  for (const auto& [id, _] : model.metrics) {
    if (model.goals.contains(id)) add(ViolationRule::DuplicateId, id, "used by both a goal and a metric");
  }

  std::map<std::string, std::vector<std::string>> parents;
  for (const auto& [gid, g] : model.goals) {
    if (g.children.empty()) {
      add(ViolationRule::NonMetricLeaf, gid, "goal has no children");
    }
    std::set<std::string> distinct;
    for (const auto& c : g.children) {
      if (!distinct.insert(c).second) {
        add(ViolationRule::DuplicateChild, gid, "child '" + c + "' listed twice");
        continue;
      }
      if (!model.is_goal(c) && !model.is_metric(c)) {
        add(ViolationRule::DanglingReference, gid, "child '" + c + "' does not resolve");
        continue;
      }
      parents[c].push_back(gid);
    }
    if (g.weights.size() != g.children.size()) {
      add(ViolationRule::WeightsLengthMismatch, gid,
          std::to_string(g.weights.size()) + " weights for " + std::to_string(g.children.size()) +
              " children");
    } else {
      double sum = 0.0;
      bool negative = false;
      for (double w : g.weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) negative = true;
        sum += w;
      }
      if (negative) {
        add(ViolationRule::NegativeWeight, gid, "weights must be finite and non-negative");
      } else if (g.combinator == Combinator::weighted_mean && !(sum > 0.0) && !g.children.empty()) {
        add(ViolationRule::ZeroWeightSum, gid, "weighted_mean needs a positive weight sum");
      }
    }
  }

  for (const auto& [child, ps] : parents) {
    if (ps.size() > 1) {
      std::string list;
      for (const auto& p : ps) list += (list.empty() ? "" : ", ") + p;
      add(ViolationRule::MultipleParents, child, "parents: " + list);
    }
  }

  // Goal-to-goal edges only; metrics are always leaves.
  enum class Mark { white, grey, black };
  std::map<std::string, Mark> mark;
  std::vector<std::string> path;
  std::function<void(const std::string&)> visit = [&](const std::string& id) {
    mark[id] = Mark::grey;
    path.push_back(id);
    for (const auto& c : model.goals.at(id).children) {
      if (!model.is_goal(c)) continue;
      auto m = mark[c];
      if (m == Mark::grey) {
        auto start = std::find(path.begin(), path.end(), c);
        std::string cycle;
        for (auto it = start; it != path.end(); ++it) cycle += *it + " -> ";
        cycle += c;
        add(ViolationRule::CycleDetected, c, cycle);
      } else if (m == Mark::white) {
        visit(c);
      }
    }
    path.pop_back();
    mark[id] = Mark::black;
  };
  for (const auto& [gid, _] : model.goals) {
    if (mark[gid] == Mark::white) visit(gid);
  }

  std::set<std::string> root_set;
  for (const auto& r : model.roots) {
    if (!root_set.insert(r).second) {
      add(ViolationRule::DuplicateId, r, "root listed twice");
      continue;
    }
    if (!model.is_goal(r)) {
      add(ViolationRule::UnknownRoot, r, "root does not resolve to a goal");
    } else if (parents.contains(r)) {
      add(ViolationRule::RootHasParent, r, "root is also a child of '" + parents[r].front() + "'");
    }
  }

  for (const auto& [mid, m] : model.metrics) {
    if (!(m.norm_lo < m.norm_hi) || !std::isfinite(m.norm_lo) || !std::isfinite(m.norm_hi)) {
      add(ViolationRule::InvalidBounds, mid, "norm_lo must be below norm_hi");
    }
    if (m.window_seconds < 1) add(ViolationRule::InvalidWindow, mid, "window_seconds must be >= 1");
  }

  const auto& b = model.bands;
  if (!(0.0 <= b.degraded && b.degraded <= b.ok && b.ok <= 1.0)) {
    add(ViolationRule::InvalidStatusBands, "status_bands", "need 0 <= degraded <= ok <= 1");
  }
  return out;
}

std::string dump_model(const QualityModel& model, int indent) {
  json doc;
  doc["version"] = model.version;
  doc["status_bands"] = {{"ok", model.bands.ok}, {"degraded", model.bands.degraded}};
  doc["roots"] = model.roots;
  doc["goals"] = json::array();
  for (const auto& [_, g] : model.goals) {
    doc["goals"].push_back({{"id", g.id},
                            {"name", g.name},
                            {"children", g.children},
                            {"weights", g.weights},
                            {"combinator", to_string(g.combinator)}});
  }
  doc["metrics"] = json::array();
  for (const auto& [_, m] : model.metrics) {
    doc["metrics"].push_back({{"id", m.id},
                              {"name", m.name},
                              {"description", m.description},
                              {"unit", m.unit},
                              {"direction", to_string(m.direction)},
                              {"norm_lo", m.norm_lo},
                              {"norm_hi", m.norm_hi},
                              {"window_seconds", m.window_seconds},
                              {"statistic", to_string(m.statistic)},
                              {"aggregation", to_string(m.aggregation)}});
  }
  return doc.dump(indent);
}

MetricSet resolve_goals(const QualityModel& model, const GoalSelection& selection) {
  MetricSet out;
  for (const auto& sel : selection) {
    if (!model.is_goal(sel)) {
      throw ModelError(ModelErrorKind::unknown_goal, sel, "not a goal of the model");
    }
    std::vector<std::string> stack{sel};
    std::set<std::string> visited;
    while (!stack.empty()) {
      auto id = std::move(stack.back());
      stack.pop_back();
      if (!visited.insert(id).second) continue;
      if (const auto* g = model.goal(id)) {
        for (const auto& c : g->children) stack.push_back(c);
      } else if (model.is_metric(id)) {
        out.entries[id].insert(sel);
      }
    }
  }
  return out;
}

double normalize_metric(const MetricDef& def, double raw) {
  if (std::isnan(raw)) return 0.0;
  double t = (raw - def.norm_lo) / (def.norm_hi - def.norm_lo);
  if (def.direction == Direction::lower_better) t = 1.0 - t;
  return std::clamp(t, 0.0, 1.0);
}

Status status_for(const StatusBands& bands, std::optional<double> score) {
  if (!score) return Status::unknown;
  if (*score >= bands.ok) return Status::ok;
  if (*score >= bands.degraded) return Status::degraded;
  return Status::critical;
}

std::vector<std::string> subtree_nodes(const QualityModel& model, const std::string& id) {
  std::vector<std::string> out;
  std::set<std::string> visited;
  std::vector<std::string> stack{id};
  while (!stack.empty()) {
    auto cur = std::move(stack.back());
    stack.pop_back();
    if (!visited.insert(cur).second) continue;
    out.push_back(cur);
    if (const auto* g = model.goal(cur)) {
      for (auto it = g->children.rbegin(); it != g->children.rend(); ++it) stack.push_back(*it);
    }
  }
  return out;
}

ScoreReport compute_scores(const QualityModel& model, const GoalSelection& selection,
                           const std::map<std::string, std::optional<double>>& values,
                           std::int64_t timestamp_ms) {
  for (const auto& sel : selection) {
    if (!model.is_goal(sel)) {
      throw ModelError(ModelErrorKind::unknown_goal, sel, "not a goal of the model");
    }
  }

  ScoreReport report;
  report.timestamp_ms = timestamp_ms;

  std::function<const NodeScore&(const std::string&)> score_of =
      [&](const std::string& id) -> const NodeScore& {
    if (auto it = report.nodes.find(id); it != report.nodes.end()) return it->second;

    NodeScore ns;
    if (const auto* m = model.metric(id)) {
      ns.is_metric = true;
      auto v = values.find(id);
      if (v != values.end() && v->second && std::isfinite(*v->second)) {
        ns.raw = *v->second;
        ns.score = normalize_metric(*m, *v->second);
        ns.confidence = 1.0;
      }
    } else {
      const auto& g = model.goals.at(id);
      double total_weight = 0.0;
      for (double w : g.weights) total_weight += w;
      const bool uniform = !(total_weight > 0.0);

      double present_weight = 0.0;
      double weighted_sum = 0.0;
      std::optional<double> extreme;
      double confidence = 0.0;
      for (std::size_t i = 0; i < g.children.size(); ++i) {
        const NodeScore& child = score_of(g.children[i]);
        const double w = uniform ? 1.0 : g.weights[i];
        const double share = uniform ? 1.0 / static_cast<double>(g.children.size()) : w / total_weight;
        confidence += share * child.confidence;
        if (!child.score) continue;
        const double s = *child.score;
        switch (g.combinator) {
          case Combinator::weighted_mean:
            present_weight += w;
            weighted_sum += w * s;
            break;
          case Combinator::min:
            extreme = extreme ? std::min(*extreme, s) : s;
            break;
          case Combinator::max:
            extreme = extreme ? std::max(*extreme, s) : s;
            break;
        }
      }
      if (g.combinator == Combinator::weighted_mean) {
        if (present_weight > 0.0) ns.score = std::clamp(weighted_sum / present_weight, 0.0, 1.0);
      } else {
        ns.score = extreme;
      }
      ns.confidence = std::clamp(confidence, 0.0, 1.0);
    }
    ns.status = status_for(model.bands, ns.score);
    return report.nodes.emplace(id, ns).first->second;
  };

  for (const auto& sel : selection) score_of(sel);
  return report;
}

}  // namespace cloudhealth
