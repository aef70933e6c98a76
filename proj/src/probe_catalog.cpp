#include "cloudhealth/probe_catalog.hpp"

#include <algorithm>
#include <json.hpp>

#include "json_util.hpp"

namespace cloudhealth {

using nlohmann::json;

std::string_view to_string(ExecutorKind k) {
  return k == ExecutorKind::simulated ? "simulated" : "local_process";
}

std::optional<ExecutorKind> parse_executor_kind(std::string_view s) {
  if (s == "simulated") return ExecutorKind::simulated;
  if (s == "local_process") return ExecutorKind::local_process;
  return std::nullopt;
}

std::string_view to_string(CatalogErrorKind k) {
  switch (k) {
    case CatalogErrorKind::syntax_error: return "SyntaxError";
    case CatalogErrorKind::duplicate_probe: return "DuplicateProbe";
    case CatalogErrorKind::empty_provides: return "EmptyProvides";
    case CatalogErrorKind::invalid_field: return "InvalidField";
  }
  return "?";
}

CatalogError::CatalogError(CatalogErrorKind kind, std::string subject, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + "(" + subject + "): " + message),
      kind_(kind),
      subject_(std::move(subject)) {}

namespace {

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ", ") + x;
  return out;
}

}  // namespace

UncoveredMetrics::UncoveredMetrics(std::vector<std::string> metrics)
    : std::runtime_error("UncoveredMetrics: " + join(metrics)), metrics_(std::move(metrics)) {}

UnresolvableConfig::UnresolvableConfig(std::string probe_id, std::string component_id, std::string key)
    : std::runtime_error("UnresolvableConfig: key '" + key + "' for probe " + probe_id + " on " +
                         component_id),
      probe_id_(std::move(probe_id)),
      component_id_(std::move(component_id)),
      key_(std::move(key)) {}

bool ProbeSelector::matches(const ComponentDescriptor& c) const {
  if (!layers.empty() && !layers.contains(c.layer)) return false;
  if (!kinds.empty() && !kinds.contains(c.kind)) return false;
  return std::all_of(tags.begin(), tags.end(), [&](const std::string& t) { return c.tags.contains(t); });
}

double ProbePlan::total_cost(const ProbeCatalog& catalog) const {
  double sum = 0.0;
  for (const auto& b : bindings) {
    if (const auto* p = find_probe(catalog, b.probe_id)) sum += p->cost;
  }
  return sum;
}

const ProbeDescriptor* find_probe(const ProbeCatalog& catalog, const std::string& id) {
  auto it = std::find_if(catalog.begin(), catalog.end(), [&](const auto& p) { return p.id == id; });
  return it == catalog.end() ? nullptr : &*it;
}

namespace {

std::set<std::string> string_set(const json& j, const char* key, const std::string& probe) {
  std::set<std::string> out;
  if (!j.contains(key)) return out;
  if (!j[key].is_array()) {
    throw CatalogError(CatalogErrorKind::invalid_field, probe, std::string("'") + key + "' must be an array");
  }
  for (const auto& v : j[key]) {
    if (!v.is_string()) {
      throw CatalogError(CatalogErrorKind::invalid_field, probe, std::string("'") + key + "' entries must be strings");
    }
    out.insert(v.get<std::string>());
  }
  return out;
}

ProbeDescriptor probe_from_json(const json& j) {
  auto bad = [](const std::string& subject) {
    return [subject](const std::string& m) { throw CatalogError(CatalogErrorKind::invalid_field, subject, m); };
  };
  if (!j.is_object()) bad("probe")("probe entries must be objects");

  ProbeDescriptor p;
  p.id = detail::require_string(j, "id", bad("probe"));
  auto fail = bad(p.id);
  p.provides = string_set(j, "provides", p.id);
  if (p.provides.empty()) throw CatalogError(CatalogErrorKind::empty_provides, p.id, "probe provides no metrics");

  if (j.contains("applies_to")) {
    const auto& sel = j["applies_to"];
    if (!sel.is_object()) fail("'applies_to' must be an object");
    for (const auto& l : string_set(sel, "layers", p.id)) {
      auto layer = parse_layer(l);
      if (!layer) fail("unknown layer '" + l + "'");
      p.applies_to.layers.insert(*layer);
    }
    p.applies_to.kinds = string_set(sel, "kinds", p.id);
    p.applies_to.tags = string_set(sel, "tags", p.id);
  }

  auto exec = detail::optional_string(j, "executor", fail).value_or("simulated");
  auto kind = parse_executor_kind(exec);
  if (!kind) fail("unknown executor '" + exec + "'");
  p.executor = *kind;

  if (j.contains("interval_seconds")) {
    if (!j["interval_seconds"].is_number_integer()) fail("'interval_seconds' must be an integer");
    p.interval_seconds = j["interval_seconds"].get<int>();
  }
  if (p.interval_seconds < 1) fail("'interval_seconds' must be >= 1");
  if (j.contains("cost")) p.cost = detail::require_number(j, "cost", fail);
  if (!(p.cost > 0.0)) fail("'cost' must be positive");
  p.config_keys = string_set(j, "config_keys", p.id);
  p.command = detail::optional_string(j, "command", fail).value_or("");
  if (p.executor == ExecutorKind::local_process && p.command.empty()) {
    fail("local_process probes need a 'command'");
  }
  return p;
}

std::optional<std::string> resolve_config_value(const ComponentDescriptor& c, const std::string& key) {
  if (key == "target") {
    if (c.endpoint) return c.endpoint->address;
    return std::nullopt;
  }
  if (key == "protocol") {
    if (c.endpoint) return std::string(to_string(c.endpoint->protocol));
    return std::nullopt;
  }
  if (key == "component") return c.id;
  if (key == "kind") return c.kind;
  if (key == "layer") return std::string(to_string(c.layer));
  return std::nullopt;
}

}  // namespace

ProbeCatalog load_catalog(std::string_view text) {
  // An empty (whitespace-only) file is an empty catalog.
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return {};

  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CatalogError(CatalogErrorKind::syntax_error,
                       "line " + std::to_string(detail::line_of_offset(text, e.byte)), e.what());
  }
  if (!doc.is_object()) throw CatalogError(CatalogErrorKind::invalid_field, "document", "top level must be an object");

  ProbeCatalog catalog;
  if (!doc.contains("probes")) return catalog;
  if (!doc["probes"].is_array()) throw CatalogError(CatalogErrorKind::invalid_field, "document", "'probes' must be an array");
  for (const auto& pj : doc["probes"]) {
    auto p = probe_from_json(pj);
    if (find_probe(catalog, p.id)) {
      throw CatalogError(CatalogErrorKind::duplicate_probe, p.id, "id declared more than once");
    }
    catalog.push_back(std::move(p));
  }
  return catalog;
}

std::string dump_catalog(const ProbeCatalog& catalog, int indent) {
  json probes = json::array();
  for (const auto& p : catalog) {
    json layers = json::array();
    for (auto l : p.applies_to.layers) layers.push_back(to_string(l));
    json pj{{"id", p.id},
            {"provides", p.provides},
            {"applies_to", {{"layers", layers}, {"kinds", p.applies_to.kinds}, {"tags", p.applies_to.tags}}},
            {"executor", to_string(p.executor)},
            {"interval_seconds", p.interval_seconds},
            {"cost", p.cost},
            {"config_keys", p.config_keys}};
    if (!p.command.empty()) pj["command"] = p.command;
    probes.push_back(std::move(pj));
  }
  return json{{"probes", probes}}.dump(indent);
}

std::set<MetricPair> required_pairs(const MetricSet& metrics, const ArchitectureDescriptor& arch,
                                    const ProbeCatalog& catalog) {
  std::set<MetricPair> out;
  for (const auto& [metric, _] : metrics.entries) {
    for (const auto& c : arch.components) {
      for (const auto& p : catalog) {
        if (p.provides.contains(metric) && p.applies_to.matches(c)) {
          out.emplace(metric, c.id);
          break;
        }
      }
    }
  }
  return out;
}

ProbePlan match_probes(const MetricSet& metrics, const ArchitectureDescriptor& arch,
                       const ProbeCatalog& catalog) {
  const auto required = required_pairs(metrics, arch, catalog);

  std::vector<std::string> uncovered;
  for (const auto& [metric, _] : metrics.entries) {
    auto it = required.lower_bound({metric, ""});
    if (it == required.end() || it->first != metric) uncovered.push_back(metric);
  }
  if (!uncovered.empty()) throw UncoveredMetrics(std::move(uncovered));

  std::vector<const ProbeDescriptor*> by_id;
  for (const auto& p : catalog) by_id.push_back(&p);
  std::sort(by_id.begin(), by_id.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  std::map<std::string, std::set<std::string>> needed;  // component -> metrics
  for (const auto& [metric, component] : required) needed[component].insert(metric);

  ProbePlan plan;
  for (auto& [component_id, remaining] : needed) {
    const auto& component = *arch.find(component_id);
    std::vector<const ProbeDescriptor*> candidates;
    for (const auto* p : by_id) {
      if (p->applies_to.matches(component)) candidates.push_back(p);
    }

    while (!remaining.empty()) {
      const ProbeDescriptor* best = nullptr;
      std::size_t best_gain = 0;
      for (const auto* p : candidates) {
        std::size_t gain = 0;
        for (const auto& m : remaining) gain += p->provides.contains(m) ? 1 : 0;
        if (gain == 0) continue;
        // gain/cost against best_gain/best_cost without division. Equal
        // ratios prefer the larger gain, then the earlier (smaller) id.
        const double lhs = static_cast<double>(gain) * (best ? best->cost : 0.0);
        const double rhs = static_cast<double>(best_gain) * p->cost;
        if (!best || lhs > rhs || (lhs == rhs && gain > best_gain)) {
          best = p;
          best_gain = gain;
        }
      }
      // Every remaining pair is required, so some candidate provides it.
      ProbeBinding b;
      b.probe_id = best->id;
      b.component_id = component_id;
      b.executor = best->executor;
      b.interval_seconds = best->interval_seconds;
      b.command = best->command;
      for (auto it = remaining.begin(); it != remaining.end();) {
        if (best->provides.contains(*it)) {
          b.metrics_served.insert(*it);
          plan.covered.emplace(*it, component_id);
          it = remaining.erase(it);
        } else {
          ++it;
        }
      }
      for (const auto& key : best->config_keys) {
        auto value = resolve_config_value(component, key);
        if (!value) throw UnresolvableConfig(best->id, component_id, key);
        b.config[key] = *value;
      }
      plan.bindings.push_back(std::move(b));
    }
  }
  return plan;
}

std::string dump_plan(const ProbePlan& plan, int indent) {
  json bindings = json::array();
  for (const auto& b : plan.bindings) {
    bindings.push_back({{"probe", b.probe_id},
                        {"component", b.component_id},
                        {"metrics", b.metrics_served},
                        {"config", b.config},
                        {"executor", to_string(b.executor)},
                        {"interval_seconds", b.interval_seconds}});
  }
  json covered = json::array();
  for (const auto& [m, c] : plan.covered) covered.push_back({{"metric", m}, {"component", c}});
  return json{{"bindings", bindings}, {"covered", covered}}.dump(indent);
}

}  // namespace cloudhealth
