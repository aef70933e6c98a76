#pragma once

// Probe catalog and the matcher that turns a resolved metric set into a
// concrete deployment plan of probe -> component bindings.

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cloudhealth/architecture.hpp"
#include "cloudhealth/quality_model.hpp"

namespace cloudhealth {

enum class ExecutorKind { simulated, local_process };

std::string_view to_string(ExecutorKind k);
std::optional<ExecutorKind> parse_executor_kind(std::string_view s);

// Conjunctive: every non-empty field must match. An empty selector matches
// every component.
struct ProbeSelector {
  std::set<Layer> layers;
  std::set<std::string> kinds;
  std::set<std::string> tags;  // component must carry all of them

  bool matches(const ComponentDescriptor& c) const;
};

struct ProbeDescriptor {
  std::string id;
  std::set<std::string> provides;
  ProbeSelector applies_to;
  ExecutorKind executor = ExecutorKind::simulated;
  int interval_seconds = 1;
  double cost = 1.0;
  std::set<std::string> config_keys;
  std::string command;  // local_process only
};

using ProbeCatalog = std::vector<ProbeDescriptor>;

// (probe_id, component_id)
using BindingKey = std::pair<std::string, std::string>;
// (metric_id, component_id)
using MetricPair = std::pair<std::string, std::string>;

struct ProbeBinding {
  std::string probe_id;
  std::string component_id;
  std::set<std::string> metrics_served;
  std::map<std::string, std::string> config;
  ExecutorKind executor = ExecutorKind::simulated;
  int interval_seconds = 1;
  std::string command;

  BindingKey key() const { return {probe_id, component_id}; }
  friend bool operator==(const ProbeBinding&, const ProbeBinding&) = default;
};

struct ProbePlan {
  std::vector<ProbeBinding> bindings;
  std::set<MetricPair> covered;

  double total_cost(const ProbeCatalog& catalog) const;
};

enum class CatalogErrorKind { syntax_error, duplicate_probe, empty_provides, invalid_field };

std::string_view to_string(CatalogErrorKind k);

class CatalogError : public std::runtime_error {
 public:
  CatalogError(CatalogErrorKind kind, std::string subject, const std::string& message);

  CatalogErrorKind kind() const noexcept { return kind_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  CatalogErrorKind kind_;
  std::string subject_;
};

class UncoveredMetrics : public std::runtime_error {
 public:
  explicit UncoveredMetrics(std::vector<std::string> metrics);
  const std::vector<std::string>& metrics() const noexcept { return metrics_; }

 private:
  std::vector<std::string> metrics_;
};

class UnresolvableConfig : public std::runtime_error {
 public:
  UnresolvableConfig(std::string probe_id, std::string component_id, std::string key);
  const std::string& probe_id() const noexcept { return probe_id_; }
  const std::string& component_id() const noexcept { return component_id_; }
  const std::string& key() const noexcept { return key_; }

 private:
  std::string probe_id_;
  std::string component_id_;
  std::string key_;
};

/// Throws CatalogError.
ProbeCatalog load_catalog(std::string_view text);

std::string dump_catalog(const ProbeCatalog& catalog, int indent = 2);

const ProbeDescriptor* find_probe(const ProbeCatalog& catalog, const std::string& id);

/// Every (metric, component) pair that some catalog probe could measure.
std::set<MetricPair> required_pairs(const MetricSet& metrics, const ArchitectureDescriptor& arch,
                                    const ProbeCatalog& catalog);

/// Per-component greedy weighted set cover over the required pairs. Picks the
/// probe with the best newly-covered/cost ratio; equal ratios go to the
/// larger gain, then to the smallest probe id. Throws UncoveredMetrics when some metric has no applicable probe on
/// any component, UnresolvableConfig when a binding's config keys cannot be
/// filled from the component.
ProbePlan match_probes(const MetricSet& metrics, const ArchitectureDescriptor& arch,
                       const ProbeCatalog& catalog);

std::string dump_plan(const ProbePlan& plan, int indent = 2);

}  // namespace cloudhealth
