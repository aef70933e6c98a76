#pragma once

// Hierarchical monitoring model: goals decompose into sub-goals and finally
// into measurable metric leaves. Scores roll up from normalized leaf values
// through each goal's combinator.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cloudhealth {

enum class Direction { higher_better, lower_better };
enum class Statistic { mean, min, max, p95, rate, last };
enum class Combinator { weighted_mean, min, max };
// How per-component aggregates of one metric are merged into a single value.
enum class CrossComponentRule { mean, worst_case };
enum class Status { ok, degraded, critical, unknown };

std::string_view to_string(Direction d);
std::string_view to_string(Statistic s);
std::string_view to_string(Combinator c);
std::string_view to_string(CrossComponentRule r);
std::string_view to_string(Status s);

std::optional<Direction> parse_direction(std::string_view s);
std::optional<Statistic> parse_statistic(std::string_view s);
std::optional<Combinator> parse_combinator(std::string_view s);
std::optional<CrossComponentRule> parse_cross_component_rule(std::string_view s);

struct MetricDef {
  std::string id;
  std::string name;
  std::string description;
  std::string unit;
  Direction direction = Direction::higher_better;
  double norm_lo = 0.0;
  double norm_hi = 1.0;
  int window_seconds = 60;
  Statistic statistic = Statistic::mean;
  CrossComponentRule aggregation = CrossComponentRule::mean;
};

struct GoalNode {
  std::string id;
  std::string name;
  std::vector<std::string> children;
  std::vector<double> weights;
  Combinator combinator = Combinator::weighted_mean;
};

struct StatusBands {
  double ok = 0.8;
  double degraded = 0.5;
};

struct QualityModel {
  std::string version;
  std::vector<std::string> roots;
  std::map<std::string, GoalNode> goals;
  std::map<std::string, MetricDef> metrics;
  StatusBands bands;

  bool is_goal(const std::string& id) const { return goals.contains(id); }
  bool is_metric(const std::string& id) const { return metrics.contains(id); }
  const GoalNode* goal(const std::string& id) const;
  const MetricDef* metric(const std::string& id) const;
  // Parent goal id of a node, if any. Assumes a valid (strict tree) model.
  std::optional<std::string> parent_of(const std::string& id) const;
};

using GoalSelection = std::set<std::string>;

// metric id -> selected goal ids through which the metric was reached.
struct MetricSet {
  std::map<std::string, std::set<std::string>> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
  bool contains(const std::string& metric_id) const { return entries.contains(metric_id); }
};

struct NodeScore {
  std::optional<double> score;
  Status status = Status::unknown;
  std::optional<double> raw;
  double confidence = 0.0;
  bool is_metric = false;

  friend bool operator==(const NodeScore&, const NodeScore&) = default;
};

struct ScoreReport {
  std::int64_t timestamp_ms = 0;
  std::map<std::string, NodeScore> nodes;
};

enum class ModelErrorKind {
  syntax_error,
  duplicate_id,
  dangling_reference,
  cycle_detected,
  multiple_parents,
  non_metric_leaf,
  invalid_field,
  unknown_goal,
};

std::string_view to_string(ModelErrorKind k);

class ModelError : public std::runtime_error {
 public:
  ModelError(ModelErrorKind kind, std::string subject, std::string message, int line = 0);

  ModelErrorKind kind() const noexcept { return kind_; }
  const std::string& subject() const noexcept { return subject_; }
  // 1-based line of a syntax error; 0 otherwise.
  int line() const noexcept { return line_; }

 private:
  ModelErrorKind kind_;
  std::string subject_;
  int line_;
};

enum class ViolationRule {
  DuplicateId,
  DuplicateChild,
  DanglingReference,
  MultipleParents,
  CycleDetected,
  NonMetricLeaf,
  UnknownRoot,
  RootHasParent,
  WeightsLengthMismatch,
  NegativeWeight,
  ZeroWeightSum,
  InvalidBounds,
  InvalidWindow,
  InvalidStatusBands,
};

std::string_view to_string(ViolationRule r);

struct Violation {
  ViolationRule rule;
  std::string id;
  std::string detail;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Parses a model document (JSON syntax) and rejects anything that violates
/// the tree invariants. Throws ModelError.
QualityModel parse_model(std::string_view text);

/// Checks every structural invariant; an empty result means the model is a
/// well-formed forest whose reachable leaves are all metrics.
std::vector<Violation> validate_model(const QualityModel& model);

/// Serializes back to the model file format.
std::string dump_model(const QualityModel& model, int indent = 2);

/// Metric leaves under each selected goal, with the selected goals they were
/// reached through. Throws ModelError(unknown_goal).
MetricSet resolve_goals(const QualityModel& model, const GoalSelection& selection);

/// Linear map of `raw` onto [0,1] between the metric's bounds, oriented by
/// direction and clamped.
double normalize_metric(const MetricDef& def, double raw);

Status status_for(const StatusBands& bands, std::optional<double> score);

/// Every node of every selected subtree, scored bottom-up. Leaves with no
/// value are unknown and drop out of their parent's combination; weighted
/// means renormalize over the present children.
ScoreReport compute_scores(const QualityModel& model, const GoalSelection& selection,
                           const std::map<std::string, std::optional<double>>& values,
                           std::int64_t timestamp_ms);

/// All node ids (goals and metrics) in the subtree rooted at `id`, including it.
std::vector<std::string> subtree_nodes(const QualityModel& model, const std::string& id);

}  // namespace cloudhealth
