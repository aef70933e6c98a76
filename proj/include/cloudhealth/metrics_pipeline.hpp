#pragma once

// In-memory windowed time series for probe samples, plus the join with the
// quality model that produces score reports.

#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cloudhealth/quality_model.hpp"

namespace cloudhealth {

struct Sample {
  std::string metric_id;
  std::string component_id;
  std::int64_t timestamp_ms = 0;
  double value = 0.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct TimedValue {
  std::int64_t timestamp_ms = 0;
  double value = 0.0;

  friend auto operator<=>(const TimedValue&, const TimedValue&) = default;
};

enum class RejectReason { stale, future, unknown_metric, unknown_component, non_finite, malformed };

std::string_view to_string(RejectReason r);

struct IngestResult {
  bool accepted = false;
  std::optional<RejectReason> reason;
};

struct StoreConfig {
  int retention_seconds = 3600;
  std::size_t series_capacity = 100000;
  std::int64_t clock_skew_ms = 5000;
};

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SeriesStore {
 public:
  SeriesStore(StoreConfig config, std::set<std::string> metric_ids, std::set<std::string> component_ids);

  SeriesStore(const SeriesStore&) = delete;
  SeriesStore& operator=(const SeriesStore&) = delete;

  const StoreConfig& config() const noexcept { return config_; }

  /// Validates ids and timestamp against `now`, then inserts in (timestamp,
  /// value) order. Rejections are counted per reason.
  IngestResult ingest(const Sample& sample, std::int64_t now_ms);
  void count_rejection(RejectReason reason);

  /// Retained samples of one series (timestamp >= now - retention), sorted.
  std::vector<TimedValue> snapshot(const std::string& metric_id, const std::string& component_id,
                                   std::int64_t now_ms) const;

  /// Retained samples with from <= timestamp <= to.
  std::vector<TimedValue> query(const std::string& metric_id, const std::string& component_id,
                                std::int64_t from_ms, std::int64_t to_ms, std::int64_t now_ms) const;

  /// Components that have a series for `metric_id`, sorted.
  std::vector<std::string> components_for(const std::string& metric_id) const;

  bool knows_metric(const std::string& id) const { return metric_ids_.contains(id); }
  bool knows_component(const std::string& id) const { return component_ids_.contains(id); }

  std::uint64_t accepted_count() const;
  std::map<RejectReason, std::uint64_t> rejection_counts() const;

 private:
  struct Series {
    mutable std::mutex mu;
    std::deque<TimedValue> points;
  };
  using Key = std::pair<std::string, std::string>;

  Series* find_series(const Key& key) const;
  Series& series_for(const Key& key);
  std::int64_t retention_cutoff(std::int64_t now_ms) const;

  StoreConfig config_;
  std::set<std::string> metric_ids_;
  std::set<std::string> component_ids_;

  mutable std::shared_mutex map_mu_;
  std::map<Key, std::unique_ptr<Series>> series_;

  mutable std::mutex counter_mu_;
  std::uint64_t accepted_ = 0;
  std::map<RejectReason, std::uint64_t> rejected_;
};

/// Statistic over the points with timestamp in (now - window, now]. Points
/// must be sorted by timestamp. Absent when the window holds no points.
std::optional<double> aggregate_points(std::span<const TimedValue> points, int window_seconds,
                                       Statistic statistic, std::int64_t now_ms);

/// Throws PipelineError when window_seconds < 1.
std::optional<double> window_aggregate(const SeriesStore& store, const std::string& metric_id,
                                       const std::string& component_id, int window_seconds,
                                       Statistic statistic, std::int64_t now_ms);

/// Per-component aggregate with the metric's own window and statistic,
/// merged across components by the metric's cross-component rule.
std::optional<double> metric_value(const SeriesStore& store, const QualityModel& model,
                                   const std::string& metric_id, std::int64_t now_ms);

ScoreReport compute_kpis(const SeriesStore& store, const QualityModel& model,
                         const GoalSelection& selection, std::int64_t now_ms);

// Wire format: one JSON object per line,
// {"metric":"<id>","component":"<id>","ts":<epoch_ms>,"value":<number>}
std::optional<Sample> parse_sample_line(std::string_view line);
std::string format_sample_line(const Sample& sample);

struct IngestCounts {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// Ingests a newline-delimited batch. Blank lines are skipped; lines that do
/// not parse count as rejected(malformed). `on_accept` runs for each
/// accepted sample.
IngestCounts ingest_ndjson(SeriesStore& store, std::string_view body, std::int64_t now_ms,
                           const std::function<void(const Sample&)>& on_accept = {});

/// Append-only log of accepted samples in the wire format.
class SampleLog {
 public:
  explicit SampleLog(const std::string& path);
  void append(const Sample& sample);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

std::vector<Sample> read_sample_log(const std::string& path);

}  // namespace cloudhealth
