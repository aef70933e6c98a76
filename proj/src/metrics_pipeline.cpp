#include "cloudhealth/metrics_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

namespace cloudhealth {

using nlohmann::json;

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::stale: return "stale";
    case RejectReason::future: return "future";
    case RejectReason::unknown_metric: return "unknown_metric";
    case RejectReason::unknown_component: return "unknown_component";
    case RejectReason::non_finite: return "non_finite";
    case RejectReason::malformed: return "malformed";
  }
  return "?";
}

SeriesStore::SeriesStore(StoreConfig config, std::set<std::string> metric_ids,
                         std::set<std::string> component_ids)
    : config_(config), metric_ids_(std::move(metric_ids)), component_ids_(std::move(component_ids)) {
  if (config_.retention_seconds < 1) throw PipelineError("retention_seconds must be >= 1");
  if (config_.series_capacity < 1) throw PipelineError("series_capacity must be >= 1");
}

std::int64_t SeriesStore::retention_cutoff(std::int64_t now_ms) const {
  return now_ms - static_cast<std::int64_t>(config_.retention_seconds) * 1000;
}

SeriesStore::Series* SeriesStore::find_series(const Key& key) const {
  std::shared_lock lock(map_mu_);
  auto it = series_.find(key);
  return it == series_.end() ? nullptr : it->second.get();
}

SeriesStore::Series& SeriesStore::series_for(const Key& key) {
  if (auto* s = find_series(key)) return *s;
  std::unique_lock lock(map_mu_);
  auto& slot = series_[key];
  if (!slot) slot = std::make_unique<Series>();
  return *slot;
}

void SeriesStore::count_rejection(RejectReason reason) {
  std::lock_guard lock(counter_mu_);
  ++rejected_[reason];
}

IngestResult SeriesStore::ingest(const Sample& sample, std::int64_t now_ms) {
  auto reject = [&](RejectReason r) {
    count_rejection(r);
    return IngestResult{false, r};
  };
  if (!metric_ids_.contains(sample.metric_id)) return reject(RejectReason::unknown_metric);
  if (!component_ids_.contains(sample.component_id)) return reject(RejectReason::unknown_component);
  if (!std::isfinite(sample.value)) return reject(RejectReason::non_finite);
  const auto cutoff = retention_cutoff(now_ms);
  if (sample.timestamp_ms < cutoff) return reject(RejectReason::stale);
  if (sample.timestamp_ms > now_ms + config_.clock_skew_ms) return reject(RejectReason::future);

  auto& series = series_for({sample.metric_id, sample.component_id});
  {
    std::lock_guard lock(series.mu);
    auto& pts = series.points;
    while (!pts.empty() && pts.front().timestamp_ms < cutoff) pts.pop_front();
    const TimedValue tv{sample.timestamp_ms, sample.value};
    pts.insert(std::upper_bound(pts.begin(), pts.end(), tv), tv);
    while (pts.size() > config_.series_capacity) pts.pop_front();
  }
  std::lock_guard lock(counter_mu_);
  ++accepted_;
  return {true, std::nullopt};
}

std::vector<TimedValue> SeriesStore::snapshot(const std::string& metric_id,
                                              const std::string& component_id,
                                              std::int64_t now_ms) const {
  auto* series = find_series({metric_id, component_id});
  if (!series) return {};
  const auto cutoff = retention_cutoff(now_ms);
  std::lock_guard lock(series->mu);
  auto first = std::find_if(series->points.begin(), series->points.end(),
                            [&](const TimedValue& p) { return p.timestamp_ms >= cutoff; });
  return {first, series->points.end()};
}

std::vector<TimedValue> SeriesStore::query(const std::string& metric_id, const std::string& component_id,
                                           std::int64_t from_ms, std::int64_t to_ms,
                                           std::int64_t now_ms) const {
  std::vector<TimedValue> out;
  for (const auto& p : snapshot(metric_id, component_id, now_ms)) {
    if (p.timestamp_ms >= from_ms && p.timestamp_ms <= to_ms) out.push_back(p);
  }
  return out;
}

std::vector<std::string> SeriesStore::components_for(const std::string& metric_id) const {
  std::vector<std::string> out;
  std::shared_lock lock(map_mu_);
  for (auto it = series_.lower_bound({metric_id, ""}); it != series_.end() && it->first.first == metric_id; ++it) {
    out.push_back(it->first.second);
  }
  return out;
}

std::uint64_t SeriesStore::accepted_count() const {
  std::lock_guard lock(counter_mu_);
  return accepted_;
}

std::map<RejectReason, std::uint64_t> SeriesStore::rejection_counts() const {
  std::lock_guard lock(counter_mu_);
  return rejected_;
}

std::optional<double> aggregate_points(std::span<const TimedValue> points, int window_seconds,
                                       Statistic statistic, std::int64_t now_ms) {
  if (window_seconds < 1) throw PipelineError("InvalidWindow: window_seconds must be >= 1");
  const std::int64_t lo = now_ms - static_cast<std::int64_t>(window_seconds) * 1000;

  std::vector<double> values;
  double last = 0.0;
  for (const auto& p : points) {
    if (p.timestamp_ms <= lo || p.timestamp_ms > now_ms) continue;
    values.push_back(p.value);
    last = p.value;
  }
  if (values.empty()) return std::nullopt;

  switch (statistic) {
    case Statistic::mean: {
      double sum = 0.0;
      for (double v : values) sum += v;
      return sum / static_cast<double>(values.size());
    }
    case Statistic::min: return *std::min_element(values.begin(), values.end());
    case Statistic::max: return *std::max_element(values.begin(), values.end());
    case Statistic::p95: {
      // Nearest rank: the ceil(0.95 n)-th smallest value.
      std::sort(values.begin(), values.end());
      const std::size_t rank = (95 * values.size() + 99) / 100;
      return values[rank - 1];
    }
    case Statistic::rate: return static_cast<double>(values.size()) / window_seconds;
    case Statistic::last: return last;
  }
  return std::nullopt;
}

std::optional<double> window_aggregate(const SeriesStore& store, const std::string& metric_id,
                                       const std::string& component_id, int window_seconds,
                                       Statistic statistic, std::int64_t now_ms) {
  if (window_seconds < 1) throw PipelineError("InvalidWindow: window_seconds must be >= 1");
  const auto points = store.snapshot(metric_id, component_id, now_ms);
  return aggregate_points(points, window_seconds, statistic, now_ms);
}

std::optional<double> metric_value(const SeriesStore& store, const QualityModel& model,
                                   const std::string& metric_id, std::int64_t now_ms) {
  const auto* def = model.metric(metric_id);
  if (!def) throw PipelineError("UnknownMetric: " + metric_id);

  std::vector<double> per_component;
  for (const auto& component : store.components_for(metric_id)) {
    if (auto v = window_aggregate(store, metric_id, component, def->window_seconds, def->statistic, now_ms)) {
      per_component.push_back(*v);
    }
  }
  if (per_component.empty()) return std::nullopt;

  if (def->aggregation == CrossComponentRule::worst_case) {
    return def->direction == Direction::higher_better
               ? *std::min_element(per_component.begin(), per_component.end())
               : *std::max_element(per_component.begin(), per_component.end());
  }
  double sum = 0.0;
  for (double v : per_component) sum += v;
  return sum / static_cast<double>(per_component.size());
}

ScoreReport compute_kpis(const SeriesStore& store, const QualityModel& model,
                         const GoalSelection& selection, std::int64_t now_ms) {
  const auto metrics = resolve_goals(model, selection);
  std::map<std::string, std::optional<double>> values;
  for (const auto& [metric_id, _] : metrics.entries) {
    values[metric_id] = metric_value(store, model, metric_id, now_ms);
  }
  return compute_scores(model, selection, values, now_ms);
}

std::optional<Sample> parse_sample_line(std::string_view line) {
  auto j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (!j.is_object()) return std::nullopt;
  if (!j.contains("metric") || !j["metric"].is_string()) return std::nullopt;
  if (!j.contains("component") || !j["component"].is_string()) return std::nullopt;
  if (!j.contains("ts") || !j["ts"].is_number()) return std::nullopt;
  if (!j.contains("value") || !j["value"].is_number()) return std::nullopt;
  Sample s;
  s.metric_id = j["metric"].get<std::string>();
  s.component_id = j["component"].get<std::string>();
  s.timestamp_ms = j["ts"].is_number_integer() ? j["ts"].get<std::int64_t>()
                                               : static_cast<std::int64_t>(j["ts"].get<double>());
  s.value = j["value"].get<double>();
  return s;
}

std::string format_sample_line(const Sample& sample) {
  json j{{"metric", sample.metric_id}, {"component", sample.component_id}, {"ts", sample.timestamp_ms},
         {"value", sample.value}};
  return j.dump();
}

IngestCounts ingest_ndjson(SeriesStore& store, std::string_view body, std::int64_t now_ms,
                           const std::function<void(const Sample&)>& on_accept) {
  IngestCounts counts;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    auto end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    auto line = body.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    auto sample = parse_sample_line(line);
    if (!sample) {
      store.count_rejection(RejectReason::malformed);
      ++counts.rejected;
      continue;
    }
    if (store.ingest(*sample, now_ms).accepted) {
      ++counts.accepted;
      if (on_accept) on_accept(*sample);
    } else {
      ++counts.rejected;
    }
  }
  return counts;
}

SampleLog::SampleLog(const std::string& path) : out_(path, std::ios::app) {
  if (!out_) throw PipelineError("cannot open sample log " + path);
}

void SampleLog::append(const Sample& sample) {
  std::lock_guard lock(mu_);
  out_ << format_sample_line(sample) << '\n';
  out_.flush();
}

std::vector<Sample> read_sample_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot open sample log " + path);
  std::vector<Sample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto s = parse_sample_line(line)) out.push_back(std::move(*s));
  }
  return out;
}

}  // namespace cloudhealth
