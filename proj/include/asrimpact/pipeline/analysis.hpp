#pragma once

// Metric scoring of curated examples, metric-versus-label analysis and the
// final report with agreement, correlation, enrichment and judge sections.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asrimpact/core/model.hpp"
#include "asrimpact/core/serialize.hpp"
#include "asrimpact/judge/judge.hpp"
#include "asrimpact/metrics/metrics.hpp"
#include "asrimpact/pipeline/config.hpp"
#include "asrimpact/stats/stats.hpp"

namespace asrimpact::pipeline {

struct ScoreRow {
  std::string example_id;
  std::vector<metrics::MetricResult> results;
};

Json to_json_value(const metrics::MetricResult& r);
metrics::MetricResult metric_result_from_json(const Json& j);
Json to_json_value(const ScoreRow& row);
ScoreRow score_row_from_json(const Json& j);

// Names accepted in the metrics selection.
std::vector<std::string> builtin_metric_names();

// Scores every example with the configured metrics and scorers. Rows keep the
// input order and do not depend on the thread count.
std::vector<ScoreRow> score_examples(const std::vector<LabeledExample>& examples, const PipelineConfig& config);

struct MetricAnalysis {
  std::string name;
  metrics::MetricFamily family = metrics::MetricFamily::edit_distance;
  std::size_t n = 0;
  std::array<std::size_t, kNumLabels> per_class_n{};
  // NaN for an empty class.
  std::array<double, kNumLabels> per_class_mean{};
  double enrichment_delta = 0.0;
  stats::Interval enrichment_ci;
  stats::TauResult tau;
  stats::Interval tau_ci;
};

// One entry per metric, on the normalized scores of labelled examples.
// Failed results are skipped. Throws InputError when nothing is labelled.
std::vector<MetricAnalysis> analyze_scores(const std::vector<ScoreRow>& rows, const std::map<std::string, int>& labels,
                                           const stats::BootstrapOptions& bootstrap);

Json to_json_value(const MetricAnalysis& a);

// Labels by example id from a JSON-lines file of labelled examples or the
// annotation service export document. Unlabelled entries are skipped.
std::map<std::string, int> load_gold_labels(const std::filesystem::path& path);

// Agreement for every pair of annotators with shared examples.
struct AnnotatorPair {
  std::string a;
  std::string b;
  stats::AgreementReport report;
};
std::vector<AnnotatorPair> pairwise_agreement(const std::vector<AnnotationRecord>& records,
                                              const stats::BootstrapOptions& bootstrap);

struct ReportInputs {
  std::optional<std::filesystem::path> analysis;
  std::optional<std::filesystem::path> annotations;
  std::optional<std::filesystem::path> verdicts;
  std::optional<std::filesystem::path> gold;
  // Sections that must be present; empty means whatever the inputs allow.
  std::vector<std::string> required;
};

struct Report {
  Json document;
  // File name -> CSV contents.
  std::map<std::string, std::string> tables;
};

inline const std::vector<std::string> kReportSections = {"agreement", "correlations", "enrichment_deltas",
                                                         "classification"};

// Throws InputError naming every required section whose inputs are absent.
Report build_report(const ReportInputs& inputs, const PipelineConfig& config, const Json& provenance);

}  // namespace asrimpact::pipeline
