#include "asrimpact/pipeline/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include "asrimpact/core/digest.hpp"
#include "asrimpact/core/parallel.hpp"
#include "asrimpact/core/random.hpp"

namespace asrimpact::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string file_contents(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EnvironmentError("cannot read '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json interval_json(const stats::Interval& i) { return Json::array({i.low, i.high}); }

std::string cell(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string cell(const Json& v) {
  if (v.is_null()) return "NA";
  if (v.is_number()) return cell(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

double json_number(const Json& v) { return v.is_number() ? v.get<double>() : kNaN; }

// Statistic of a resample, NaN when undefined on it.
template <typename Fn>
double or_nan(Fn&& fn) {
  try {
    return fn();
  } catch (const stats::StatsError&) {
    return kNaN;
  }
}

}  // namespace

Json to_json_value(const metrics::MetricResult& r) {
  Json j{{"name", r.name},
         {"family", metrics::to_string(r.family)},
         {"raw", r.raw},
         {"normalized", r.normalized},
         {"degenerate", r.degenerate},
         {"failed", r.failed}};
  if (r.failed) j["error"] = r.error;
  return j;
}

metrics::MetricResult metric_result_from_json(const Json& j) {
  metrics::MetricResult r;
  r.name = j.at("name").get<std::string>();
  r.family = metrics::metric_family_from_string(j.at("family").get<std::string>());
  r.raw = json_number(j.at("raw"));
  r.normalized = json_number(j.at("normalized"));
  r.degenerate = j.value("degenerate", false);
  r.failed = j.value("failed", false);
  r.error = j.value("error", std::string());
  return r;
}

Json to_json_value(const ScoreRow& row) {
  Json results = Json::array();
  for (const auto& r : row.results) results.push_back(to_json_value(r));
  return Json{{"example_id", row.example_id}, {"metrics", results}};
}

ScoreRow score_row_from_json(const Json& j) {
  ScoreRow row;
  row.example_id = j.at("example_id").get<std::string>();
  for (const auto& r : j.at("metrics")) row.results.push_back(metric_result_from_json(r));
  return row;
}

std::vector<std::string> builtin_metric_names() {
  std::vector<std::string> names;
  for (const auto& r : metrics::score_all("a", "a", {})) names.push_back(r.name);
  names.push_back("swer");
  return names;
}

std::vector<ScoreRow> score_examples(const std::vector<LabeledExample>& examples, const PipelineConfig& config) {
  std::vector<std::unique_ptr<metrics::SemanticScorer>> owned;
  std::vector<const metrics::SemanticScorer*> scorers;
  bool concurrent = true;
  for (const auto& name : config.scorers) {
    try {
      owned.push_back(metrics::make_scorer(name));
    } catch (const std::invalid_argument& e) {
      throw InputError(std::string("metrics.scorers: ") + e.what());
    }
    scorers.push_back(owned.back().get());
    concurrent = concurrent && owned.back()->concurrent_safe();
  }
  std::set<std::string> known;
  for (const auto& n : builtin_metric_names()) known.insert(n);
  for (const auto* s : scorers) known.insert(s->name());
  for (const auto& n : config.metrics) {
    if (!known.count(n)) throw InputError("metrics.names: unknown metric '" + n + "'");
  }
  const std::set<std::string> wanted(config.metrics.begin(), config.metrics.end());
  const auto cfg = config.curation.filter_non_lexical ? config.metrics_normalization() : config.standard_normalization();

  std::vector<ScoreRow> rows(examples.size());
  parallel_for(examples.size(), concurrent ? config.threads : 1, [&](std::size_t i) {
    rows[i].example_id = examples[i].id;
    for (auto& r : metrics::score_all(examples[i].gold_final, examples[i].hyp_final, scorers, cfg)) {
      if (wanted.empty() || wanted.count(r.name)) rows[i].results.push_back(std::move(r));
    }
  });
  return rows;
}

std::vector<MetricAnalysis> analyze_scores(const std::vector<ScoreRow>& rows, const std::map<std::string, int>& labels,
                                           const stats::BootstrapOptions& bootstrap) {
  std::vector<std::string> order;
  std::map<std::string, metrics::MetricFamily> families;
  std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> data;
  std::size_t labelled = 0;
  for (const auto& row : rows) {
    auto it = labels.find(row.example_id);
    if (it != labels.end()) ++labelled;
    for (const auto& r : row.results) {
      if (!families.count(r.name)) {
        order.push_back(r.name);
        families[r.name] = r.family;
      }
      if (it == labels.end() || r.failed || !std::isfinite(r.normalized)) continue;
      data[r.name].first.push_back(r.normalized);
      data[r.name].second.push_back(it->second);
    }
  }
  if (labelled == 0) throw InputError("no scored example has a gold label");

  std::vector<MetricAnalysis> out;
  std::uint64_t stream = 0;
  for (const auto& name : order) {
    MetricAnalysis a;
    a.name = name;
    a.family = families[name];
    const auto& [scores, ys] = data[name];
    a.n = scores.size();
    std::array<double, kNumLabels> sums{};
    for (std::size_t i = 0; i < scores.size(); ++i) {
      sums[static_cast<std::size_t>(ys[i])] += scores[i];
      ++a.per_class_n[static_cast<std::size_t>(ys[i])];
    }
    for (int c = 0; c < kNumLabels; ++c) {
      a.per_class_mean[c] = a.per_class_n[c] ? sums[c] / static_cast<double>(a.per_class_n[c]) : kNaN;
    }
    a.enrichment_delta = or_nan([&] { return stats::enrichment_delta(scores, ys); });
    a.tau = a.n >= 2 ? stats::kendall_tau(scores, ys) : stats::TauResult{kNaN, true, 0, 0, 0, 0};

    auto options = bootstrap;
    options.seed = substream_seed(bootstrap.seed, ++stream);
    auto resample = [&](std::span<const std::size_t> idx, bool tau) {
      std::vector<double> s;
      std::vector<int> y;
      for (auto i : idx) {
        s.push_back(scores[i]);
        y.push_back(ys[i]);
      }
      return or_nan([&] { return tau ? stats::kendall_tau(s, y).tau : stats::enrichment_delta(s, y); });
    };
    if (a.n >= 2) {
      a.enrichment_ci = stats::bootstrap_ci(a.n, [&](auto idx) { return resample(idx, false); }, options);
      a.tau_ci = stats::bootstrap_ci(a.n, [&](auto idx) { return resample(idx, true); }, options);
    } else {
      a.enrichment_ci = a.tau_ci = {kNaN, kNaN};
    }
    out.push_back(std::move(a));
  }
  return out;
}

Json to_json_value(const MetricAnalysis& a) {
  return Json{{"metric", a.name},
              {"family", metrics::to_string(a.family)},
              {"n", a.n},
              {"per_class_n", a.per_class_n},
              {"per_class_mean", a.per_class_mean},
              {"enrichment_delta", a.enrichment_delta},
              {"enrichment_ci", interval_json(a.enrichment_ci)},
              {"kendall_tau_b", a.tau.tau},
              {"tau_degenerate", a.tau.degenerate},
              {"tau_ci", interval_json(a.tau_ci)}};
}

std::map<std::string, int> load_gold_labels(const fs::path& path) {
  const std::string text = file_contents(path);
  std::map<std::string, int> out;
  auto take = [&](const Json& j, const std::string& where) {
    LabeledExample e;
    try {
      e = j.get<LabeledExample>();
    } catch (const std::exception& ex) {
      throw InputError(where + ": " + ex.what());
    }
    if (e.label) out[e.id] = *e.label;
  };
  // The service export is one document; everything else is JSON lines.
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      const Json doc = Json::parse(text);
      if (doc.contains("examples") && doc.at("examples").is_array()) {
        for (const auto& e : doc.at("examples")) take(e, path.string());
        return out;
      }
    } catch (const nlohmann::json::parse_error&) {
    }
  }
  std::istringstream in(text);
  try {
    read_jsonl(in, [&](const Json& j, int line) { take(j, path.string() + ":" + std::to_string(line)); });
  } catch (const SchemaError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return out;
}

std::vector<AnnotatorPair> pairwise_agreement(const std::vector<AnnotationRecord>& records,
                                              const stats::BootstrapOptions& bootstrap) {
  // Last record wins per (example, annotator).
  std::map<std::string, std::map<std::string, int>> by_annotator;
  for (const auto& r : records) by_annotator[r.annotator_id][r.example_id] = r.label;
  std::vector<AnnotatorPair> out;
  for (auto i = by_annotator.begin(); i != by_annotator.end(); ++i) {
    for (auto j = std::next(i); j != by_annotator.end(); ++j) {
      stats::LabelSeries a;
      stats::LabelSeries b;
      for (const auto& [id, label] : i->second) {
        auto other = j->second.find(id);
        if (other == j->second.end()) continue;
        a.ids.push_back(id);
        a.labels.push_back(label);
        b.ids.push_back(id);
        b.labels.push_back(other->second);
      }
      if (a.ids.empty()) continue;
      out.push_back({i->first, j->first, stats::agreement_report(a, b, bootstrap)});
    }
  }
  return out;
}

namespace {

struct InputFile {
  std::string role;
  fs::path path;
};

Json describe_inputs(const std::vector<InputFile>& files) {
  Json out = Json::array();
  for (const auto& f : files) {
    out.push_back(Json{{"role", f.role}, {"file", f.path.filename().string()}, {"sha256", sha256_hex(file_contents(f.path))}});
  }
  return out;
}

std::string confusion_csv(const stats::Confusion& m, const std::string& row_name, const std::string& col_name) {
  std::string out = row_name + "\\" + col_name + ",0,1,2\n";
  for (int t = 0; t < kNumLabels; ++t) {
    out += std::to_string(t);
    for (int p = 0; p < kNumLabels; ++p) out += "," + std::to_string(m[t][p]);
    out += "\n";
  }
  return out;
}

}  // namespace

Report build_report(const ReportInputs& inputs, const PipelineConfig& config, const Json& provenance) {
  std::vector<InputFile> files;
  std::map<std::string, std::string> missing;
  Report report;
  Json sections = Json::object();

  if (inputs.annotations) {
    files.push_back({"annotations", *inputs.annotations});
    std::vector<AnnotationRecord> records;
    try {
      records = read_jsonl_records<AnnotationRecord>(*inputs.annotations);
    } catch (const SchemaError& e) {
      throw InputError(e.what());
    }
    const auto pairs = pairwise_agreement(records, config.bootstrap());
    if (pairs.empty()) {
      missing["agreement"] = "no two annotators share an example";
    } else {
      Json list = Json::array();
      std::string csv = "annotator_a,annotator_b,n,percent_agreement,kappa,kappa_low,kappa_high\n";
      for (const auto& p : pairs) {
        list.push_back(Json{{"annotator_a", p.a},
                            {"annotator_b", p.b},
                            {"n", p.report.n},
                            {"percent_agreement", p.report.percent_agreement},
                            {"kappa", p.report.kappa},
                            {"kappa_degenerate", p.report.kappa_degenerate},
                            {"kappa_ci", interval_json(p.report.kappa_ci)},
                            {"confusion", p.report.per_class_confusion}});
        csv += p.a + "," + p.b + "," + std::to_string(p.report.n) + "," + cell(p.report.percent_agreement) + "," +
               cell(p.report.kappa) + "," + cell(p.report.kappa_ci.low) + "," + cell(p.report.kappa_ci.high) + "\n";
      }
      sections["agreement"] = list;
      report.tables["agreement.csv"] = csv;
      report.tables["agreement_confusion.csv"] = confusion_csv(pairs.front().report.per_class_confusion,
                                                               pairs.front().a, pairs.front().b);
    }
  } else {
    missing["agreement"] = "no annotations input";
  }

  if (inputs.analysis) {
    files.push_back({"analysis", *inputs.analysis});
    const Json analysis = read_json_file(*inputs.analysis);
    if (!analysis.contains("metrics") || !analysis.at("metrics").is_array()) {
      throw InputError("analysis '" + inputs.analysis->string() + "' has no metrics array");
    }
    Json correlations = Json::array();
    Json enrichment = Json::array();
    std::string tau_csv = "metric,family,n,kendall_tau_b,tau_low,tau_high\n";
    std::string delta_csv = "metric,family,n,enrichment_delta,delta_low,delta_high,mean_0,mean_1,mean_2\n";
    for (const auto& m : analysis.at("metrics")) {
      const auto name = m.at("metric").get<std::string>();
      const auto family = m.at("family").get<std::string>();
      correlations.push_back(Json{{"metric", name},
                                  {"family", family},
                                  {"n", m.at("n")},
                                  {"kendall_tau_b", m.at("kendall_tau_b")},
                                  {"tau_ci", m.at("tau_ci")},
                                  {"degenerate", m.at("tau_degenerate")}});
      enrichment.push_back(Json{{"metric", name},
                                {"family", family},
                                {"n", m.at("n")},
                                {"enrichment_delta", m.at("enrichment_delta")},
                                {"enrichment_ci", m.at("enrichment_ci")},
                                {"per_class_mean", m.at("per_class_mean")}});
      tau_csv += name + "," + family + "," + cell(m.at("n")) + "," + cell(m.at("kendall_tau_b")) + "," +
                 cell(m.at("tau_ci")[0]) + "," + cell(m.at("tau_ci")[1]) + "\n";
      delta_csv += name + "," + family + "," + cell(m.at("n")) + "," + cell(m.at("enrichment_delta")) + "," +
                   cell(m.at("enrichment_ci")[0]) + "," + cell(m.at("enrichment_ci")[1]) + "," +
                   cell(m.at("per_class_mean")[0]) + "," + cell(m.at("per_class_mean")[1]) + "," +
                   cell(m.at("per_class_mean")[2]) + "\n";
    }
    sections["correlations"] = correlations;
    sections["enrichment_deltas"] = enrichment;
    report.tables["correlations.csv"] = tau_csv;
    report.tables["enrichment_deltas.csv"] = delta_csv;
  } else {
    missing["correlations"] = "no analysis input";
    missing["enrichment_deltas"] = "no analysis input";
  }

  if (inputs.verdicts && inputs.gold) {
    files.push_back({"verdicts", *inputs.verdicts});
    files.push_back({"gold", *inputs.gold});
    const auto gold = load_gold_labels(*inputs.gold);
    std::vector<judge::JudgeVerdict> verdicts;
    try {
      verdicts = read_jsonl_records<judge::JudgeVerdict>(*inputs.verdicts);
    } catch (const SchemaError& e) {
      throw InputError(e.what());
    }
    stats::LabelSeries pred;
    stats::LabelSeries truth;
    int unmatched = 0;
    const CostMatrix cost = config.load_cost_matrix();
    double total_cost = 0.0;
    for (const auto& v : verdicts) {
      auto it = gold.find(v.example_id);
      if (it == gold.end()) {
        ++unmatched;
        continue;
      }
      pred.ids.push_back(v.example_id);
      pred.labels.push_back(v.label);
      truth.ids.push_back(v.example_id);
      truth.labels.push_back(it->second);
      total_cost += cost.at(it->second, v.label);
    }
    if (pred.ids.empty()) {
      missing["classification"] = "no verdict has a gold label";
    } else {
      const auto c = stats::classification_report(pred, truth);
      sections["classification"] = Json{{"n", c.n},
                                        {"unmatched_verdicts", unmatched},
                                        {"accuracy", c.accuracy},
                                        {"macro_f1", c.macro_f1},
                                        {"precision", c.precision},
                                        {"recall", c.recall},
                                        {"f1", c.f1},
                                        {"support", c.support},
                                        {"undefined", c.undefined},
                                        {"confusion", c.confusion},
                                        {"mean_cost_score", total_cost / static_cast<double>(c.n)}};
      report.tables["classification_confusion.csv"] = confusion_csv(c.confusion, "true", "predicted");
      std::string csv = "label,precision,recall,f1,support\n";
      for (int k = 0; k < kNumLabels; ++k) {
        csv += std::to_string(k) + "," + cell(c.precision[k]) + "," + cell(c.recall[k]) + "," + cell(c.f1[k]) + "," +
               std::to_string(c.support[k]) + "\n";
      }
      report.tables["classification.csv"] = csv;
    }
  } else {
    missing["classification"] = inputs.verdicts ? "no gold input" : "no verdicts input";
  }

  std::string absent;
  for (const auto& s : inputs.required) {
    if (std::find(kReportSections.begin(), kReportSections.end(), s) == kReportSections.end()) {
      throw InputError("unknown report section '" + s + "'");
    }
    if (!sections.contains(s)) absent += (absent.empty() ? "" : "; ") + s + " (" + missing[s] + ")";
  }
  if (!absent.empty()) throw InputError("missing report sections: " + absent);
  if (sections.empty()) throw InputError("no report section could be built; pass analysis, annotations or verdicts");

  Json ordered = Json::object();
  for (const auto& s : kReportSections) {
    if (sections.contains(s)) ordered[s] = sections[s];
  }
  Json missing_json = Json::object();
  for (const auto& [k, v] : missing) missing_json[k] = v;
  report.document = Json{{"provenance", provenance},
                         {"inputs", describe_inputs(files)},
                         {"sections", ordered},
                         {"missing_sections", missing_json}};
  return report;
}

}  // namespace asrimpact::pipeline
