#include "asrimpact/pipeline/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "asrimpact/core/digest.hpp"

namespace asrimpact::pipeline {

namespace fs = std::filesystem;

namespace {

// Rejects keys outside `allowed` so a misspelt setting is not silently ignored.
void check_keys(const YAML::Node& node, const std::string& where, const std::set<std::string>& allowed) {
  if (!node) return;
  if (!node.IsMap()) throw InputError("config: '" + where + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw InputError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  const auto v = node[key];
  if (!v) return;
  try {
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    throw InputError("config: '" + where + key + "' has the wrong type");
  }
}

void read_path(const YAML::Node& node, const char* key, std::optional<fs::path>& out, const fs::path& base,
               const std::string& where) {
  std::string s;
  read(node, key, s, where);
  if (!s.empty()) out = fs::path(s).is_absolute() ? fs::path(s) : base / s;
}

void require_exists(const std::optional<fs::path>& p, const char* what) {
  if (p && !fs::exists(*p)) throw EnvironmentError(std::string(what) + " '" + p->string() + "' does not exist");
}

Json optional_path(const std::optional<fs::path>& p) { return p ? Json(p->generic_string()) : Json(nullptr); }

}  // namespace

std::string_view to_string(AlignerMethod m) {
  switch (m) {
    case AlignerMethod::timestamp: return "timestamp";
    case AlignerMethod::edit_distance: return "edit_distance";
    case AlignerMethod::llm: return "llm";
  }
  return "edit_distance";
}

AlignerMethod aligner_method_from_string(std::string_view s) {
  if (s == "timestamp") return AlignerMethod::timestamp;
  if (s == "edit_distance") return AlignerMethod::edit_distance;
  if (s == "llm") return AlignerMethod::llm;
  throw InputError("unknown aligner '" + std::string(s) + "' (expected timestamp, edit_distance or llm)");
}

PipelineConfig parse_config(const std::string& yaml, const fs::path& base) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::Exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  PipelineConfig c;
  if (!root || root.IsNull()) return c;
  check_keys(root, "",
             {"seed", "output_dir", "threads", "normalization", "import", "aligner", "provider_profile", "metrics",
              "curation", "split", "cost_matrix", "judge", "bootstrap", "annotation"});
  read(root, "seed", c.seed, "");
  std::string out_dir;
  read(root, "output_dir", out_dir, "");
  if (!out_dir.empty()) c.output_dir = fs::path(out_dir).is_absolute() ? fs::path(out_dir) : base / out_dir;
  read(root, "threads", c.threads, "");
  read_path(root, "provider_profile", c.provider_profile, base, "");
  read_path(root, "cost_matrix", c.cost_matrix, base, "");

  if (const auto n = root["normalization"]) {
    check_keys(n, "normalization", {"non_lexical_lexicon"});
    read_path(n, "non_lexical_lexicon", c.non_lexical_lexicon, base, "normalization.");
  }
  if (const auto n = root["import"]) {
    check_keys(n, "import", {"mapping", "merge_hypothesis_turns"});
    read(n, "mapping", c.import_mapping, "import.");
    read(n, "merge_hypothesis_turns", c.merge_hypothesis_turns, "import.");
  }
  if (const auto n = root["aligner"]) {
    check_keys(n, "aligner", {"method", "gap_cost", "recovery_threshold", "max_output_tokens"});
    std::string method;
    read(n, "method", method, "aligner.");
    if (!method.empty()) c.aligner = aligner_method_from_string(method);
    read(n, "gap_cost", c.gap_cost, "aligner.");
    read(n, "recovery_threshold", c.recovery_threshold, "aligner.");
    read(n, "max_output_tokens", c.max_output_tokens, "aligner.");
  }
  if (const auto n = root["metrics"]) {
    check_keys(n, "metrics", {"names", "scorers"});
    read(n, "names", c.metrics, "metrics.");
    read(n, "scorers", c.scorers, "metrics.");
  }
  if (const auto n = root["curation"]) {
    check_keys(n, "curation",
               {"context_doctor_turns", "filter_non_lexical", "high_band", "include_high_band",
                "include_above_high_band", "max_per_band"});
    auto& k = c.curation;
    read(n, "context_doctor_turns", k.context_doctor_turns, "curation.");
    read(n, "filter_non_lexical", k.filter_non_lexical, "curation.");
    std::vector<double> band;
    read(n, "high_band", band, "curation.");
    if (!band.empty()) {
      if (band.size() != 2) throw InputError("config: 'curation.high_band' needs two numbers");
      k.high_band_low = band[0];
      k.high_band_high = band[1];
    }
    read(n, "include_high_band", k.include_high_band, "curation.");
    read(n, "include_above_high_band", k.include_above_high_band, "curation.");
    read(n, "max_per_band", k.max_per_band, "curation.");
  }
  if (const auto n = root["split"]) {
    check_keys(n, "split", {"train", "validation", "test"});
    read(n, "train", c.split.train, "split.");
    read(n, "validation", c.split.validation, "split.");
    read(n, "test", c.split.test, "split.");
  }
  if (const auto n = root["judge"]) {
    check_keys(n, "judge",
               {"budget", "max_iterations", "minibatch_size", "candidates_per_reflection", "patience",
                "instruction_file"});
    auto& j = c.judge;
    read(n, "budget", j.budget, "judge.");
    read(n, "max_iterations", j.max_iterations, "judge.");
    read(n, "minibatch_size", j.minibatch_size, "judge.");
    read(n, "candidates_per_reflection", j.candidates_per_reflection, "judge.");
    read(n, "patience", j.patience, "judge.");
    read_path(n, "instruction_file", j.instruction_file, base, "judge.");
  }
  if (const auto n = root["bootstrap"]) {
    check_keys(n, "bootstrap", {"iterations", "level"});
    read(n, "iterations", c.bootstrap_iterations, "bootstrap.");
    read(n, "level", c.bootstrap_level, "bootstrap.");
  }
  if (const auto n = root["annotation"]) {
    check_keys(n, "annotation", {"host", "port", "data_dir", "static_dir", "examples", "tokens"});
    auto& a = c.annotation;
    read(n, "host", a.host, "annotation.");
    read(n, "port", a.port, "annotation.");
    std::optional<fs::path> data_dir;
    read_path(n, "data_dir", data_dir, base, "annotation.");
    if (data_dir) a.data_dir = *data_dir;
    read_path(n, "static_dir", a.static_dir, base, "annotation.");
    read_path(n, "examples", a.examples, base, "annotation.");
    read(n, "tokens", a.tokens, "annotation.");
  }
  c.check();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw EnvironmentError("cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

void PipelineConfig::check() const {
  if (threads < 1) throw InputError("config: threads must be at least 1");
  static const std::set<std::string> mappings = {"dora_like", "primock_like", "generic"};
  if (!mappings.count(import_mapping)) {
    throw InputError("config: unknown import mapping '" + import_mapping + "' (expected dora_like, primock_like or generic)");
  }
  if (!(gap_cost > 0)) throw InputError("config: aligner.gap_cost must be positive");
  if (!(recovery_threshold >= 0 && recovery_threshold <= 1)) {
    throw InputError("config: aligner.recovery_threshold must lie in [0, 1]");
  }
  if (max_output_tokens < 1 || max_output_tokens > 65000) {
    throw InputError("config: aligner.max_output_tokens must lie in [1, 65000]");
  }
  if (curation.context_doctor_turns < 0) throw InputError("config: curation.context_doctor_turns must be >= 0");
  if (!(curation.high_band_low > 0 && curation.high_band_low < curation.high_band_high)) {
    throw InputError("config: curation.high_band must satisfy 0 < low < high");
  }
  if (curation.max_per_band < 0) throw InputError("config: curation.max_per_band must be >= 0");
  if (split.train < 0 || split.validation < 0 || split.test < 0) throw InputError("config: split sizes must be >= 0");
  if (judge.budget < 0 || judge.max_iterations < 0 || judge.minibatch_size < 1 ||
      judge.candidates_per_reflection < 1 || judge.patience < 1) {
    throw InputError("config: judge settings out of range");
  }
  if (bootstrap_iterations < 1) throw InputError("config: bootstrap.iterations must be at least 1");
  if (!(bootstrap_level > 0 && bootstrap_level < 1)) throw InputError("config: bootstrap.level must lie in (0, 1)");
  if (annotation.port < 0 || annotation.port > 65535) throw InputError("config: annotation.port out of range");
  require_exists(non_lexical_lexicon, "non-lexical lexicon");
  require_exists(provider_profile, "provider profile");
  require_exists(cost_matrix, "cost matrix");
  require_exists(judge.instruction_file, "judge instruction file");
  require_exists(annotation.static_dir, "static directory");
  require_exists(annotation.examples, "annotation examples");
}

textnorm::NormalizationConfig PipelineConfig::standard_normalization() const {
  return textnorm::NormalizationConfig::standard();
}

textnorm::NormalizationConfig PipelineConfig::metrics_normalization() const {
  auto cfg = textnorm::NormalizationConfig::metrics_subset();
  if (non_lexical_lexicon) cfg.non_lexical_lexicon = textnorm::load_lexicon(*non_lexical_lexicon);
  return cfg;
}

CostMatrix PipelineConfig::load_cost_matrix() const {
  if (!cost_matrix) return CostMatrix();
  try {
    return read_json_file(*cost_matrix).get<CostMatrix>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cost matrix '" + cost_matrix->string() + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError("cost matrix '" + cost_matrix->string() + "': " + e.what());
  }
}

stats::BootstrapOptions PipelineConfig::bootstrap() const {
  stats::BootstrapOptions o;
  o.iterations = bootstrap_iterations;
  o.level = bootstrap_level;
  o.seed = seed;
  o.threads = threads;
  return o;
}

Json config_json(const PipelineConfig& c) {
  // Output location, thread count and annotator tokens do not affect results
  // and are left out so the digest is stable and free of secrets.
  return Json{{"seed", c.seed},
              {"normalization", {{"non_lexical_lexicon", optional_path(c.non_lexical_lexicon)}}},
              {"import", {{"mapping", c.import_mapping}, {"merge_hypothesis_turns", c.merge_hypothesis_turns}}},
              {"aligner",
               {{"method", to_string(c.aligner)},
                {"gap_cost", c.gap_cost},
                {"recovery_threshold", c.recovery_threshold},
                {"max_output_tokens", c.max_output_tokens}}},
              {"provider_profile", optional_path(c.provider_profile)},
              {"metrics", {{"names", c.metrics}, {"scorers", c.scorers}}},
              {"curation",
               {{"context_doctor_turns", c.curation.context_doctor_turns},
                {"filter_non_lexical", c.curation.filter_non_lexical},
                {"high_band", {c.curation.high_band_low, c.curation.high_band_high}},
                {"include_high_band", c.curation.include_high_band},
                {"include_above_high_band", c.curation.include_above_high_band},
                {"max_per_band", c.curation.max_per_band}}},
              {"split", {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}}},
              {"cost_matrix", optional_path(c.cost_matrix)},
              {"judge",
               {{"budget", c.judge.budget},
                {"max_iterations", c.judge.max_iterations},
                {"minibatch_size", c.judge.minibatch_size},
                {"candidates_per_reflection", c.judge.candidates_per_reflection},
                {"patience", c.judge.patience},
                {"instruction_file", optional_path(c.judge.instruction_file)}}},
              {"bootstrap", {{"iterations", c.bootstrap_iterations}, {"level", c.bootstrap_level}}}};
}

std::string config_digest(const PipelineConfig& config) {
  Json doc = config_json(config);
  // Referenced files count by content, not just by name.
  Json files = Json::object();
  for (const auto* p : {&config.non_lexical_lexicon, &config.provider_profile, &config.cost_matrix,
                        &config.judge.instruction_file}) {
    if (!*p) continue;
    std::ifstream in(**p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    files[(*p)->generic_string()] = sha256_hex(buf.str());
  }
  doc["files"] = files;
  return sha256_hex(doc.dump());
}

}  // namespace asrimpact::pipeline
