#pragma once

// Declarative pipeline settings read from a YAML file. Relative paths are
// resolved against the directory of the file that names them.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asrimpact/core/model.hpp"
#include "asrimpact/core/serialize.hpp"
#include "asrimpact/stats/stats.hpp"
#include "asrimpact/textnorm/normalize.hpp"

namespace asrimpact::pipeline {

inline constexpr const char* kToolVersion = ASRIMPACT_VERSION;

// Bad input or settings; the CLI exits with 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing files, unreachable providers and the like; the CLI exits with 2.
class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AlignerMethod { timestamp, edit_distance, llm };
std::string_view to_string(AlignerMethod m);
AlignerMethod aligner_method_from_string(std::string_view s);

struct CurationConfig {
  // Doctor turns before the pair kept as context, plus the latest patient turn.
  int context_doctor_turns = 2;
  // Re-drops pairs that become perfect matches once fillers are removed.
  bool filter_non_lexical = true;
  double high_band_low = 0.4;
  double high_band_high = 1.0;
  bool include_high_band = true;
  bool include_above_high_band = false;
  // Per-band cap after a seeded shuffle; 0 keeps every pair.
  int max_per_band = 0;
};

struct JudgeConfig {
  std::int64_t budget = 2000;
  int max_iterations = 20;
  int minibatch_size = 3;
  int candidates_per_reflection = 3;
  int patience = 10;
  std::optional<std::filesystem::path> instruction_file;
};

struct AnnotationConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "annotation-data";
  std::optional<std::filesystem::path> static_dir;
  std::optional<std::filesystem::path> examples;
  // token -> annotator id
  std::map<std::string, std::string> tokens;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  int threads = 1;

  std::optional<std::filesystem::path> non_lexical_lexicon;

  std::string import_mapping = "generic";
  bool merge_hypothesis_turns = false;

  AlignerMethod aligner = AlignerMethod::edit_distance;
  double gap_cost = 0.5;
  double recovery_threshold = 0.65;
  int max_output_tokens = 65000;
  std::optional<std::filesystem::path> provider_profile;

  // Empty selects every built-in metric.
  std::vector<std::string> metrics;
  std::vector<std::string> scorers;

  CurationConfig curation;
  stats::SplitSizes split{218, 30, 50};
  std::optional<std::filesystem::path> cost_matrix;
  JudgeConfig judge;
  int bootstrap_iterations = 1000;
  double bootstrap_level = 0.95;
  AnnotationConfig annotation;

  // Throws InputError on out-of-range values and EnvironmentError when a
  // referenced path does not exist.
  void check() const;

  textnorm::NormalizationConfig standard_normalization() const;
  textnorm::NormalizationConfig metrics_normalization() const;
  CostMatrix load_cost_matrix() const;
  stats::BootstrapOptions bootstrap() const;
};

PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& yaml, const std::filesystem::path& base_dir);

// Canonical form used for the digest; paths appear as written.
Json config_json(const PipelineConfig& config);
std::string config_digest(const PipelineConfig& config);

}  // namespace asrimpact::pipeline
