#pragma once

// Edit-distance and n-gram overlap metrics over normalized text. Every
// result carries a normalized score where higher means better.

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "asrimpact/metrics/edit.hpp"
#include "asrimpact/metrics/semantic.hpp"
#include "asrimpact/textnorm/normalize.hpp"

namespace asrimpact::metrics {

enum class MetricFamily { edit_distance, ngram_overlap, learned_semantic };

std::string_view to_string(MetricFamily f);
MetricFamily metric_family_from_string(std::string_view s);

struct MetricResult {
  std::string name;
  MetricFamily family = MetricFamily::edit_distance;
  double raw = 0.0;
  double normalized = 0.0;
  // Empty reference: the value is a convention, not a measurement.
  bool degenerate = false;
  bool failed = false;
  std::string error;
};

using textnorm::NormalizationConfig;

// Error rates. normalized = 1 - min(raw, 1).
MetricResult wer(std::string_view ref, std::string_view hyp,
                 const NormalizationConfig& cfg = NormalizationConfig::standard());
// Character level over the normalized string, spaces included.
MetricResult cer(std::string_view ref, std::string_view hyp,
                 const NormalizationConfig& cfg = NormalizationConfig::standard());
MetricResult mer(std::string_view ref, std::string_view hyp,
                 const NormalizationConfig& cfg = NormalizationConfig::standard());
MetricResult wil(std::string_view ref, std::string_view hyp,
                 const NormalizationConfig& cfg = NormalizationConfig::standard());

// Closed forms over edit counts; shared by the string entry points.
double wer_from_counts(const EditCounts& c);
double mer_from_counts(const EditCounts& c);
double wil_from_counts(const EditCounts& c);

// Semantically weighted WER. Substitutions weigh 1 - cos(ref word, hyp word),
// deletions 1 - cos(ref word, hypothesis centroid), insertions 1.
// Throws UnsupportedCapability if the scorer cannot embed.
MetricResult swer(std::string_view ref, std::string_view hyp, const SemanticScorer& scorer,
                  const NormalizationConfig& cfg = NormalizationConfig::standard());

inline constexpr double kBleuEpsilon = 1e-9;

// Sentence BLEU: clipped n-gram precision, uniform geometric mean over orders
// 1..max_n, brevity penalty; zero precisions become epsilon / count.
double bleu_tokens(std::span<const std::string> ref, std::span<const std::string> hyp, int max_n);
MetricResult bleu(std::string_view ref, std::string_view hyp, int max_n,
                  const NormalizationConfig& cfg = NormalizationConfig::standard());

enum class RougeVariant { rouge1, rouge2, rougeL, rougeW };
std::string_view to_string(RougeVariant v);

inline constexpr double kRougeWeightExponent = 1.2;

// F-measure of the variant.
double rouge_tokens(std::span<const std::string> ref, std::span<const std::string> hyp, RougeVariant variant,
                    double weight_exponent = kRougeWeightExponent);
MetricResult rouge(std::string_view ref, std::string_view hyp, RougeVariant variant,
                   const NormalizationConfig& cfg = NormalizationConfig::standard(),
                   double weight_exponent = kRougeWeightExponent);

struct ChrfParams {
  int char_order = 6;
  int word_order = 0;  // 2 for chrF++
  double beta = 2.0;
};

// Score in [0, 1].
double chrf_text(std::string_view ref_normalized, std::string_view hyp_normalized, const ChrfParams& params);
MetricResult chrf(std::string_view ref, std::string_view hyp, bool plus_plus,
                  const NormalizationConfig& cfg = NormalizationConfig::standard());

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
  // Symmetric synonym pairs for the third matching stage; empty by default.
  std::set<std::pair<std::string, std::string>> synonyms;
};

struct MeteorAlignment {
  // (hyp position, ref position), sorted by hyp position.
  std::vector<std::pair<int, int>> matches;
  int exact = 0;
  int stem = 0;
  int synonym = 0;
  int chunks = 0;
};

MeteorAlignment meteor_align(std::span<const std::string> ref, std::span<const std::string> hyp,
                             const MeteorParams& params);
double meteor_tokens(std::span<const std::string> ref, std::span<const std::string> hyp,
                     const MeteorParams& params = {});
MetricResult meteor(std::string_view ref, std::string_view hyp, const MeteorParams& params = {},
                    const NormalizationConfig& cfg = NormalizationConfig::standard());

// Every built-in metric plus one learned-semantic result per scorer. S-WER uses
// the first scorer able to embed. Scorer failures become failed entries.
// Sorted by (family, name).
std::vector<MetricResult> score_all(std::string_view ref, std::string_view hyp,
                                    std::span<const SemanticScorer* const> scorers,
                                    const NormalizationConfig& cfg = NormalizationConfig::standard());

}  // namespace asrimpact::metrics
