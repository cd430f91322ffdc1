#pragma once

// Pairing of gold utterances with ASR hypotheses: two classical baselines, the
// model-backed aligner, rule-based refinement and evaluation against a
// reference alignment. Only patient utterances take part (see validate.hpp).

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "asrimpact/core/model.hpp"
#include "asrimpact/core/serialize.hpp"
#include "asrimpact/core/validate.hpp"
#include "asrimpact/llm/gateway.hpp"

namespace asrimpact::align {

inline constexpr double kMissRecoveryThreshold = 0.65;

// 1 - levenshtein / max length over the code points of the normalized texts.
// Both empty gives 1.
double lexical_similarity(std::string_view a, std::string_view b);

class AlignmentError : public std::runtime_error {
 public:
  AlignmentError(const std::string& message, std::vector<Violation> violations, std::string raw = {})
      : std::runtime_error(message), violations_(std::move(violations)), raw_(std::move(raw)) {}

  const std::vector<Violation>& violations() const { return violations_; }
  // Last model response, when the failure came from one.
  const std::string& raw() const { return raw_; }

 private:
  std::vector<Violation> violations_;
  std::string raw_;
};

// Text of the listed utterances joined by single spaces.
std::string joined_text(const std::vector<Utterance>& side, const std::vector<int>& indices);

// Recomputes similarity, match type and the ASR span attributes of an entry
// from the conversation. Missing entries are reset to zero similarity.
void finalize_entry(AlignmentEntry& entry, const Conversation& conv);

// Entries ordered by first gold index, then first ASR index.
void sort_entries(Alignment& alignment);

// Nearest midpoint; earliest gold wins a contested ASR segment. Throws
// std::invalid_argument naming the first utterance without timestamps.
Alignment align_timestamp_proximity(const Conversation& conv);

struct EditDistanceAlignment {
  Alignment alignment;
  double total_cost = 0.0;
};

inline constexpr double kDefaultGapCost = 0.5;

// Global alignment over utterance sequences, substitution cost
// 1 - lexical_similarity. On equal cost a gap is preferred to a pairing.
EditDistanceAlignment align_edit_distance(const Conversation& conv, double gap_cost = kDefaultGapCost);

struct RefineOptions {
  double threshold = kMissRecoveryThreshold;
  // Similarity of a gold text to an ASR text; lexical_similarity when unset.
  std::function<double(const std::string& gold, const std::string& asr)> similarity;
};

// Duplicate correction, miss recovery and multi-fragment reconstruction,
// repeated until nothing changes. Uncovered gold utterances become missing
// entries. Total and idempotent.
Alignment refine(const Alignment& raw, const Conversation& conv, const RefineOptions& options = {});

struct AlignerRequest {
  Conversation conversation;
  llm::DecodingParams decoding = llm::DecodingParams::aligner_preset();
  int max_output_tokens = llm::kMaxOutputTokens;
};

std::string aligner_instruction();
// JSON document listing both ordered sequences; gold with timestamps, ASR with confidences.
std::string aligner_payload(const Conversation& conv);
// Sent once when the first reply cannot be used.
std::string repair_payload(const std::string& payload, const std::string& problem);

// Parses {"alignments": [...]} into entries. Throws AlignmentError for
// unknown indices, bad fields or quoted text found in neither transcript.
Alignment parse_aligner_response(const Json& doc, const Conversation& conv);

// Prompts the model, allows one repair round for unusable output, refines and
// validates. Throws AlignmentError with the violations if any remain.
Alignment align_llm(const AlignerRequest& request, llm::Gateway& gateway, const RefineOptions& refine_options = {});

struct ClassificationAccuracy {
  double gold_side = 0.0;
  double asr_side = 0.0;
  // Gold side: fp = truly matched but predicted missing; fn = true miss predicted matched.
  int fp = 0;
  int fn = 0;
  int asr_fp = 0;
  int asr_fn = 0;
  int gold_total = 0;
  int asr_total = 0;
};

ClassificationAccuracy eval_classification_accuracy(const Alignment& pred, const GoldAlignmentStandard& truth,
                                                    const Conversation& conv);

// Fraction of gold utterances whose predicted ASR index set equals the reference set.
double eval_structural_accuracy(const Alignment& pred, const GoldAlignmentStandard& truth);

}  // namespace asrimpact::align
