#pragma once

// Turns aligned conversations into unlabeled judge examples: one per matched
// gold entry, with the preceding turns as context and a WER-based filter.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "asrimpact/core/model.hpp"
#include "asrimpact/core/serialize.hpp"
#include "asrimpact/pipeline/config.hpp"

namespace asrimpact::pipeline {

struct CuratedPair {
  LabeledExample example;
  // WER after standard cleaning and after filler removal.
  double wer = 0.0;
  double wer_without_fillers = 0.0;
  // "low", "high" or "above", relative to the configured high band.
  std::string band;
};

struct CurationStats {
  int entries = 0;
  int missing = 0;
  int perfect = 0;
  int fillers_only = 0;
  int high_band_excluded = 0;
  int above_band_excluded = 0;
  int sampled_out = 0;
  int kept = 0;
  std::map<std::string, int> kept_by_band;
};

struct CurationResult {
  // Ordered by conversation id, then first gold index.
  std::vector<CuratedPair> pairs;
  CurationStats stats;
};

// Context for the entry starting at gold utterance `first_gold`: the latest
// `doctor_turns` doctor turns and the latest patient turn before it, in
// conversation order.
std::vector<ContextTurn> context_window(const Conversation& conv, int first_gold, int doctor_turns);

// Throws InputError when an alignment has no conversation or nothing survives.
CurationResult curate(const std::vector<Conversation>& conversations, const std::vector<Alignment>& alignments,
                      const PipelineConfig& config);

Json to_json_value(const CurationStats& stats);

}  // namespace asrimpact::pipeline
