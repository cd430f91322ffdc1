#pragma once

// Seeded synthetic consultations with known alignments and impact labels.
// Used by the demo data generator, the acceptance suite and tests.

#include <cstdint>
#include <optional>
#include <string_view>
#include <string>
#include <vector>

#include "asrimpact/core/model.hpp"

namespace asrimpact::pipeline {

enum class StructureOp { keep, split, merge, miss };
enum class EditKind { verbatim, filler, cosmetic, moderate, critical };

std::string_view to_string(StructureOp op);
std::string_view to_string(EditKind kind);

// One gold alignment entry and how its ASR side was produced.
struct SyntheticTurn {
  std::vector<int> gold_indices;
  StructureOp op = StructureOp::keep;
  EditKind edit = EditKind::verbatim;
  // Absent for misses.
  std::optional<int> label;
};

struct SyntheticConversation {
  Conversation conversation;
  GoldAlignmentStandard truth;
  std::vector<SyntheticTurn> turns;
};

SyntheticConversation synthetic_conversation(std::uint64_t seed, const std::string& id, int patient_turns);

// `count` conversations named synth-000, synth-001, ... with 6 to 10 patient turns each.
std::vector<SyntheticConversation> synthetic_suite(std::uint64_t seed, int count = 20);

// Example id used by curation for the entry starting at `first_gold_index`.
std::string example_id(const std::string& conversation_id, int first_gold_index);

// Two annotators' labels over every labeled turn of the suite. The second
// annotator departs by one class on a seeded share of items.
std::vector<AnnotationRecord> synthetic_annotations(const std::vector<SyntheticConversation>& suite,
                                                    std::uint64_t seed, double disagreement = 0.15);

}  // namespace asrimpact::pipeline
