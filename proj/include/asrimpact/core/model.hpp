#pragma once

// Shared domain types exchanged between the pipeline stages.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace asrimpact {

inline constexpr int kSchemaVersion = 1;

enum class Speaker { doctor, patient };
enum class Source { dora, primock57, other };
enum class MatchType { exact, fuzzy, missing };
enum class Split { train, validation, test, unassigned };

// Ordinal clinical-impact scale. Stored as the integer value everywhere.
enum class ImpactLabel : int { no_impact = 0, minimal_impact = 1, significant_impact = 2 };

inline constexpr int kNumLabels = 3;

std::string_view to_string(Speaker s);
std::string_view to_string(Source s);
std::string_view to_string(MatchType m);
std::string_view to_string(Split s);
std::string_view to_string(ImpactLabel l);

Speaker speaker_from_string(std::string_view s);
Source source_from_string(std::string_view s);
MatchType match_type_from_string(std::string_view s);
Split split_from_string(std::string_view s);

bool is_valid_label(int value);
ImpactLabel label_from_int(int value);

struct Utterance {
  int index = 0;
  Speaker speaker = Speaker::patient;
  std::string text;
  std::optional<double> start_time;
  std::optional<double> end_time;
  std::optional<double> confidence;

  bool operator==(const Utterance&) const = default;
};

struct Conversation {
  std::string id;
  Source source = Source::other;
  std::string asr_provider;
  std::vector<Utterance> gold;
  std::vector<Utterance> hypothesis;

  bool operator==(const Conversation&) const = default;
};

struct AlignmentEntry {
  std::vector<int> gold_indices;
  std::vector<int> asr_indices;
  MatchType match_type = MatchType::missing;
  double similarity = 0.0;
  bool multi_fragment = false;
  // Set only by duplicate correction; the one legal source of many-to-many entries.
  bool duplicate_merged = false;
  // ASR-side attributes of the matched span (mean confidence, [min start, max end]).
  std::optional<double> confidence;
  std::optional<double> start_time;
  std::optional<double> end_time;

  bool operator==(const AlignmentEntry&) const = default;
};

struct Alignment {
  std::string conversation_id;
  std::vector<AlignmentEntry> entries;
  // True for human-annotated reference alignments.
  bool standard = false;

  bool operator==(const Alignment&) const = default;
};

using GoldAlignmentStandard = Alignment;

struct ContextTurn {
  Speaker speaker = Speaker::doctor;
  std::string text;

  bool operator==(const ContextTurn&) const = default;
};

struct LabeledExample {
  std::string id;
  std::vector<ContextTurn> context;
  std::string gold_final;
  std::string hyp_final;
  std::optional<int> label;
  std::optional<std::string> justification;
  Split split = Split::unassigned;
  // Provenance of the pair; empty for hand-made examples.
  std::string conversation_id;
  Source source = Source::other;

  bool operator==(const LabeledExample&) const = default;
};

// One annotator's label for one example. created_at is milliseconds since the epoch.
struct AnnotationRecord {
  std::string example_id;
  std::string annotator_id;
  int label = 0;
  std::string justification;
  std::int64_t created_at = 0;

  bool operator==(const AnnotationRecord&) const = default;
};

struct AdjudicationRecord {
  std::string example_id;
  int final_label = 0;
  std::vector<std::string> resolver_ids;
  std::string note;
  std::int64_t created_at = 0;

  bool operator==(const AdjudicationRecord&) const = default;
};

// C[true][predicted]; rewards on the diagonal, penalties off it.
class CostMatrix {
 public:
  using Table = std::array<std::array<double, kNumLabels>, kNumLabels>;

  // The clinical default: missing a significant error costs the most.
  CostMatrix();
  explicit CostMatrix(const Table& values);

  double at(int true_label, int predicted_label) const;
  const Table& values() const { return values_; }
  double min_entry() const;
  double row_min(int true_label) const;

  bool operator==(const CostMatrix&) const = default;

 private:
  Table values_;
};

// Throws std::invalid_argument if the diagonal is not > 1 or C[2][0] is not the minimum.
void check_cost_matrix(const CostMatrix::Table& values);

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace asrimpact
