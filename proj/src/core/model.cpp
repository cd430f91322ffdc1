#include "asrimpact/core/model.hpp"

#include <algorithm>

namespace asrimpact {

std::string_view to_string(Speaker s) {
  return s == Speaker::doctor ? "doctor" : "patient";
}

std::string_view to_string(Source s) {
  switch (s) {
    case Source::dora: return "dora";
    case Source::primock57: return "primock57";
    case Source::other: return "other";
  }
  return "other";
}

std::string_view to_string(MatchType m) {
  switch (m) {
    case MatchType::exact: return "exact";
    case MatchType::fuzzy: return "fuzzy";
    case MatchType::missing: return "missing";
  }
  return "missing";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

std::string_view to_string(ImpactLabel l) {
  switch (l) {
    case ImpactLabel::no_impact: return "no_impact";
    case ImpactLabel::minimal_impact: return "minimal_impact";
    case ImpactLabel::significant_impact: return "significant_impact";
  }
  return "no_impact";
}

Speaker speaker_from_string(std::string_view s) {
  if (s == "doctor") return Speaker::doctor;
  if (s == "patient") return Speaker::patient;
  throw SchemaError("unknown speaker '" + std::string(s) + "'");
}

Source source_from_string(std::string_view s) {
  if (s == "dora") return Source::dora;
  if (s == "primock57") return Source::primock57;
  if (s == "other") return Source::other;
  throw SchemaError("unknown source '" + std::string(s) + "'");
}

MatchType match_type_from_string(std::string_view s) {
  if (s == "exact") return MatchType::exact;
  if (s == "fuzzy") return MatchType::fuzzy;
  if (s == "missing") return MatchType::missing;
  throw SchemaError("unknown match_type '" + std::string(s) + "'");
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  if (s == "unassigned") return Split::unassigned;
  throw SchemaError("unknown split '" + std::string(s) + "'");
}

bool is_valid_label(int value) { return value >= 0 && value < kNumLabels; }

ImpactLabel label_from_int(int value) {
  if (!is_valid_label(value)) {
    throw std::out_of_range("impact label must be 0, 1 or 2, got " + std::to_string(value));
  }
  return static_cast<ImpactLabel>(value);
}

namespace {

constexpr CostMatrix::Table kClinicalCosts = {{
    {1.2, 0.3, -1.0},
    {0.3, 1.5, 0.5},
    {-1.2, 0.4, 1.5},
}};

}  // namespace

void check_cost_matrix(const CostMatrix::Table& values) {
  double lowest = values[0][0];
  for (const auto& row : values) lowest = std::min(lowest, *std::min_element(row.begin(), row.end()));
  for (int i = 0; i < kNumLabels; ++i) {
    if (!(values[i][i] > 1.0)) {
      throw std::invalid_argument("cost matrix diagonal entry C[" + std::to_string(i) + "][" +
                                  std::to_string(i) + "] must exceed 1.0");
    }
  }
  if (values[2][0] != lowest) {
    throw std::invalid_argument("cost matrix entry C[2][0] must be the minimum entry");
  }
}

CostMatrix::CostMatrix() : values_(kClinicalCosts) {}

CostMatrix::CostMatrix(const Table& values) : values_(values) { check_cost_matrix(values_); }

double CostMatrix::at(int true_label, int predicted_label) const {
  if (!is_valid_label(true_label) || !is_valid_label(predicted_label)) {
    throw std::out_of_range("cost lookup with label outside {0,1,2}: (" + std::to_string(true_label) +
                            ", " + std::to_string(predicted_label) + ")");
  }
  return values_[true_label][predicted_label];
}

double CostMatrix::min_entry() const {
  double lowest = values_[0][0];
  for (const auto& row : values_) lowest = std::min(lowest, *std::min_element(row.begin(), row.end()));
  return lowest;
}

double CostMatrix::row_min(int true_label) const {
  const auto& row = values_.at(static_cast<std::size_t>(true_label));
  return *std::min_element(row.begin(), row.end());
}

}  // namespace asrimpact
