#pragma once

// Model-backed clinical impact judge, cost-matrix scoring and a reflective
// prompt optimizer that keeps a Pareto frontier over validation scores.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asrimpact/core/model.hpp"
#include "asrimpact/core/serialize.hpp"
#include "asrimpact/llm/gateway.hpp"

namespace asrimpact::judge {

struct JudgeVerdict {
  std::string example_id;
  std::string reasoning;
  int label = 0;
  std::string prompt_id;

  bool operator==(const JudgeVerdict&) const = default;
};

void to_json(Json& j, const JudgeVerdict& v);
void from_json(const Json& j, JudgeVerdict& v);

struct PromptCandidate {
  std::string id;
  std::string instruction;
  std::optional<std::string> parent_id;
  // One score per validation example, in the order of OptimizerState::val_ids.
  std::vector<double> val_scores;
  double aggregate = 0.0;
  bool evaluated = false;
  int iteration = 0;

  bool operator==(const PromptCandidate&) const = default;
};

void to_json(Json& j, const PromptCandidate& c);
void from_json(const Json& j, PromptCandidate& c);

class JudgmentError : public std::runtime_error {
 public:
  JudgmentError(const std::string& message, std::string raw)
      : std::runtime_error(message), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// Starting instruction for the judge; the optimizer rewrites it.
std::string baseline_instruction();

// The example as shown to the judge: context, both final utterances and the
// required answer format. The label is never included.
std::string judge_payload(const LabeledExample& example);
std::string judge_repair_payload(const std::string& payload, const std::string& problem);

struct ParsedJudgment {
  std::string reasoning;
  int label = 0;
};

// Accepts {"reasoning", "label"} documents or free text ending in a
// "label: N" line. Throws JudgmentError when no label in {0,1,2} is found or
// the reasoning is empty.
ParsedJudgment parse_judgment(const std::string& text);

struct JudgeOptions {
  llm::DecodingParams decoding = llm::DecodingParams::aligner_preset();
};

// One repair round on an unparseable reply, then JudgmentError.
JudgeVerdict judge_one(const LabeledExample& example, const PromptCandidate& prompt, llm::Gateway& gateway,
                       const JudgeOptions& options = {});

struct JudgeFailure {
  std::string example_id;
  std::string error;
};

struct BatchResult {
  // Index-aligned with the input; nullopt where judging failed.
  std::vector<std::optional<JudgeVerdict>> verdicts;
  std::vector<JudgeFailure> failures;
};

// Judges every example; failures are recorded, not thrown. Results do not
// depend on `threads`.
BatchResult judge_batch(const std::vector<LabeledExample>& examples, const PromptCandidate& prompt,
                        llm::Gateway& gateway, const JudgeOptions& options = {}, int threads = 1);

// C[true][pred]; std::out_of_range for labels outside {0,1,2}.
double cost_score(int true_label, int pred_label, const CostMatrix& cost);

// Deterministic explanation of a wrong verdict. Requires verdict.label !=
// example.label; std::invalid_argument otherwise.
std::string feedback_for(const LabeledExample& example, const JudgeVerdict& verdict, const CostMatrix& cost);

// a dominates b: a >= b everywhere and a > b somewhere. Sizes must match.
bool dominates(const std::vector<double>& a, const std::vector<double>& b);

struct OptimizerConfig {
  int minibatch_size = 3;
  int candidates_per_reflection = 3;
  // Iterations without a better frontier aggregate before stopping.
  int patience = 10;
  int threads = 1;
};

struct IterationRecord {
  int iteration = 0;
  std::string parent_id;
  std::vector<std::string> minibatch;
  int failures = 0;
  std::vector<std::string> proposed;
  std::vector<std::string> accepted;
  std::vector<std::string> notes;
  int evaluations = 0;
  double best_aggregate = 0.0;
};

struct OptimizerState {
  std::vector<PromptCandidate> frontier;
  // Every candidate ever evaluated, including pruned ones, for lineage.
  std::vector<PromptCandidate> archive;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  CostMatrix cost;
  std::int64_t budget = 0;
  std::int64_t evaluations = 0;
  int minibatch_size = 3;
  std::uint64_t seed = 0;
  int iteration = 0;
  int next_candidate = 0;
  int stale_iterations = 0;
  std::vector<IterationRecord> history;
};

Json checkpoint_json(const OptimizerState& state);
OptimizerState state_from_checkpoint(const Json& doc);

double best_aggregate(const OptimizerState& state);

// Examples looked up by id; labels are required on train and validation items.
using ExampleIndex = std::map<std::string, LabeledExample>;

// Seeds the frontier with `instruction` evaluated on the validation set.
OptimizerState initial_state(const ExampleIndex& examples, std::vector<std::string> train_ids,
                             std::vector<std::string> val_ids, std::vector<std::string> test_ids,
                             const CostMatrix& cost, std::int64_t budget, std::uint64_t seed,
                             const std::string& instruction, llm::Gateway& judge_gateway,
                             const OptimizerConfig& config = {}, const JudgeOptions& judge_options = {});

std::string reflection_instruction();
// Current instruction, failed examples and their feedback.
std::string reflection_payload(const std::string& instruction,
                               const std::vector<std::pair<LabeledExample, JudgeVerdict>>& failures,
                               const std::vector<std::string>& feedback, int candidates);
// {"candidates": ["...", ...]}; empty and duplicate instructions are dropped.
std::vector<std::string> parse_reflection(const std::string& text);

// One reflective iteration; returns the state unchanged when the budget is
// exhausted. Gateway failures skip the affected candidate.
OptimizerState optimize(const OptimizerState& state, const ExampleIndex& examples, llm::Gateway& judge_gateway,
                        llm::Gateway& reflection_gateway, const OptimizerConfig& config = {},
                        const JudgeOptions& judge_options = {});

bool converged(const OptimizerState& state, const OptimizerConfig& config = {});

// Runs until convergence or `max_iterations`; `on_iteration` sees each state.
OptimizerState run_optimizer(OptimizerState state, const ExampleIndex& examples, llm::Gateway& judge_gateway,
                             llm::Gateway& reflection_gateway, int max_iterations, const OptimizerConfig& config = {},
                             const JudgeOptions& judge_options = {},
                             const std::function<void(const OptimizerState&)>& on_iteration = {});

// Highest aggregate; ties go to the shorter instruction, then the smaller id.
const PromptCandidate& select_final(const OptimizerState& state);

// Final prompt metadata: lineage from the seed, evaluation counts.
Json prompt_provenance(const OptimizerState& state, const PromptCandidate& chosen);

}  // namespace asrimpact::judge
