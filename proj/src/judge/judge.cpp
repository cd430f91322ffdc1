#include "asrimpact/judge/judge.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

#include "asrimpact/core/parallel.hpp"
#include "asrimpact/core/random.hpp"
#include "asrimpact/llm/extract.hpp"
#include "asrimpact/metrics/edit.hpp"

namespace asrimpact::judge {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string number(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

std::string label_name(int label) {
  return std::string(to_string(label_from_int(label)));
}

std::optional<int> json_label(const Json& v) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == static_cast<int>(d)) return static_cast<int>(d);
    return std::nullopt;
  }
  if (v.is_string()) {
    const auto s = trim(v.get<std::string>());
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return std::stoi(s);
    }
  }
  return std::nullopt;
}

std::vector<std::string> whitespace_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

// Reference and ASR word spans that differ, as written.
std::vector<std::pair<std::string, std::string>> differing_spans(const std::string& gold, const std::string& hyp) {
  const auto r = whitespace_tokens(gold);
  const auto h = whitespace_tokens(hyp);
  const auto ops = metrics::edit_alignment(std::span<const std::string>(r), std::span<const std::string>(h));
  std::vector<std::pair<std::string, std::string>> spans;
  bool open = false;
  for (const auto& op : ops) {
    if (op.kind == metrics::EditKind::hit) {
      open = false;
      continue;
    }
    if (!open) spans.emplace_back();
    open = true;
    auto& [rs, hs] = spans.back();
    if (op.ref_pos >= 0) rs += (rs.empty() ? "" : " ") + r[static_cast<std::size_t>(op.ref_pos)];
    if (op.hyp_pos >= 0) hs += (hs.empty() ? "" : " ") + h[static_cast<std::size_t>(op.hyp_pos)];
  }
  return spans;
}

std::string verdict_wording(int truth, int pred) {
  if (truth == 2 && pred == 0) return "the judge missed a significant-impact error";
  if (truth == 2 && pred == 1) return "the judge rated a significant-impact error as only minimal";
  if (truth == 1 && pred == 0) return "the judge missed a minimal-impact error";
  if (truth == 0 && pred == 1) return "an adjacent-class over-call: a harmless difference was rated minimal";
  if (truth == 1 && pred == 2) return "an adjacent-class over-call: a minimal-impact error was rated significant";
  return "an over-call by two classes: a harmless difference was rated significant";
}

struct Evaluation {
  std::vector<double> scores;
  std::vector<std::optional<JudgeVerdict>> verdicts;
  std::vector<std::string> errors;
  std::optional<std::string> gateway_error;
};

// Judgment errors score the worst entry of the true row; gateway errors are
// reported so the caller can skip the candidate.
Evaluation evaluate(const PromptCandidate& prompt, const std::vector<std::string>& ids, const ExampleIndex& examples,
                    const CostMatrix& cost, llm::Gateway& gateway, const JudgeOptions& options, int threads) {
  Evaluation ev;
  ev.scores.assign(ids.size(), 0.0);
  ev.verdicts.assign(ids.size(), std::nullopt);
  ev.errors.assign(ids.size(), {});
  std::vector<std::string> gateway_errors(ids.size());
  parallel_for(ids.size(), threads, [&](std::size_t i) {
    const LabeledExample& ex = examples.at(ids[i]);
    const int truth = *ex.label;
    try {
      ev.verdicts[i] = judge_one(ex, prompt, gateway, options);
      ev.scores[i] = cost.at(truth, ev.verdicts[i]->label);
    } catch (const JudgmentError& e) {
      ev.errors[i] = e.what();
      ev.scores[i] = cost.row_min(truth);
    } catch (const std::exception& e) {
      gateway_errors[i] = e.what();
      ev.errors[i] = e.what();
      ev.scores[i] = cost.row_min(truth);
    }
  });
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!gateway_errors[i].empty()) {
      ev.gateway_error = "example '" + ids[i] + "': " + gateway_errors[i];
      break;
    }
  }
  return ev;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void require_labels(const ExampleIndex& examples, const std::vector<std::string>& ids, const char* split) {
  for (const auto& id : ids) {
    auto it = examples.find(id);
    if (it == examples.end()) throw std::invalid_argument(std::string(split) + " example '" + id + "' not found");
    if (!it->second.label) throw std::invalid_argument(std::string(split) + " example '" + id + "' has no label");
  }
}

Json record_json(const IterationRecord& r) {
  return Json{{"iteration", r.iteration}, {"parent_id", r.parent_id},   {"minibatch", r.minibatch},
              {"failures", r.failures},   {"proposed", r.proposed},     {"accepted", r.accepted},
              {"notes", r.notes},         {"evaluations", r.evaluations}, {"best_aggregate", r.best_aggregate}};
}

IterationRecord record_from_json(const Json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.parent_id = j.at("parent_id").get<std::string>();
  r.minibatch = j.at("minibatch").get<std::vector<std::string>>();
  r.failures = j.at("failures").get<int>();
  r.proposed = j.at("proposed").get<std::vector<std::string>>();
  r.accepted = j.at("accepted").get<std::vector<std::string>>();
  r.notes = j.at("notes").get<std::vector<std::string>>();
  r.evaluations = j.at("evaluations").get<int>();
  r.best_aggregate = j.at("best_aggregate").get<double>();
  return r;
}

std::string candidate_id(int n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "p%04d", n);
  return buf;
}

// Adds `c` unless a member dominates it or has the same scores; prunes the
// members it dominates. Returns whether it was added.
bool insert_into_frontier(std::vector<PromptCandidate>& frontier, const PromptCandidate& c) {
  for (const auto& m : frontier) {
    if (dominates(m.val_scores, c.val_scores) || m.val_scores == c.val_scores) return false;
  }
  std::erase_if(frontier, [&](const PromptCandidate& m) { return dominates(c.val_scores, m.val_scores); });
  frontier.push_back(c);
  return true;
}

}  // namespace

void to_json(Json& j, const JudgeVerdict& v) {
  j = Json{{"example_id", v.example_id}, {"reasoning", v.reasoning}, {"label", v.label}, {"prompt_id", v.prompt_id}};
}

void from_json(const Json& j, JudgeVerdict& v) {
  v.example_id = j.at("example_id").get<std::string>();
  v.reasoning = j.at("reasoning").get<std::string>();
  v.label = j.at("label").get<int>();
  v.prompt_id = j.value("prompt_id", std::string());
  if (!is_valid_label(v.label)) throw SchemaError("verdict for '" + v.example_id + "' has label outside {0,1,2}");
}

void to_json(Json& j, const PromptCandidate& c) {
  j = Json{{"id", c.id},
           {"instruction", c.instruction},
           {"parent_id", c.parent_id ? Json(*c.parent_id) : Json(nullptr)},
           {"val_scores", c.val_scores},
           {"aggregate", c.aggregate},
           {"evaluated", c.evaluated},
           {"iteration", c.iteration}};
}

void from_json(const Json& j, PromptCandidate& c) {
  c.id = j.at("id").get<std::string>();
  c.instruction = j.at("instruction").get<std::string>();
  c.parent_id = j.at("parent_id").is_null() ? std::nullopt : std::optional(j.at("parent_id").get<std::string>());
  c.val_scores = j.at("val_scores").get<std::vector<double>>();
  c.aggregate = j.at("aggregate").get<double>();
  c.evaluated = j.value("evaluated", true);
  c.iteration = j.value("iteration", 0);
}

std::string baseline_instruction() {
  return R"(You review speech recognition (ASR) errors in recorded doctor-patient consultations.
For each case you get the recent turns of the conversation, the patient's final utterance as actually spoken (reference) and the same utterance as produced by the ASR system.
Imagine a clinician who can only read the ASR text. Decide whether the difference from the reference would change that clinician's picture of the patient.

Labels:
0 = no impact. The ASR text leads to the same clinical understanding, e.g. filler words, spelling, harmless rewording.
1 = minimal impact. A clinically relevant detail is blurred or lost, but the overall picture and the next steps stay the same.
2 = significant impact. A reader of the ASR text would reach a different clinical understanding, e.g. a flipped negation, a wrong drug, dose, duration, body site or symptom.

Use the context to judge what the patient meant. Reason step by step before you decide.)";
}

std::string judge_payload(const LabeledExample& example) {
  std::string out = "Conversation context:\n";
  if (example.context.empty()) out += "(none)\n";
  for (const auto& t : example.context) {
    out += t.speaker == Speaker::doctor ? "Doctor: " : "Patient: ";
    out += t.text + "\n";
  }
  out += "\nFinal patient utterance, reference:\n\"" + example.gold_final + "\"\n";
  out += "\nFinal patient utterance, ASR:\n\"" + example.hyp_final + "\"\n";
  out += "\nWrite your reasoning first. End with one line of the form \"label: N\" where N is 0, 1 or 2.";
  return out;
}

std::string judge_repair_payload(const std::string& payload, const std::string& problem) {
  return payload + "\n\nYour previous answer could not be read (" + problem +
         "). Answer again: reasoning first, then a final line \"label: N\" with N in {0, 1, 2}.";
}

ParsedJudgment parse_judgment(const std::string& text) {
  try {
    const Json doc = llm::extract_structured(text);
    if (doc.is_object() && doc.contains("label")) {
      const auto label = json_label(doc.at("label"));
      if (!label) throw JudgmentError("label field is not an integer", text);
      if (!is_valid_label(*label)) {
        throw JudgmentError("label " + std::to_string(*label) + " outside {0,1,2}", text);
      }
      const std::string reasoning = doc.contains("reasoning") && doc.at("reasoning").is_string()
                                        ? trim(doc.at("reasoning").get<std::string>())
                                        : std::string();
      if (reasoning.empty()) throw JudgmentError("reasoning is empty", text);
      return {reasoning, *label};
    }
  } catch (const llm::ExtractionError&) {
    // Not a structured reply; fall through to the text form.
  }

  static const std::regex label_line(R"((?:^|\n)[ \t*#>_-]*(?:final[ \t]+)?label[ \t*_]*[:=][ \t*_]*(-?\d+))",
                                     std::regex::icase);
  std::smatch last;
  bool found = false;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), label_line); it != std::sregex_iterator(); ++it) {
    last = *it;
    found = true;
  }
  if (!found) throw JudgmentError("no \"label: N\" line", text);
  const int label = std::stoi(last[1].str());
  if (!is_valid_label(label)) throw JudgmentError("label " + std::to_string(label) + " outside {0,1,2}", text);
  std::string reasoning = trim(std::string_view(text).substr(0, static_cast<std::size_t>(last.position(0))));
  static const std::regex prefix(R"(^\s*\**reasoning\**\s*:\s*)", std::regex::icase);
  reasoning = trim(std::regex_replace(reasoning, prefix, ""));
  if (reasoning.empty()) throw JudgmentError("reasoning is empty", text);
  return {reasoning, label};
}

JudgeVerdict judge_one(const LabeledExample& example, const PromptCandidate& prompt, llm::Gateway& gateway,
                       const JudgeOptions& options) {
  llm::GenerationRequest req;
  req.instruction = prompt.instruction;
  req.payload = judge_payload(example);
  req.params = options.decoding;
  req.contract = llm::ResponseContract::free_text;
  const std::string original = req.payload;
  for (int attempt = 0;; ++attempt) {
    const auto result = gateway.generate(req);
    try {
      const auto parsed = parse_judgment(result.text);
      return {example.id, parsed.reasoning, parsed.label, prompt.id};
    } catch (const JudgmentError& e) {
      if (attempt >= 1) {
        throw JudgmentError("judgment for '" + example.id + "' unusable after one repair attempt: " + e.what(),
                            result.text);
      }
      req.payload = judge_repair_payload(original, e.what());
    }
  }
}

BatchResult judge_batch(const std::vector<LabeledExample>& examples, const PromptCandidate& prompt,
                        llm::Gateway& gateway, const JudgeOptions& options, int threads) {
  BatchResult out;
  out.verdicts.assign(examples.size(), std::nullopt);
  std::vector<std::string> errors(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    try {
      out.verdicts[i] = judge_one(examples[i], prompt, gateway, options);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!out.verdicts[i]) out.failures.push_back({examples[i].id, errors[i]});
  }
  return out;
}

double cost_score(int true_label, int pred_label, const CostMatrix& cost) { return cost.at(true_label, pred_label); }

std::string feedback_for(const LabeledExample& example, const JudgeVerdict& verdict, const CostMatrix& cost) {
  if (!example.label) throw std::invalid_argument("feedback needs a labeled example: '" + example.id + "'");
  const int truth = *example.label;
  const int pred = verdict.label;
  if (truth == pred) throw std::invalid_argument("feedback requested for a correct verdict on '" + example.id + "'");
  std::string out = "Example " + example.id + ": predicted " + std::to_string(pred) + " (" + label_name(pred) +
                    ") but the reference label is " + std::to_string(truth) + " (" + label_name(truth) + "); " +
                    verdict_wording(truth, pred) + ". Cost incurred: " + number(cost_score(truth, pred, cost)) +
                    " (a correct answer scores " + number(cost_score(truth, truth, cost)) + ").\n";
  out += "Reference: \"" + example.gold_final + "\"\n";
  out += "ASR: \"" + example.hyp_final + "\"\n";
  const auto spans = differing_spans(example.gold_final, example.hyp_final);
  if (spans.empty()) {
    out += "Differences: none in the words.\n";
  } else {
    out += "Differences:";
    for (std::size_t i = 0; i < spans.size(); ++i) {
      out += (i == 0 ? " " : "; ") + std::string("\"") + spans[i].first + "\" -> \"" + spans[i].second + "\"";
    }
    out += "\n";
  }
  if (example.justification && !example.justification->empty()) {
    out += "Annotator justification: " + *example.justification + "\n";
  }
  return out;
}

bool dominates(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("score vectors differ in length");
  bool strictly = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return false;
    if (a[i] > b[i]) strictly = true;
  }
  return strictly;
}

Json checkpoint_json(const OptimizerState& s) {
  Json history = Json::array();
  for (const auto& r : s.history) history.push_back(record_json(r));
  return Json{{"schema_version", kSchemaVersion},
              {"kind", "optimizer_state"},
              {"frontier", s.frontier},
              {"archive", s.archive},
              {"train_ids", s.train_ids},
              {"val_ids", s.val_ids},
              {"test_ids", s.test_ids},
              {"cost", s.cost},
              {"budget", s.budget},
              {"evaluations", s.evaluations},
              {"minibatch_size", s.minibatch_size},
              {"seed", s.seed},
              {"iteration", s.iteration},
              {"next_candidate", s.next_candidate},
              {"stale_iterations", s.stale_iterations},
              {"history", history}};
}

OptimizerState state_from_checkpoint(const Json& doc) {
  try {
    OptimizerState s;
    s.frontier = doc.at("frontier").get<std::vector<PromptCandidate>>();
    s.archive = doc.at("archive").get<std::vector<PromptCandidate>>();
    s.train_ids = doc.at("train_ids").get<std::vector<std::string>>();
    s.val_ids = doc.at("val_ids").get<std::vector<std::string>>();
    s.test_ids = doc.at("test_ids").get<std::vector<std::string>>();
    s.cost = doc.at("cost").get<CostMatrix>();
    s.budget = doc.at("budget").get<std::int64_t>();
    s.evaluations = doc.at("evaluations").get<std::int64_t>();
    s.minibatch_size = doc.at("minibatch_size").get<int>();
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.iteration = doc.at("iteration").get<int>();
    s.next_candidate = doc.at("next_candidate").get<int>();
    s.stale_iterations = doc.at("stale_iterations").get<int>();
    for (const auto& r : doc.at("history")) s.history.push_back(record_from_json(r));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("optimizer checkpoint: ") + e.what());
  }
}

double best_aggregate(const OptimizerState& state) {
  if (state.frontier.empty()) throw std::invalid_argument("optimizer frontier is empty");
  double best = state.frontier.front().aggregate;
  for (const auto& c : state.frontier) best = std::max(best, c.aggregate);
  return best;
}

OptimizerState initial_state(const ExampleIndex& examples, std::vector<std::string> train_ids,
                             std::vector<std::string> val_ids, std::vector<std::string> test_ids,
                             const CostMatrix& cost, std::int64_t budget, std::uint64_t seed,
                             const std::string& instruction, llm::Gateway& judge_gateway,
                             const OptimizerConfig& config, const JudgeOptions& judge_options) {
  if (train_ids.empty()) throw std::invalid_argument("optimizer needs training examples");
  if (val_ids.empty()) throw std::invalid_argument("optimizer needs validation examples");
  if (config.minibatch_size < 1) throw std::invalid_argument("minibatch size must be >= 1");
  require_labels(examples, train_ids, "training");
  require_labels(examples, val_ids, "validation");
  if (budget < static_cast<std::int64_t>(val_ids.size())) {
    throw std::invalid_argument("budget " + std::to_string(budget) + " cannot cover the " +
                                std::to_string(val_ids.size()) + " validation evaluations of the seed prompt");
  }
  OptimizerState s;
  s.train_ids = std::move(train_ids);
  s.val_ids = std::move(val_ids);
  s.test_ids = std::move(test_ids);
  s.cost = cost;
  s.budget = budget;
  s.minibatch_size = config.minibatch_size;
  s.seed = seed;

  PromptCandidate c;
  c.id = candidate_id(s.next_candidate++);
  c.instruction = instruction;
  const auto ev = evaluate(c, s.val_ids, examples, s.cost, judge_gateway, judge_options, config.threads);
  if (ev.gateway_error) throw llm::LlmError("seed prompt evaluation failed: " + *ev.gateway_error);
  s.budget -= static_cast<std::int64_t>(s.val_ids.size());
  s.evaluations += static_cast<std::int64_t>(s.val_ids.size());
  c.val_scores = ev.scores;
  c.aggregate = mean(c.val_scores);
  c.evaluated = true;
  s.archive.push_back(c);
  s.frontier.push_back(c);
  return s;
}

std::string reflection_instruction() {
  return R"(You improve the instruction given to a model that rates the clinical impact of speech recognition errors in doctor-patient consultations on a 0/1/2 scale (0 no impact, 1 minimal impact, 2 significant impact).
You receive the current instruction, cases it got wrong and feedback on each mistake, including how costly it was. Missing a significant error is the most costly mistake; over-calling by one class is the cheapest.
Study what the mistakes have in common and write improved instructions that would get these cases right without hurting others. Each proposal must be a complete, self-contained instruction.
Reply with one JSON document and nothing else: {"candidates": ["<instruction>", ...]})";
}

std::string reflection_payload(const std::string& instruction,
                               const std::vector<std::pair<LabeledExample, JudgeVerdict>>& failures,
                               const std::vector<std::string>& feedback, int candidates) {
  std::string out = "Current instruction:\n<<<\n" + instruction + "\n>>>\n\n";
  for (std::size_t i = 0; i < failures.size(); ++i) {
    const auto& [ex, v] = failures[i];
    out += "Case " + std::to_string(i + 1) + "\n" + judge_payload(ex) + "\n\nJudge answer:\n" + v.reasoning +
           "\nlabel: " + std::to_string(v.label) + "\n\nFeedback:\n" + feedback[i] + "\n";
  }
  out += "Propose " + std::to_string(candidates) + " improved instructions.";
  return out;
}

std::vector<std::string> parse_reflection(const std::string& text) {
  const Json doc = llm::extract_structured(text);
  const Json* list = nullptr;
  if (doc.is_object() && doc.contains("candidates")) {
    list = &doc.at("candidates");
  } else if (doc.is_array()) {
    list = &doc;
  }
  if (list == nullptr || !list->is_array()) {
    throw llm::ExtractionError("reflection reply has no 'candidates' array", 0, text);
  }
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& item : *list) {
    std::string s;
    if (item.is_string()) {
      s = trim(item.get<std::string>());
    } else if (item.is_object() && item.contains("instruction") && item.at("instruction").is_string()) {
      s = trim(item.at("instruction").get<std::string>());
    }
    if (!s.empty() && seen.insert(s).second) out.push_back(s);
  }
  return out;
}

OptimizerState optimize(const OptimizerState& state, const ExampleIndex& examples, llm::Gateway& judge_gateway,
                        llm::Gateway& reflection_gateway, const OptimizerConfig& config,
                        const JudgeOptions& judge_options) {
  if (state.budget <= 0) return state;
  if (state.frontier.empty()) throw std::invalid_argument("optimizer frontier is empty");
  OptimizerState s = state;
  s.iteration += 1;
  IterationRecord rec;
  rec.iteration = s.iteration;
  const double before = best_aggregate(s);
  SplitMix64 rng(substream_seed(s.seed, static_cast<std::uint64_t>(s.iteration)));

  // (1) A frontier member on a training minibatch.
  const PromptCandidate parent = s.frontier[static_cast<std::size_t>(rng.below(s.frontier.size()))];
  rec.parent_id = parent.id;
  std::vector<std::string> pool = s.train_ids;
  const std::size_t take = std::min<std::size_t>(
      {static_cast<std::size_t>(s.minibatch_size), pool.size(), static_cast<std::size_t>(s.budget)});
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  rec.minibatch.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  const auto mb = evaluate(parent, rec.minibatch, examples, s.cost, judge_gateway, judge_options, config.threads);
  s.budget -= static_cast<std::int64_t>(take);
  s.evaluations += static_cast<std::int64_t>(take);
  rec.evaluations += static_cast<int>(take);

  // (2) Feedback for the mistakes; perfect answers are skipped.
  std::vector<std::pair<LabeledExample, JudgeVerdict>> failures;
  std::vector<std::string> feedback;
  for (std::size_t i = 0; i < take; ++i) {
    const LabeledExample& ex = examples.at(rec.minibatch[i]);
    if (mb.verdicts[i] && mb.verdicts[i]->label == *ex.label) continue;
    if (mb.verdicts[i]) {
      failures.emplace_back(ex, *mb.verdicts[i]);
      feedback.push_back(feedback_for(ex, *mb.verdicts[i], s.cost));
    } else {
      JudgeVerdict v{ex.id, "(no usable answer)", 0, parent.id};
      failures.emplace_back(ex, v);
      feedback.push_back("Example " + ex.id + ": the judge gave no usable answer (" + mb.errors[i] +
                         "). The reference label is " + std::to_string(*ex.label) + " (" + label_name(*ex.label) +
                         ").\n");
    }
  }
  rec.failures = static_cast<int>(failures.size());

  if (failures.empty()) {
    rec.notes.push_back("minibatch answered perfectly; no reflection");
  } else {
    // (3) Reflection proposes new instructions.
    std::vector<std::string> proposals;
    try {
      llm::GenerationRequest req;
      req.instruction = reflection_instruction();
      req.payload = reflection_payload(parent.instruction, failures, feedback, config.candidates_per_reflection);
      req.params = judge_options.decoding;
      req.contract = llm::ResponseContract::structured_document;
      proposals = parse_reflection(reflection_gateway.generate(req).text);
    } catch (const std::exception& e) {
      rec.notes.push_back(std::string("reflection failed: ") + e.what());
    }
    if (proposals.size() > static_cast<std::size_t>(config.candidates_per_reflection)) {
      proposals.resize(static_cast<std::size_t>(config.candidates_per_reflection));
    }

    // (4) and (5) Validation scores, then frontier insertion with pruning.
    for (const auto& instruction : proposals) {
      const bool known = std::any_of(s.archive.begin(), s.archive.end(),
                                     [&](const PromptCandidate& c) { return c.instruction == instruction; });
      if (known) {
        rec.notes.push_back("proposal repeats an evaluated instruction");
        continue;
      }
      if (s.budget < static_cast<std::int64_t>(s.val_ids.size())) {
        rec.notes.push_back("budget exhausted before validation");
        break;
      }
      PromptCandidate c;
      c.id = candidate_id(s.next_candidate++);
      c.instruction = instruction;
      c.parent_id = parent.id;
      c.iteration = s.iteration;
      rec.proposed.push_back(c.id);
      const auto ev = evaluate(c, s.val_ids, examples, s.cost, judge_gateway, judge_options, config.threads);
      s.budget -= static_cast<std::int64_t>(s.val_ids.size());
      s.evaluations += static_cast<std::int64_t>(s.val_ids.size());
      rec.evaluations += static_cast<int>(s.val_ids.size());
      if (ev.gateway_error) {
        rec.notes.push_back(c.id + " skipped: " + *ev.gateway_error);
        continue;
      }
      c.val_scores = ev.scores;
      c.aggregate = mean(c.val_scores);
      c.evaluated = true;
      s.archive.push_back(c);
      if (insert_into_frontier(s.frontier, c)) rec.accepted.push_back(c.id);
    }
  }

  rec.best_aggregate = best_aggregate(s);
  s.stale_iterations = rec.best_aggregate > before ? 0 : s.stale_iterations + 1;
  s.history.push_back(std::move(rec));
  return s;
}

bool converged(const OptimizerState& state, const OptimizerConfig& config) {
  return state.budget <= 0 || state.stale_iterations >= config.patience;
}

OptimizerState run_optimizer(OptimizerState state, const ExampleIndex& examples, llm::Gateway& judge_gateway,
                             llm::Gateway& reflection_gateway, int max_iterations, const OptimizerConfig& config,
                             const JudgeOptions& judge_options,
                             const std::function<void(const OptimizerState&)>& on_iteration) {
  for (int i = 0; i < max_iterations && !converged(state, config); ++i) {
    state = optimize(state, examples, judge_gateway, reflection_gateway, config, judge_options);
    if (on_iteration) on_iteration(state);
  }
  return state;
}

const PromptCandidate& select_final(const OptimizerState& state) {
  if (state.frontier.empty()) throw std::invalid_argument("cannot select from an empty frontier");
  const PromptCandidate* best = &state.frontier.front();
  for (const auto& c : state.frontier) {
    const auto key = [](const PromptCandidate& p) {
      return std::make_tuple(-p.aggregate, p.instruction.size(), p.id);
    };
    if (key(c) < key(*best)) best = &c;
  }
  return *best;
}

Json prompt_provenance(const OptimizerState& state, const PromptCandidate& chosen) {
  std::vector<std::string> lineage;
  std::optional<std::string> cur = chosen.id;
  std::set<std::string> seen;
  while (cur && seen.insert(*cur).second) {
    lineage.push_back(*cur);
    auto it = std::find_if(state.archive.begin(), state.archive.end(),
                           [&](const PromptCandidate& c) { return c.id == *cur; });
    cur = it == state.archive.end() ? std::nullopt : it->parent_id;
  }
  std::reverse(lineage.begin(), lineage.end());
  return Json{{"id", chosen.id},
              {"aggregate", chosen.aggregate},
              {"val_scores", chosen.val_scores},
              {"lineage", lineage},
              {"iterations", state.iteration},
              {"evaluations", state.evaluations},
              {"budget_remaining", state.budget},
              {"candidates_evaluated", state.archive.size()},
              {"frontier_size", state.frontier.size()},
              {"validation_examples", state.val_ids.size()},
              {"seed", state.seed}};
}

}  // namespace asrimpact::judge
