#include "asrimpact/pipeline/mock_models.hpp"

#include <set>

#include "asrimpact/align/align.hpp"
#include "asrimpact/judge/judge.hpp"
#include "asrimpact/metrics/edit.hpp"
#include "asrimpact/textnorm/normalize.hpp"

namespace asrimpact::pipeline {

namespace {

const std::vector<std::string>& rule_lines() {
  static const std::vector<std::string> rules = {
      "Always treat a flipped or dropped negation as significant impact (label 2).",
      "Always treat a changed number, dose, frequency or duration as significant impact (label 2).",
      "Always treat a replaced medication, symptom or body site word as significant impact (label 2).",
  };
  return rules;
}

const std::set<std::string>& negations() {
  static const std::set<std::string> words = {
      "not",   "no",    "never",  "nothing", "none",  "nobody", "isnt",    "arent",   "wasnt",    "werent", "dont",
      "doesnt", "didnt", "cant",  "cannot",  "wont",  "havent", "hasnt",   "hadnt",   "shouldnt", "couldnt", "wouldnt"};
  return words;
}

const std::set<std::string>& number_words() {
  static const std::set<std::string> words = {
      "zero",     "one",      "two",     "three",   "four",    "five",   "six",     "seven",    "eight",
      "nine",     "ten",      "eleven",  "twelve",  "thirteen", "fourteen", "fifteen", "sixteen", "seventeen",
      "eighteen", "nineteen", "twenty",  "thirty",  "forty",   "fifty",  "sixty",   "seventy",  "eighty",
      "ninety",   "hundred",  "thousand", "million", "half",   "once",   "twice",   "first",    "second",
      "third",    "milligrams", "days",  "weeks",   "months",  "hours"};
  return words;
}

const std::set<std::string>& function_words() {
  static const std::set<std::string> words = {"a", "an", "the", "and", "so", "well", "like", "just",
                                              "really", "very", "then", "that", "this", "of", "to"};
  return words;
}

std::string between(const std::string& s, const std::string& open, const std::string& close) {
  const auto a = s.find(open);
  if (a == std::string::npos) return {};
  const auto start = a + open.size();
  const auto b = s.find(close, start);
  if (b == std::string::npos) return {};
  return s.substr(start, b - start);
}

std::optional<Utterance> utterance_from_payload(const Json& item) {
  Utterance u;
  u.index = item.at("index").get<int>();
  u.speaker = Speaker::patient;
  u.text = item.at("text").get<std::string>();
  if (item.contains("start") && item.at("start").is_number()) u.start_time = item.at("start").get<double>();
  if (item.contains("end") && item.at("end").is_number()) u.end_time = item.at("end").get<double>();
  if (item.contains("confidence") && item.at("confidence").is_number()) {
    u.confidence = item.at("confidence").get<double>();
  }
  return u;
}

// Patient utterances at their original indices, doctor placeholders between.
std::vector<Utterance> side_from_payload(const Json& items) {
  std::vector<Utterance> out;
  for (const auto& item : items) {
    const auto u = utterance_from_payload(item);
    while (static_cast<int>(out.size()) < u->index) {
      Utterance gap;
      gap.index = static_cast<int>(out.size());
      gap.speaker = Speaker::doctor;
      gap.text = "omitted";
      out.push_back(gap);
    }
    out.push_back(*u);
  }
  return out;
}

}  // namespace

std::string builtin_aligner_reply(const llm::GenerationRequest& request) {
  const std::string json = between(request.payload + "\n\n", "", "\n\n");
  const Json doc = Json::parse(json);
  Conversation conv;
  conv.id = doc.at("conversation_id").get<std::string>();
  conv.gold = side_from_payload(doc.at("gold"));
  conv.hypothesis = side_from_payload(doc.at("asr"));
  const auto result = align::align_edit_distance(conv);
  Json items = Json::array();
  for (const auto& e : result.alignment.entries) {
    items.push_back(Json{{"gold", e.gold_indices},
                         {"asr", e.asr_indices},
                         {"match_type", to_string(e.match_type)},
                         {"similarity", e.similarity}});
  }
  return Json{{"alignments", items}}.dump();
}

std::string builtin_judge_reply(const llm::GenerationRequest& request) {
  const std::string gold = between(request.payload, "reference:\n\"", "\"\n\nFinal patient utterance, ASR:");
  const std::string hyp = between(request.payload, "ASR:\n\"", "\"\n\nWrite your reasoning");
  const auto cfg = textnorm::NormalizationConfig::metrics_subset();
  const auto r = textnorm::tokenize_words(textnorm::normalize(gold, cfg));
  const auto h = textnorm::tokenize_words(textnorm::normalize(hyp, cfg));
  const auto ops = metrics::edit_alignment(std::span<const std::string>(r), std::span<const std::string>(h));

  std::vector<std::string> changed;
  bool content_substitution = false;
  for (const auto& op : ops) {
    if (op.kind == metrics::EditKind::hit) continue;
    const std::string* a = op.ref_pos >= 0 ? &r[static_cast<std::size_t>(op.ref_pos)] : nullptr;
    const std::string* b = op.hyp_pos >= 0 ? &h[static_cast<std::size_t>(op.hyp_pos)] : nullptr;
    if (a) changed.push_back(*a);
    if (b) changed.push_back(*b);
    if (a && b && !function_words().count(*a) && !function_words().count(*b)) content_substitution = true;
  }
  auto any_in = [&](const std::set<std::string>& words) {
    for (const auto& w : changed) {
      if (words.count(w)) return true;
    }
    return false;
  };
  auto has_rule = [&](std::size_t i) { return request.instruction.find(rule_lines()[i]) != std::string::npos; };

  int label = 1;
  std::string why;
  if (changed.empty()) {
    label = 0;
    why = "After removing fillers the two utterances are the same.";
  } else if (std::all_of(changed.begin(), changed.end(), [](const std::string& w) { return function_words().count(w); })) {
    label = 0;
    why = "Only function words differ.";
  } else if (any_in(negations())) {
    label = has_rule(0) ? 2 : 1;
    why = "A negation differs between the utterances.";
  } else if (any_in(number_words())) {
    label = has_rule(1) ? 2 : 1;
    why = "A number or quantity differs between the utterances.";
  } else if (content_substitution) {
    label = has_rule(2) ? 2 : 1;
    why = "A content word was replaced.";
  } else {
    why = "Words are missing or added, but no key detail is replaced.";
  }
  std::string words;
  for (const auto& w : changed) words += (words.empty() ? "" : ", ") + w;
  return why + " Differing words: " + (words.empty() ? "none" : words) + ".\nlabel: " + std::to_string(label);
}

std::string builtin_reflection_reply(const llm::GenerationRequest& request) {
  const std::string current = between(request.payload, "<<<\n", "\n>>>");
  int wanted = 3;
  const std::string count = between(request.payload, "Propose ", " improved");
  if (!count.empty()) wanted = std::max(1, std::atoi(count.c_str()));
  Json candidates = Json::array();
  for (const auto& rule : rule_lines()) {
    if (static_cast<int>(candidates.size()) >= wanted) break;
    if (current.find(rule) == std::string::npos) candidates.push_back(current + "\n" + rule);
  }
  return Json{{"candidates", candidates}}.dump();
}

llm::MockTransport::Responder builtin_responder() {
  return [](const llm::GenerationRequest& request) {
    if (request.instruction == align::aligner_instruction()) return builtin_aligner_reply(request);
    if (request.instruction == judge::reflection_instruction()) return builtin_reflection_reply(request);
    return builtin_judge_reply(request);
  };
}

std::unique_ptr<llm::Gateway> make_gateway(const GatewayChoice& choice) {
  llm::ProviderProfile profile;
  if (choice.profile) {
    try {
      profile = llm::profile_from_json(read_json_file(*choice.profile));
    } catch (const std::exception& e) {
      throw EnvironmentError("provider profile '" + choice.profile->string() + "': " + e.what());
    }
  } else if (choice.mock) {
    profile.rate_limit_rpm = 1'000'000;
    profile.max_concurrency = std::max(1, choice.threads);
  } else {
    throw EnvironmentError("no provider configured; pass --provider-profile or --mock-gateway");
  }
  std::shared_ptr<llm::Transport> transport;
  if (choice.mock) {
    std::shared_ptr<llm::MockTransport> mock;
    try {
      mock = choice.script ? llm::MockTransport::from_script_file(*choice.script) : std::make_shared<llm::MockTransport>();
    } catch (const std::exception& e) {
      throw EnvironmentError("mock script '" + choice.script->string() + "': " + e.what());
    }
    mock->set_responder(builtin_responder());
    profile.kind = "mock";
    transport = mock;
  } else {
    transport = llm::make_transport(profile);
  }
  llm::GatewayOptions options;
  options.audit_log = choice.audit_log;
  return std::make_unique<llm::Gateway>(profile, transport, options);
}

}  // namespace asrimpact::pipeline
