#include <set>

#include "asrimpact/align/align.hpp"
#include "asrimpact/llm/extract.hpp"
#include "asrimpact/textnorm/normalize.hpp"

namespace asrimpact::align {

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string describe(const std::vector<Violation>& violations) {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += v.rule + ": " + v.message;
  }
  return out;
}

std::string normalized_transcript(const std::vector<const Utterance*>& utts) {
  const auto cfg = textnorm::NormalizationConfig::standard();
  std::string out;
  for (const Utterance* u : utts) {
    const auto n = textnorm::normalize(u->text, cfg);
    if (n.empty()) continue;
    if (!out.empty()) out += ' ';
    out += n;
  }
  return out;
}

std::vector<int> read_indices(const Json& item, const char* key, const char* alt, std::vector<Violation>& problems,
                              int at) {
  const Json* field = nullptr;
  if (item.contains(key)) {
    field = &item.at(key);
  } else if (item.contains(alt)) {
    field = &item.at(alt);
  }
  std::vector<int> out;
  if (field == nullptr || field->is_null()) return out;
  if (!field->is_array()) {
    problems.push_back({"response", at, "schema", std::string("'") + key + "' must be an array of indices"});
    return out;
  }
  for (const auto& v : *field) {
    if (!v.is_number_integer()) {
      problems.push_back({"response", at, "schema", std::string("'") + key + "' holds a non-integer index"});
      continue;
    }
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace

std::string aligner_instruction() {
  return R"(You align two transcripts of the same clinical conversation: a human gold transcript and an automatic speech recognition (ASR) transcript. Both list the patient's utterances in spoken order with an integer index.

Map every gold utterance to the ASR utterance or utterances that carry the same speech.
- One gold utterance may map to one ASR utterance, or to several consecutive ASR utterances when the recognizer split it.
- Several consecutive gold utterances may map to one ASR utterance when the recognizer merged them.
- If no ASR utterance carries a gold utterance, map it to an empty list.
- Each ASR utterance may be used at most once. Keep the mapping in order: later gold utterances never map to earlier ASR utterances.
- Use timestamps and confidences as hints only; judge by what was said, including paraphrases and recognition errors.
- Never invent or rewrite text. Only refer to utterances by index.

Reply with one JSON document and nothing else:
{"alignments": [{"gold": [<gold index>, ...], "asr": [<asr index>, ...], "match_type": "exact" | "fuzzy" | "missing", "similarity": <number from 0 to 1>}]}
Use "exact" when the words are the same apart from case and punctuation, "fuzzy" for any other match, and "missing" with an empty "asr" list when nothing matches.)";
}

std::string aligner_payload(const Conversation& conv) {
  Json gold = Json::array();
  for (const Utterance* u : alignable_gold(conv)) {
    gold.push_back(Json{{"index", u->index}, {"text", u->text}, {"start", optional_number(u->start_time)},
                        {"end", optional_number(u->end_time)}});
  }
  Json asr = Json::array();
  for (const Utterance* u : alignable_hypothesis(conv)) {
    asr.push_back(Json{{"index", u->index}, {"text", u->text}, {"confidence", optional_number(u->confidence)},
                       {"start", optional_number(u->start_time)}, {"end", optional_number(u->end_time)}});
  }
  return Json{{"conversation_id", conv.id}, {"gold", gold}, {"asr", asr}}.dump(2);
}

std::string repair_payload(const std::string& payload, const std::string& problem) {
  return payload + "\n\nYour previous reply could not be used (" + problem +
         "). Reply again with only the JSON document described in the instructions.";
}

Alignment parse_aligner_response(const Json& doc, const Conversation& conv) {
  std::vector<Violation> problems;
  if (!doc.is_object() || !doc.contains("alignments") || !doc.at("alignments").is_array()) {
    throw AlignmentError("response has no 'alignments' array",
                         {{"response", -1, "schema", "response has no 'alignments' array"}});
  }
  std::set<int> gold_known;
  std::set<int> asr_known;
  for (const Utterance* u : alignable_gold(conv)) gold_known.insert(u->index);
  for (const Utterance* u : alignable_hypothesis(conv)) asr_known.insert(u->index);
  const std::string gold_all = normalized_transcript(alignable_gold(conv));
  const std::string asr_all = normalized_transcript(alignable_hypothesis(conv));
  const auto cfg = textnorm::NormalizationConfig::standard();

  Alignment out;
  out.conversation_id = conv.id;
  int at = 0;
  for (const auto& item : doc.at("alignments")) {
    if (!item.is_object()) {
      problems.push_back({"response", at++, "schema", "alignment item is not an object"});
      continue;
    }
    AlignmentEntry e;
    e.gold_indices = read_indices(item, "gold", "gold_indices", problems, at);
    e.asr_indices = read_indices(item, "asr", "asr_indices", problems, at);
    for (int g : e.gold_indices) {
      if (!gold_known.contains(g)) {
        problems.push_back({"response", at, "gold_index_unknown", "gold index " + std::to_string(g) + " does not exist"});
      }
    }
    for (int a : e.asr_indices) {
      if (!asr_known.contains(a)) {
        problems.push_back({"response", at, "asr_index_unknown", "ASR index " + std::to_string(a) + " does not exist"});
      }
    }
    for (const auto& [key, haystack] : {std::pair<const char*, const std::string*>{"gold_text", &gold_all},
                                        std::pair<const char*, const std::string*>{"asr_text", &asr_all}}) {
      if (!item.contains(key) || !item.at(key).is_string()) continue;
      const auto quoted = textnorm::normalize(item.at(key).get<std::string>(), cfg);
      if (!quoted.empty() && gold_all.find(quoted) == std::string::npos && asr_all.find(quoted) == std::string::npos) {
        (void)haystack;
        problems.push_back({"response", at, "introduced_text",
                            std::string(key) + " quotes text found in neither transcript"});
      }
    }
    std::sort(e.gold_indices.begin(), e.gold_indices.end());
    std::sort(e.asr_indices.begin(), e.asr_indices.end());
    finalize_entry(e, conv);
    if (item.contains("match_type") && item.at("match_type").is_string()) {
      try {
        e.match_type = match_type_from_string(item.at("match_type").get<std::string>());
      } catch (const std::exception&) {
        problems.push_back({"response", at, "schema", "unknown match_type"});
      }
    }
    if (item.contains("similarity") && !item.at("similarity").is_null()) {
      if (!item.at("similarity").is_number()) {
        problems.push_back({"response", at, "schema", "similarity is not a number"});
      } else {
        e.similarity = item.at("similarity").get<double>();
      }
    }
    out.entries.push_back(std::move(e));
    ++at;
  }
  if (!problems.empty()) throw AlignmentError("unusable aligner response: " + describe(problems), problems);
  sort_entries(out);
  return out;
}

Alignment align_llm(const AlignerRequest& request, llm::Gateway& gateway, const RefineOptions& refine_options) {
  if (request.max_output_tokens < 1 || request.max_output_tokens > llm::kMaxOutputTokens) {
    throw std::invalid_argument("max_output_tokens must lie in 1.." + std::to_string(llm::kMaxOutputTokens));
  }
  const Conversation& conv = request.conversation;
  if (auto v = validate_conversation(conv); !v.empty()) {
    throw AlignmentError("conversation '" + conv.id + "' is invalid: " + describe(v), v);
  }

  llm::GenerationRequest req;
  req.instruction = aligner_instruction();
  req.payload = aligner_payload(conv);
  req.params = request.decoding;
  req.params.max_tokens = request.max_output_tokens;
  req.contract = llm::ResponseContract::structured_document;
  const std::string original_payload = req.payload;

  Alignment raw;
  std::string raw_text;
  for (int attempt = 0;; ++attempt) {
    std::string problem;
    std::vector<Violation> problems;
    try {
      const auto result = gateway.generate(req);
      raw_text = result.text;
      raw = parse_aligner_response(llm::extract_structured(result.text), conv);
      break;
    } catch (const llm::ContractError& e) {
      raw_text = e.raw();
      problem = e.what();
    } catch (const llm::ExtractionError& e) {
      problem = e.what();
    } catch (const AlignmentError& e) {
      problem = e.what();
      problems = e.violations();
    }
    if (attempt >= 1) {
      throw AlignmentError("aligner output for '" + conv.id + "' unusable after one repair attempt: " + problem,
                           problems, raw_text);
    }
    req.payload = repair_payload(original_payload, problem);
  }

  Alignment refined = refine(raw, conv, refine_options);
  if (auto v = validate_alignment(refined, conv); !v.empty()) {
    throw AlignmentError("alignment for '" + conv.id + "' violates " + std::to_string(v.size()) +
                             " constraint(s): " + describe(v),
                         v, raw_text);
  }
  return refined;
}

}  // namespace asrimpact::align
