#include "asrimpact/core/serialize.hpp"

#include <fstream>
#include <sstream>

namespace asrimpact {

namespace {

template <typename T>
Json nullable(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

template <typename T>
std::optional<T> read_nullable(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->template get<T>();
}

const Json& require(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(std::string("missing field '") + key + "'");
  return *it;
}

}  // namespace

void to_json(Json& j, const Utterance& u) {
  j = Json{{"index", u.index},
           {"speaker", to_string(u.speaker)},
           {"text", u.text},
           {"start_time", nullable(u.start_time)},
           {"end_time", nullable(u.end_time)},
           {"confidence", nullable(u.confidence)}};
}

void from_json(const Json& j, Utterance& u) {
  u.index = require(j, "index").get<int>();
  u.speaker = speaker_from_string(require(j, "speaker").get<std::string>());
  u.text = require(j, "text").get<std::string>();
  u.start_time = read_nullable<double>(j, "start_time");
  u.end_time = read_nullable<double>(j, "end_time");
  u.confidence = read_nullable<double>(j, "confidence");
}

void to_json(Json& j, const Conversation& c) {
  j = Json{{"schema_version", kSchemaVersion},
           {"id", c.id},
           {"source", to_string(c.source)},
           {"asr_provider", c.asr_provider},
           {"gold", c.gold},
           {"hypothesis", c.hypothesis}};
}

void from_json(const Json& j, Conversation& c) {
  c.id = require(j, "id").get<std::string>();
  c.source = source_from_string(j.value("source", std::string("other")));
  c.asr_provider = j.value("asr_provider", std::string());
  c.gold = require(j, "gold").get<std::vector<Utterance>>();
  c.hypothesis = require(j, "hypothesis").get<std::vector<Utterance>>();
}

void to_json(Json& j, const AlignmentEntry& e) {
  j = Json{{"gold_indices", e.gold_indices},
           {"asr_indices", e.asr_indices},
           {"match_type", to_string(e.match_type)},
           {"similarity", e.similarity},
           {"multi_fragment", e.multi_fragment},
           {"duplicate_merged", e.duplicate_merged},
           {"confidence", nullable(e.confidence)},
           {"start_time", nullable(e.start_time)},
           {"end_time", nullable(e.end_time)}};
}

void from_json(const Json& j, AlignmentEntry& e) {
  e.gold_indices = require(j, "gold_indices").get<std::vector<int>>();
  e.asr_indices = require(j, "asr_indices").get<std::vector<int>>();
  e.match_type = match_type_from_string(require(j, "match_type").get<std::string>());
  e.similarity = require(j, "similarity").get<double>();
  e.multi_fragment = j.value("multi_fragment", e.asr_indices.size() > 1);
  e.duplicate_merged = j.value("duplicate_merged", false);
  e.confidence = read_nullable<double>(j, "confidence");
  e.start_time = read_nullable<double>(j, "start_time");
  e.end_time = read_nullable<double>(j, "end_time");
}

void to_json(Json& j, const Alignment& a) {
  j = Json{{"schema_version", kSchemaVersion},
           {"conversation_id", a.conversation_id},
           {"standard", a.standard},
           {"entries", a.entries}};
}

void from_json(const Json& j, Alignment& a) {
  a.conversation_id = require(j, "conversation_id").get<std::string>();
  a.standard = j.value("standard", false);
  a.entries = require(j, "entries").get<std::vector<AlignmentEntry>>();
}

void to_json(Json& j, const ContextTurn& t) {
  j = Json{{"speaker", to_string(t.speaker)}, {"text", t.text}};
}

void from_json(const Json& j, ContextTurn& t) {
  t.speaker = speaker_from_string(require(j, "speaker").get<std::string>());
  t.text = require(j, "text").get<std::string>();
}

void to_json(Json& j, const LabeledExample& e) {
  j = Json{{"schema_version", kSchemaVersion},
           {"id", e.id},
           {"context", e.context},
           {"gold_final", e.gold_final},
           {"hyp_final", e.hyp_final},
           {"label", nullable(e.label)},
           {"justification", nullable(e.justification)},
           {"split", to_string(e.split)},
           {"conversation_id", e.conversation_id},
           {"source", to_string(e.source)}};
}

void from_json(const Json& j, LabeledExample& e) {
  e.id = require(j, "id").get<std::string>();
  e.context = j.value("context", std::vector<ContextTurn>{});
  e.gold_final = require(j, "gold_final").get<std::string>();
  e.hyp_final = require(j, "hyp_final").get<std::string>();
  e.label = read_nullable<int>(j, "label");
  if (e.label && !is_valid_label(*e.label)) {
    throw SchemaError("example '" + e.id + "' has label outside {0,1,2}");
  }
  e.justification = read_nullable<std::string>(j, "justification");
  e.split = split_from_string(j.value("split", std::string("unassigned")));
  e.conversation_id = j.value("conversation_id", std::string());
  e.source = source_from_string(j.value("source", std::string("other")));
}

void to_json(Json& j, const AnnotationRecord& r) {
  j = Json{{"example_id", r.example_id},
           {"annotator_id", r.annotator_id},
           {"label", r.label},
           {"justification", r.justification},
           {"created_at", r.created_at}};
}

void from_json(const Json& j, AnnotationRecord& r) {
  r.example_id = require(j, "example_id").get<std::string>();
  r.annotator_id = require(j, "annotator_id").get<std::string>();
  r.label = require(j, "label").get<int>();
  if (!is_valid_label(r.label)) throw SchemaError("label outside {0,1,2} for example '" + r.example_id + "'");
  r.justification = j.value("justification", std::string());
  r.created_at = j.value("created_at", std::int64_t{0});
}

void to_json(Json& j, const AdjudicationRecord& r) {
  j = Json{{"example_id", r.example_id},
           {"final_label", r.final_label},
           {"resolver_ids", r.resolver_ids},
           {"note", r.note},
           {"created_at", r.created_at}};
}

void from_json(const Json& j, AdjudicationRecord& r) {
  r.example_id = require(j, "example_id").get<std::string>();
  r.final_label = require(j, "final_label").get<int>();
  if (!is_valid_label(r.final_label)) {
    throw SchemaError("final_label outside {0,1,2} for example '" + r.example_id + "'");
  }
  r.resolver_ids = j.value("resolver_ids", std::vector<std::string>{});
  r.note = j.value("note", std::string());
  r.created_at = j.value("created_at", std::int64_t{0});
}

void to_json(Json& j, const CostMatrix& c) {
  j = Json{{"values", c.values()}};
}

void from_json(const Json& j, CostMatrix& c) {
  c = CostMatrix(require(j, "values").get<CostMatrix::Table>());
}

Json header_record(const FileHeader& header) {
  Json j{{"schema_version", kSchemaVersion},
         {"record", "header"},
         {"kind", header.kind},
         {"tool_version", header.tool_version},
         {"config_digest", header.config_digest}};
  j["seed"] = header.seed ? Json(*header.seed) : Json(nullptr);
  return j;
}

bool is_header_record(const Json& j) {
  auto it = j.find("record");
  return it != j.end() && it->is_string() && *it == "header";
}

void read_jsonl(std::istream& in, const std::function<void(const Json&, int line)>& on_record) {
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError("line " + std::to_string(number) + ": " + e.what());
    }
    if (is_header_record(j)) continue;
    try {
      on_record(j, number);
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(number) + ": " + e.what());
    }
  }
}

void read_jsonl_file(const std::filesystem::path& path,
                     const std::function<void(const Json&, int line)>& on_record) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  try {
    read_jsonl(in, on_record);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

Json alignment_document(const std::vector<Alignment>& alignments, const FileHeader& header) {
  Json doc = header_record(header);
  doc.erase("record");
  doc["alignments"] = alignments;
  return doc;
}

std::vector<Alignment> parse_alignment_document(const Json& doc) {
  if (doc.contains("alignments")) return doc.at("alignments").get<std::vector<Alignment>>();
  return {doc.get<Alignment>()};
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
}

}  // namespace asrimpact
