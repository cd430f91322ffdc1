#pragma once

// JSON schemas for conversations.jsonl, alignment.json, examples.jsonl,
// labels.jsonl and report.json. Field names follow the domain types.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "asrimpact/core/model.hpp"

namespace asrimpact {

using Json = nlohmann::ordered_json;

void to_json(Json& j, const Utterance& u);
void from_json(const Json& j, Utterance& u);
void to_json(Json& j, const Conversation& c);
void from_json(const Json& j, Conversation& c);
void to_json(Json& j, const AlignmentEntry& e);
void from_json(const Json& j, AlignmentEntry& e);
void to_json(Json& j, const Alignment& a);
void from_json(const Json& j, Alignment& a);
void to_json(Json& j, const ContextTurn& t);
void from_json(const Json& j, ContextTurn& t);
void to_json(Json& j, const LabeledExample& e);
void from_json(const Json& j, LabeledExample& e);
void to_json(Json& j, const AnnotationRecord& r);
void from_json(const Json& j, AnnotationRecord& r);
void to_json(Json& j, const AdjudicationRecord& r);
void from_json(const Json& j, AdjudicationRecord& r);
void to_json(Json& j, const CostMatrix& c);
void from_json(const Json& j, CostMatrix& c);

// Provenance line written first in every line-delimited output.
struct FileHeader {
  std::string kind;
  std::string tool_version;
  std::string config_digest;
  std::optional<std::uint64_t> seed;
};

Json header_record(const FileHeader& header);
bool is_header_record(const Json& j);

// Calls `on_record` for every non-header line. Parse failures raise
// SchemaError naming the 1-based line number.
void read_jsonl(std::istream& in, const std::function<void(const Json&, int line)>& on_record);
void read_jsonl_file(const std::filesystem::path& path,
                     const std::function<void(const Json&, int line)>& on_record);

template <typename T>
std::vector<T> read_jsonl_records(const std::filesystem::path& path) {
  std::vector<T> out;
  read_jsonl_file(path, [&](const Json& j, int line) {
    try {
      out.push_back(j.get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

template <typename T>
void write_jsonl(std::ostream& out, const FileHeader& header, const std::vector<T>& records) {
  out << header_record(header).dump() << '\n';
  for (const auto& r : records) out << Json(r).dump() << '\n';
}

// Alignment documents carry a list of per-conversation alignments.
Json alignment_document(const std::vector<Alignment>& alignments, const FileHeader& header);
std::vector<Alignment> parse_alignment_document(const Json& doc);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace asrimpact
