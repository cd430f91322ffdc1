#include "asrimpact/pipeline/importer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "asrimpact/core/serialize.hpp"
#include "asrimpact/core/validate.hpp"
#include "asrimpact/pipeline/config.hpp"

namespace asrimpact::pipeline {

namespace {

struct Builder {
  Conversation conv;
  bool seen_source = false;
};

using Builders = std::map<std::string, Builder>;

[[noreturn]] void fail(const std::string& where, const std::string& message) {
  throw InputError(where + ": " + message);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

Speaker parse_speaker(const std::string& raw, const std::string& where) {
  const auto s = lower(raw);
  if (s == "doctor" || s == "clinician") return Speaker::doctor;
  if (s == "patient") return Speaker::patient;
  fail(where, "unknown speaker '" + raw + "'");
}

const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) fail(where, std::string("missing field '") + key + "'");
  return *it;
}

std::string string_field(const Json& j, const char* key, const std::string& where) {
  const auto& v = field(j, key, where);
  if (!v.is_string()) fail(where, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::optional<double> number_field(const Json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) fail(where, std::string("field '") + key + "' must be a number");
  return it->get<double>();
}

Utterance utterance_from(const Json& j, const std::string& where) {
  Utterance u;
  u.speaker = parse_speaker(string_field(j, "speaker", where), where);
  u.text = string_field(j, "text", where);
  u.start_time = number_field(j, "start", where);
  u.end_time = number_field(j, "end", where);
  u.confidence = number_field(j, "confidence", where);
  return u;
}

Json parse_line(const std::string& line, const std::string& where) {
  try {
    return Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail(where, std::string("not valid JSON (") + e.what() + ")");
  }
}

template <typename Fn>
void for_each_line(const std::string& contents, const std::string& name, Fn&& fn) {
  std::istringstream in(contents);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line, name + ":" + std::to_string(n));
  }
}

void import_generic(const std::string& contents, const std::string& name, Builders& out) {
  for_each_line(contents, name, [&](const std::string& line, const std::string& where) {
    const Json j = parse_line(line, where);
    if (is_header_record(j)) return;
    const auto id = string_field(j, "conversation_id", where);
    const auto side = string_field(j, "side", where);
    if (side != "gold" && side != "hypothesis") fail(where, "field 'side' must be \"gold\" or \"hypothesis\"");
    auto& b = out[id];
    b.conv.id = id;
    if (j.contains("source") && !b.seen_source) {
      try {
        b.conv.source = source_from_string(string_field(j, "source", where));
      } catch (const SchemaError& e) {
        fail(where, e.what());
      }
      b.seen_source = true;
    }
    if (j.contains("asr_provider")) b.conv.asr_provider = string_field(j, "asr_provider", where);
    (side == "gold" ? b.conv.gold : b.conv.hypothesis).push_back(utterance_from(j, where));
  });
}

void import_dora(const std::string& contents, const std::string& name, Builders& out) {
  for_each_line(contents, name, [&](const std::string& line, const std::string& where) {
    const Json j = parse_line(line, where);
    if (is_header_record(j)) return;
    const auto id = string_field(j, "conversation_id", where);
    if (out.count(id)) fail(where, "duplicate conversation '" + id + "'");
    Builder b;
    b.conv.id = id;
    b.conv.source = Source::dora;
    if (j.contains("asr_provider")) b.conv.asr_provider = string_field(j, "asr_provider", where);
    for (const char* key : {"transcript", "asr"}) {
      const auto& arr = field(j, key, where);
      if (!arr.is_array()) fail(where, std::string("field '") + key + "' must be an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto at = where + " " + key + "[" + std::to_string(i) + "]";
        (std::string(key) == "transcript" ? b.conv.gold : b.conv.hypothesis).push_back(utterance_from(arr[i], at));
      }
    }
    out.emplace(id, std::move(b));
  });
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t pos = 0;
  for (;;) {
    const auto tab = line.find('\t', pos);
    cols.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
    if (tab == std::string::npos) break;
    pos = tab + 1;
  }
  return cols;
}

std::optional<double> tsv_number(const std::string& s, const char* column, const std::string& where) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) fail(where, std::string("column '") + column + "' is not a number: '" + s + "'");
  return v;
}

void import_primock(const std::string& contents, const std::string& name, Builders& out) {
  static const std::vector<std::string> kColumns = {"consultation", "tier", "speaker", "start", "end", "text"};
  bool header = true;
  for_each_line(contents, name, [&](const std::string& line, const std::string& where) {
    const auto cols = split_tabs(line);
    if (header) {
      header = false;
      for (std::size_t i = 0; i < kColumns.size(); ++i) {
        if (i >= cols.size() || lower(cols[i]) != kColumns[i]) {
          fail(where, "header must start with consultation, tier, speaker, start, end, text; column '" +
                          kColumns[i] + "' is missing");
        }
      }
      return;
    }
    if (cols.size() < 6 || cols.size() > 7) {
      fail(where, "expected 6 or 7 tab separated columns, found " + std::to_string(cols.size()));
    }
    if (cols[0].empty()) fail(where, "column 'consultation' is empty");
    const auto tier = lower(cols[1]);
    if (tier != "reference" && tier != "asr") fail(where, "column 'tier' must be reference or asr");
    auto& b = out[cols[0]];
    b.conv.id = cols[0];
    b.conv.source = Source::primock57;
    Utterance u;
    u.speaker = parse_speaker(cols[2], where);
    u.start_time = tsv_number(cols[3], "start", where);
    u.end_time = tsv_number(cols[4], "end", where);
    u.text = cols[5];
    if (cols.size() == 7) u.confidence = tsv_number(cols[6], "confidence", where);
    (tier == "reference" ? b.conv.gold : b.conv.hypothesis).push_back(std::move(u));
  });
  if (header) fail(name, "empty file; a header row is required");
}

ImportResult finish(Builders& builders, const ImportOptions& options) {
  ImportResult r;
  for (auto& [id, b] : builders) {
    r.gold_turns_merged += merge_adjacent_turns(b.conv.gold);
    if (options.merge_hypothesis_turns) {
      r.hypothesis_turns_merged += merge_adjacent_turns(b.conv.hypothesis);
    } else {
      for (std::size_t i = 0; i < b.conv.hypothesis.size(); ++i) b.conv.hypothesis[i].index = static_cast<int>(i);
    }
    const auto violations = validate_conversation(b.conv);
    if (!violations.empty()) {
      std::string msg = "conversation '" + id + "' is invalid:";
      for (const auto& v : violations) msg += " [" + v.side + " " + std::to_string(v.index) + "] " + v.message + ";";
      throw InputError(msg);
    }
    r.conversations.push_back(std::move(b.conv));
  }
  if (r.conversations.empty()) throw InputError("no conversations found in the input");
  return r;
}

void import_into(const std::string& contents, const std::string& name, ImportMapping mapping, Builders& out) {
  switch (mapping) {
    case ImportMapping::generic: return import_generic(contents, name, out);
    case ImportMapping::dora_like: return import_dora(contents, name, out);
    case ImportMapping::primock_like: return import_primock(contents, name, out);
  }
}

}  // namespace

ImportMapping import_mapping_from_string(std::string_view s) {
  if (s == "dora_like") return ImportMapping::dora_like;
  if (s == "primock_like") return ImportMapping::primock_like;
  if (s == "generic") return ImportMapping::generic;
  throw InputError("unknown import mapping '" + std::string(s) + "' (expected dora_like, primock_like or generic)");
}

int merge_adjacent_turns(std::vector<Utterance>& side) {
  std::vector<Utterance> out;
  std::vector<int> parts;
  int merged = 0;
  for (auto& u : side) {
    if (!out.empty() && out.back().speaker == u.speaker) {
      auto& prev = out.back();
      if (!u.text.empty()) prev.text = prev.text.empty() ? u.text : prev.text + " " + u.text;
      if (!prev.start_time) prev.start_time = u.start_time;
      if (u.end_time) prev.end_time = u.end_time;
      // Confidence is averaged only when every part has one.
      if (prev.confidence && u.confidence) {
        prev.confidence = (*prev.confidence * parts.back() + *u.confidence) / (parts.back() + 1);
      } else {
        prev.confidence.reset();
      }
      ++parts.back();
      ++merged;
      continue;
    }
    out.push_back(std::move(u));
    parts.push_back(1);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].index = static_cast<int>(i);
  side = std::move(out);
  return merged;
}

ImportResult import_text(const std::string& contents, const std::string& name, const ImportOptions& options) {
  Builders builders;
  import_into(contents, name, options.mapping, builders);
  return finish(builders, options);
}

ImportResult import_files(const std::vector<std::filesystem::path>& files, const ImportOptions& options) {
  if (files.empty()) throw InputError("import needs at least one input file");
  Builders builders;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw EnvironmentError("cannot read '" + f.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    import_into(buf.str(), f.string(), options.mapping, builders);
  }
  return finish(builders, options);
}

}  // namespace asrimpact::pipeline
