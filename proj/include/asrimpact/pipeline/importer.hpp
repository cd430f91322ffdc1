#pragma once

// Source transcript formats mapped onto canonical conversations.
//
// generic: JSON lines, one utterance each: conversation_id, side ("gold" or
//   "hypothesis"), speaker, text, optional start, end, confidence, source,
//   asr_provider.
// dora_like: JSON lines, one consultation each: conversation_id, asr_provider,
//   transcript and asr arrays of {speaker, text, start, end, confidence}.
// primock_like: tab separated with a header row: consultation, tier
//   ("reference" or "asr"), speaker, start, end, text, optional confidence.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "asrimpact/core/model.hpp"

namespace asrimpact::pipeline {

enum class ImportMapping { dora_like, primock_like, generic };
ImportMapping import_mapping_from_string(std::string_view s);

struct ImportOptions {
  ImportMapping mapping = ImportMapping::generic;
  bool merge_hypothesis_turns = false;
};

struct ImportResult {
  // Ordered by id.
  std::vector<Conversation> conversations;
  int gold_turns_merged = 0;
  int hypothesis_turns_merged = 0;
};

// Throws InputError naming the file, line and field on unparseable input.
ImportResult import_files(const std::vector<std::filesystem::path>& files, const ImportOptions& options);
ImportResult import_text(const std::string& contents, const std::string& name, const ImportOptions& options);

// Joins adjacent utterances of the same speaker and renumbers from 0. Returns
// the number of utterances folded into a predecessor.
int merge_adjacent_turns(std::vector<Utterance>& side);

}  // namespace asrimpact::pipeline
