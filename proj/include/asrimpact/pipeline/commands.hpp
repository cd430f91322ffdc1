#pragma once

// File-level pipeline steps behind the CLI subcommands. Each step reads its
// inputs, writes its outputs under the output directory and returns a short
// summary. Every output embeds the tool version and the config digest.

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "asrimpact/core/serialize.hpp"
#include "asrimpact/pipeline/analysis.hpp"
#include "asrimpact/pipeline/config.hpp"
#include "asrimpact/pipeline/mock_models.hpp"

namespace asrimpact::pipeline {

struct RunContext {
  PipelineConfig config;
  std::string digest;
  GatewayChoice gateway;

  explicit RunContext(PipelineConfig c);

  FileHeader header(const std::string& kind) const;
  // {"kind", "tool_version", "config_digest", "seed"} for JSON documents.
  Json provenance(const std::string& kind) const;
  std::filesystem::path output(const std::string& name) const;
};

Json cmd_import(const RunContext& ctx, const std::vector<std::filesystem::path>& files);
Json cmd_normalize(const RunContext& ctx, const std::filesystem::path& conversations, bool remove_fillers);
Json cmd_align(const RunContext& ctx, const std::filesystem::path& conversations);
Json cmd_curate(const RunContext& ctx, const std::filesystem::path& conversations,
                const std::filesystem::path& alignment);
Json cmd_score(const RunContext& ctx, const std::filesystem::path& examples);
Json cmd_analyze(const RunContext& ctx, const std::filesystem::path& scores, const std::filesystem::path& gold);
// `prompt` is a prompt document written by optimize or a plain instruction file.
Json cmd_judge(const RunContext& ctx, const std::filesystem::path& examples,
               const std::optional<std::filesystem::path>& prompt);
Json cmd_optimize(const RunContext& ctx, const std::filesystem::path& examples, const std::filesystem::path& gold,
                  const std::optional<std::filesystem::path>& resume);
Json cmd_report(const RunContext& ctx, const ReportInputs& inputs);
// Synthetic consultations in the dora_like format plus reference alignments,
// two annotators' labels and gold labels.
Json cmd_synth(const RunContext& ctx, int conversations);
// Blocks until the server stops.
void cmd_serve(const RunContext& ctx, const std::optional<std::filesystem::path>& examples, std::ostream& log);

// Reads JSON lines into records, mapping parse failures to InputError and
// unreadable files to EnvironmentError.
template <typename T>
std::vector<T> load_records(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw EnvironmentError("input '" + path.string() + "' does not exist");
  try {
    return read_jsonl_records<T>(path);
  } catch (const SchemaError& e) {
    throw InputError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace asrimpact::pipeline
