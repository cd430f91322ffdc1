// Command-line entry point. Exit codes: 0 success, 1 invalid input or
// settings, 2 environment or provider failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "asrimpact/pipeline/commands.hpp"
#include "asrimpact/pipeline/config.hpp"

namespace fs = std::filesystem;
using namespace asrimpact;
using namespace asrimpact::pipeline;

namespace {

struct GlobalFlags {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::optional<fs::path> provider_profile;
  std::optional<std::string> mock_script;
  bool mock = false;
  std::optional<fs::path> audit_log;
  std::optional<int> threads;
};

RunContext make_context(const GlobalFlags& g) {
  PipelineConfig config = g.config ? load_config(*g.config) : PipelineConfig{};
  if (g.seed) config.seed = *g.seed;
  if (g.out) config.output_dir = *g.out;
  if (g.provider_profile) config.provider_profile = *g.provider_profile;
  if (g.threads) config.threads = *g.threads;
  config.check();
  RunContext ctx(std::move(config));
  ctx.gateway.mock = g.mock;
  if (g.mock_script && !g.mock_script->empty()) ctx.gateway.script = fs::path(*g.mock_script);
  ctx.gateway.audit_log = g.audit_log;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clinical-impact evaluation of ASR transcripts", "asrimpact"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kToolVersion));

  GlobalFlags g;
  app.add_option("--config", g.config, "YAML settings file");
  app.add_option("--seed", g.seed, "Seed recorded in every output");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--provider-profile", g.provider_profile, "LLM provider profile (JSON)");
  auto* mock = app.add_option("--mock-gateway", g.mock_script, "Use the offline mock gateway, optionally scripted")
                   ->expected(0, 1);
  app.add_option("--audit-log", g.audit_log, "Append LLM request digests to this file");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::vector<fs::path> import_files;
  std::optional<std::string> mapping;
  auto* import = app.add_subcommand("import", "Read transcripts into canonical conversations");
  import->add_option("files", import_files, "Input files")->required();
  import->add_option("--mapping", mapping, "dora_like, primock_like or generic");
  bool merge_asr = false;
  import->add_flag("--merge-asr-turns", merge_asr, "Also merge adjacent same-speaker ASR turns");

  fs::path conversations;
  bool remove_fillers = false;
  auto* normalize = app.add_subcommand("normalize", "Write a normalized copy of a conversations file");
  normalize->add_option("conversations", conversations)->required();
  normalize->add_flag("--remove-non-lexical", remove_fillers, "Also drop filler tokens");

  std::optional<std::string> method;
  auto* align = app.add_subcommand("align", "Align gold and ASR patient utterances");
  align->add_option("conversations", conversations)->required();
  align->add_option("--method", method, "timestamp, edit_distance or llm");

  fs::path alignment;
  auto* curate = app.add_subcommand("curate", "Select labelable pairs from aligned conversations");
  curate->add_option("conversations", conversations)->required();
  curate->add_option("alignment", alignment)->required();

  fs::path examples;
  auto* score = app.add_subcommand("score", "Compute text metrics for every example");
  score->add_option("examples", examples)->required();

  fs::path scores, gold;
  auto* analyze = app.add_subcommand("analyze", "Relate metric scores to clinical-impact labels");
  analyze->add_option("scores", scores)->required();
  analyze->add_option("gold", gold, "Gold labels (JSONL or exported gold document)")->required();

  std::optional<fs::path> prompt;
  auto* judge = app.add_subcommand("judge", "Classify examples with the LLM judge");
  judge->add_option("examples", examples)->required();
  judge->add_option("--prompt", prompt, "prompt.json from optimize or a plain instruction file");

  std::optional<fs::path> resume;
  auto* optimize = app.add_subcommand("optimize", "Improve the judge prompt by reflection");
  optimize->add_option("examples", examples)->required();
  optimize->add_option("gold", gold)->required();
  optimize->add_option("--resume", resume, "Continue from an optimizer checkpoint");

  ReportInputs report_inputs;
  auto* report = app.add_subcommand("report", "Assemble report.json and flat tables");
  report->add_option("--analysis", report_inputs.analysis);
  report->add_option("--annotations", report_inputs.annotations, "Per-annotator labels (JSONL)");
  report->add_option("--verdicts", report_inputs.verdicts);
  report->add_option("--gold", report_inputs.gold);
  report->add_option("--require", report_inputs.required, "Sections that must be present");

  std::optional<fs::path> serve_examples;
  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  serve->add_option("--examples", serve_examples);

  int synth_count = 20;
  auto* synth = app.add_subcommand("synth", "Write a synthetic consultation suite");
  synth->add_option("--conversations", synth_count);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  g.mock = mock->count() > 0;

  try {
    RunContext ctx = make_context(g);
    Json summary;
    if (*import) {
      if (mapping) ctx.config.import_mapping = *mapping;
      if (merge_asr) ctx.config.merge_hypothesis_turns = true;
      summary = cmd_import(ctx, import_files);
    } else if (*normalize) {
      summary = cmd_normalize(ctx, conversations, remove_fillers);
    } else if (*align) {
      if (method) ctx.config.aligner = aligner_method_from_string(*method);
      summary = cmd_align(ctx, conversations);
    } else if (*curate) {
      summary = cmd_curate(ctx, conversations, alignment);
    } else if (*score) {
      summary = cmd_score(ctx, examples);
    } else if (*analyze) {
      summary = cmd_analyze(ctx, scores, gold);
    } else if (*judge) {
      summary = cmd_judge(ctx, examples, prompt);
    } else if (*optimize) {
      summary = cmd_optimize(ctx, examples, gold, resume);
    } else if (*report) {
      summary = cmd_report(ctx, report_inputs);
    } else if (*serve) {
      cmd_serve(ctx, serve_examples, std::cerr);
      return 0;
    } else if (*synth) {
      summary = cmd_synth(ctx, synth_count);
    }
    std::cout << summary.dump(2) << "\n";
    return 0;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const EnvironmentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
