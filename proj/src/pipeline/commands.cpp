#include "asrimpact/pipeline/commands.hpp"

#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include "asrimpact/align/align.hpp"
#include "asrimpact/annotation/server.hpp"
#include "asrimpact/annotation/store.hpp"
#include "asrimpact/core/parallel.hpp"
#include "asrimpact/judge/judge.hpp"
#include "asrimpact/pipeline/curate.hpp"
#include "asrimpact/pipeline/importer.hpp"
#include "asrimpact/pipeline/synthetic.hpp"
#include "asrimpact/textnorm/normalize.hpp"

namespace asrimpact::pipeline {

namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const Json& doc) {
  try {
    write_text_file(path, doc.dump(2) + "\n");
  } catch (const std::exception& e) {
    throw EnvironmentError(e.what());
  }
}

template <typename T>
void write_records(const fs::path& path, const FileHeader& header, const std::vector<T>& records) {
  std::ostringstream out;
  write_jsonl(out, header, records);
  try {
    write_text_file(path, out.str());
  } catch (const std::exception& e) {
    throw EnvironmentError(e.what());
  }
}

void write_lines(const fs::path& path, const FileHeader& header, const std::vector<Json>& lines) {
  std::string out = header_record(header).dump() + "\n";
  for (const auto& l : lines) out += l.dump() + "\n";
  try {
    write_text_file(path, out);
  } catch (const std::exception& e) {
    throw EnvironmentError(e.what());
  }
}

Json load_json(const fs::path& path) {
  if (!fs::exists(path)) throw EnvironmentError("input '" + path.string() + "' does not exist");
  try {
    return read_json_file(path);
  } catch (const SchemaError& e) {
    throw InputError(e.what());
  }
}

std::vector<Alignment> load_alignments(const fs::path& path) {
  const Json doc = load_json(path);
  try {
    return parse_alignment_document(doc);
  } catch (const std::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

Json violations_json(const std::vector<Violation>& vs) {
  Json out = Json::array();
  for (const auto& v : vs) {
    out.push_back(Json{{"side", v.side}, {"index", v.index}, {"rule", v.rule}, {"message", v.message}});
  }
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EnvironmentError("cannot read '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// A prompt document from optimize, or a plain instruction file.
judge::PromptCandidate load_prompt(const std::optional<fs::path>& path, const PipelineConfig& config) {
  judge::PromptCandidate p;
  p.id = "baseline";
  p.instruction = judge::baseline_instruction();
  const auto source = path ? path : config.judge.instruction_file;
  if (!source) return p;
  const std::string text = read_text(*source);
  try {
    const Json doc = Json::parse(text);
    if (doc.is_object() && doc.contains("prompt")) return doc.at("prompt").get<judge::PromptCandidate>();
  } catch (const nlohmann::json::exception&) {
  }
  p.id = "custom";
  p.instruction = text;
  while (!p.instruction.empty() && (p.instruction.back() == '\n' || p.instruction.back() == '\r')) {
    p.instruction.pop_back();
  }
  if (p.instruction.empty()) throw InputError("instruction file '" + source->string() + "' is empty");
  return p;
}

Json classification_json(const stats::ClassificationReport& c) {
  return Json{{"n", c.n},
              {"accuracy", c.accuracy},
              {"macro_f1", c.macro_f1},
              {"precision", c.precision},
              {"recall", c.recall},
              {"f1", c.f1},
              {"support", c.support},
              {"confusion", c.confusion}};
}

// Re-raises the first captured exception, if any.
void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

RunContext::RunContext(PipelineConfig c) : config(std::move(c)), digest(config_digest(config)) {
  gateway.profile = config.provider_profile;
  gateway.threads = config.threads;
}

FileHeader RunContext::header(const std::string& kind) const {
  return FileHeader{kind, kToolVersion, digest, config.seed};
}

Json RunContext::provenance(const std::string& kind) const {
  return Json{{"kind", kind}, {"tool_version", kToolVersion}, {"config_digest", digest}, {"seed", config.seed}};
}

fs::path RunContext::output(const std::string& name) const { return config.output_dir / name; }

Json cmd_import(const RunContext& ctx, const std::vector<fs::path>& files) {
  ImportOptions options;
  options.mapping = import_mapping_from_string(ctx.config.import_mapping);
  options.merge_hypothesis_turns = ctx.config.merge_hypothesis_turns;
  const auto result = import_files(files, options);
  write_records(ctx.output("conversations.jsonl"), ctx.header("conversations"), result.conversations);
  return Json{{"conversations", result.conversations.size()},
              {"gold_turns_merged", result.gold_turns_merged},
              {"hypothesis_turns_merged", result.hypothesis_turns_merged},
              {"output", ctx.output("conversations.jsonl").string()}};
}

Json cmd_normalize(const RunContext& ctx, const fs::path& conversations, bool remove_fillers) {
  auto convs = load_records<Conversation>(conversations);
  const auto cfg = remove_fillers ? ctx.config.metrics_normalization() : ctx.config.standard_normalization();
  for (auto& c : convs) {
    for (auto* side : {&c.gold, &c.hypothesis}) {
      for (auto& u : *side) u.text = textnorm::normalize(u.text, cfg);
    }
  }
  const auto out = ctx.output("conversations.normalized.jsonl");
  write_records(out, ctx.header("conversations_normalized"), convs);
  return Json{{"conversations", convs.size()}, {"remove_non_lexical", remove_fillers}, {"output", out.string()}};
}

Json cmd_align(const RunContext& ctx, const fs::path& conversations) {
  const auto convs = load_records<Conversation>(conversations);
  const auto method = ctx.config.aligner;
  std::unique_ptr<llm::Gateway> gateway;
  if (method == AlignerMethod::llm) gateway = make_gateway(ctx.gateway);

  std::vector<std::optional<Alignment>> results(convs.size());
  std::vector<Json> failures(convs.size());
  std::vector<std::exception_ptr> fatal(convs.size());
  align::RefineOptions refine;
  refine.threshold = ctx.config.recovery_threshold;
  parallel_for(convs.size(), ctx.config.threads, [&](std::size_t i) {
    const auto& conv = convs[i];
    try {
      switch (method) {
        case AlignerMethod::timestamp: results[i] = align::align_timestamp_proximity(conv); break;
        case AlignerMethod::edit_distance:
          results[i] = align::align_edit_distance(conv, ctx.config.gap_cost).alignment;
          break;
        case AlignerMethod::llm: {
          align::AlignerRequest req;
          req.conversation = conv;
          req.max_output_tokens = ctx.config.max_output_tokens;
          results[i] = align::align_llm(req, *gateway, refine);
          break;
        }
      }
    } catch (const align::AlignmentError& e) {
      failures[i] = Json{{"conversation_id", conv.id},
                         {"error", e.what()},
                         {"violations", violations_json(e.violations())},
                         {"raw", e.raw()}};
    } catch (const llm::ContractError& e) {
      failures[i] = Json{{"conversation_id", conv.id}, {"error", e.what()}, {"raw", e.raw()}};
    } catch (const llm::LlmError& e) {
      fatal[i] = std::make_exception_ptr(EnvironmentError("provider failure on '" + conv.id + "': " + e.what()));
    } catch (const std::invalid_argument& e) {
      failures[i] = Json{{"conversation_id", conv.id}, {"error", e.what()}};
    } catch (...) {
      fatal[i] = std::current_exception();
    }
  });
  rethrow_first(fatal);

  std::vector<Alignment> aligned;
  Json failed = Json::array();
  for (std::size_t i = 0; i < convs.size(); ++i) {
    if (results[i]) aligned.push_back(std::move(*results[i]));
    if (!failures[i].is_null()) failed.push_back(failures[i]);
  }
  const auto out = ctx.output("alignment.json");
  write_json(out, alignment_document(aligned, ctx.header("alignment")));
  if (!failed.empty()) {
    write_json(ctx.output("alignment_failures.json"),
               Json{{"provenance", ctx.provenance("alignment_failures")}, {"failures", failed}});
  }
  if (aligned.empty()) throw InputError("no conversation could be aligned; see alignment_failures.json");
  return Json{{"aligned", aligned.size()}, {"failed", failed.size()}, {"method", to_string(method)},
              {"output", out.string()}};
}

Json cmd_curate(const RunContext& ctx, const fs::path& conversations, const fs::path& alignment) {
  const auto convs = load_records<Conversation>(conversations);
  const auto alignments = load_alignments(alignment);
  const auto result = curate(convs, alignments, ctx.config);
  std::vector<LabeledExample> examples;
  Json pairs = Json::array();
  for (const auto& p : result.pairs) {
    examples.push_back(p.example);
    pairs.push_back(Json{{"example_id", p.example.id},
                         {"wer", p.wer},
                         {"wer_without_fillers", p.wer_without_fillers},
                         {"band", p.band}});
  }
  write_records(ctx.output("examples.jsonl"), ctx.header("examples"), examples);
  write_json(ctx.output("curation.json"),
             Json{{"provenance", ctx.provenance("curation")}, {"stats", to_json_value(result.stats)}, {"pairs", pairs}});
  return Json{{"examples", examples.size()}, {"stats", to_json_value(result.stats)}};
}

Json cmd_score(const RunContext& ctx, const fs::path& examples) {
  const auto items = load_records<LabeledExample>(examples);
  const auto rows = score_examples(items, ctx.config);
  std::vector<Json> lines;
  for (const auto& r : rows) lines.push_back(to_json_value(r));
  write_lines(ctx.output("scores.jsonl"), ctx.header("scores"), lines);
  return Json{{"examples", rows.size()}, {"metrics", rows.empty() ? 0 : rows.front().results.size()}};
}

Json cmd_analyze(const RunContext& ctx, const fs::path& scores, const fs::path& gold) {
  if (!fs::exists(scores)) throw EnvironmentError("input '" + scores.string() + "' does not exist");
  if (!fs::exists(gold)) throw EnvironmentError("input '" + gold.string() + "' does not exist");
  std::vector<ScoreRow> rows;
  try {
    read_jsonl_file(scores, [&](const Json& j, int) { rows.push_back(score_row_from_json(j)); });
  } catch (const std::exception& e) {
    throw InputError(scores.string() + ": " + e.what());
  }
  const auto labels = load_gold_labels(gold);
  const auto analysis = analyze_scores(rows, labels, ctx.config.bootstrap());
  std::size_t labelled = 0;
  for (const auto& r : rows) labelled += labels.count(r.example_id);
  Json metrics = Json::array();
  for (const auto& a : analysis) metrics.push_back(to_json_value(a));
  write_json(ctx.output("analysis.json"), Json{{"provenance", ctx.provenance("analysis")},
                                               {"scored", rows.size()},
                                               {"labelled", labelled},
                                               {"bootstrap_iterations", ctx.config.bootstrap_iterations},
                                               {"metrics", metrics}});
  return Json{{"scored", rows.size()}, {"labelled", labelled}, {"metrics", analysis.size()}};
}

Json cmd_judge(const RunContext& ctx, const fs::path& examples, const std::optional<fs::path>& prompt_path) {
  const auto items = load_records<LabeledExample>(examples);
  const auto prompt = load_prompt(prompt_path, ctx.config);
  auto gateway = make_gateway(ctx.gateway);
  const auto batch = judge::judge_batch(items, prompt, *gateway, {}, ctx.config.threads);
  std::vector<judge::JudgeVerdict> verdicts;
  for (const auto& v : batch.verdicts) {
    if (v) verdicts.push_back(*v);
  }
  Json failures = Json::array();
  for (const auto& f : batch.failures) failures.push_back(Json{{"example_id", f.example_id}, {"error", f.error}});
  write_records(ctx.output("verdicts.jsonl"), ctx.header("verdicts"), verdicts);
  write_json(ctx.output("judge_failures.json"),
             Json{{"provenance", ctx.provenance("judge_failures")}, {"prompt_id", prompt.id}, {"failures", failures}});
  if (verdicts.empty() && !items.empty()) {
    throw EnvironmentError("every judgment failed; first error: " + batch.failures.front().error);
  }
  return Json{{"verdicts", verdicts.size()}, {"failures", failures.size()}, {"prompt_id", prompt.id}};
}

Json cmd_optimize(const RunContext& ctx, const fs::path& examples, const fs::path& gold,
                  const std::optional<fs::path>& resume) {
  const auto items = load_records<LabeledExample>(examples);
  const auto labels = load_gold_labels(gold);
  std::vector<LabeledExample> labelled;
  for (auto e : items) {
    auto it = labels.find(e.id);
    if (it == labels.end()) continue;
    e.label = it->second;
    labelled.push_back(std::move(e));
  }
  std::sort(labelled.begin(), labelled.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  if (labelled.empty()) throw InputError("no example has a gold label");

  std::vector<Split> splits;
  try {
    splits = stats::stratified_split(std::span<const LabeledExample>(labelled), ctx.config.split, ctx.config.seed);
  } catch (const stats::StatsError& e) {
    throw InputError(std::string("split: ") + e.what());
  }
  judge::ExampleIndex index;
  std::vector<std::string> train, val, test;
  for (std::size_t i = 0; i < labelled.size(); ++i) {
    labelled[i].split = splits[i];
    index.emplace(labelled[i].id, labelled[i]);
    if (splits[i] == Split::train) train.push_back(labelled[i].id);
    if (splits[i] == Split::validation) val.push_back(labelled[i].id);
    if (splits[i] == Split::test) test.push_back(labelled[i].id);
  }
  if (train.empty() || val.empty()) throw InputError("optimization needs non-empty train and validation splits");

  judge::OptimizerConfig oc;
  oc.minibatch_size = ctx.config.judge.minibatch_size;
  oc.candidates_per_reflection = ctx.config.judge.candidates_per_reflection;
  oc.patience = ctx.config.judge.patience;
  oc.threads = ctx.config.threads;
  auto gateway = make_gateway(ctx.gateway);
  const auto cost = ctx.config.load_cost_matrix();

  judge::OptimizerState state;
  if (resume) {
    try {
      state = judge::state_from_checkpoint(load_json(*resume));
    } catch (const InputError&) {
      throw;
    } catch (const std::exception& e) {
      throw InputError("checkpoint '" + resume->string() + "': " + e.what());
    }
    if (state.train_ids != train || state.val_ids != val) {
      throw InputError("checkpoint '" + resume->string() + "' was made with a different split");
    }
  } else {
    const auto seed_prompt = load_prompt(std::nullopt, ctx.config);
    state = judge::initial_state(index, train, val, test, cost, ctx.config.judge.budget, ctx.config.seed,
                                 seed_prompt.instruction, *gateway, oc);
  }
  const auto checkpoint = ctx.output("optimizer_checkpoint.json");
  auto save = [&](const judge::OptimizerState& s) {
    Json doc = judge::checkpoint_json(s);
    doc["provenance"] = ctx.provenance("optimizer_checkpoint");
    write_json(checkpoint, doc);
  };
  save(state);
  state = judge::run_optimizer(state, index, *gateway, *gateway, ctx.config.judge.max_iterations, oc, {}, save);
  const auto& chosen = judge::select_final(state);

  Json test_json = nullptr;
  if (!test.empty()) {
    std::vector<LabeledExample> test_items;
    for (const auto& id : test) test_items.push_back(index.at(id));
    const auto batch = judge::judge_batch(test_items, chosen, *gateway, {}, ctx.config.threads);
    stats::LabelSeries pred, truth;
    for (std::size_t i = 0; i < test_items.size(); ++i) {
      if (!batch.verdicts[i]) continue;
      pred.ids.push_back(test_items[i].id);
      pred.labels.push_back(batch.verdicts[i]->label);
      truth.ids.push_back(test_items[i].id);
      truth.labels.push_back(*test_items[i].label);
    }
    if (!pred.ids.empty()) {
      test_json = classification_json(stats::classification_report(pred, truth));
      test_json["failures"] = batch.failures.size();
    }
  }
  const Json splits_json{{"train", train.size()}, {"validation", val.size()}, {"test", test.size()}};
  write_json(ctx.output("prompt.json"), Json{{"provenance", ctx.provenance("prompt")},
                                             {"prompt", chosen},
                                             {"lineage", judge::prompt_provenance(state, chosen)},
                                             {"splits", splits_json},
                                             {"iterations", state.iteration},
                                             {"evaluations", state.evaluations},
                                             {"test", test_json}});
  return Json{{"prompt_id", chosen.id},
              {"aggregate", chosen.aggregate},
              {"iterations", state.iteration},
              {"evaluations", state.evaluations},
              {"splits", splits_json}};
}

Json cmd_report(const RunContext& ctx, const ReportInputs& inputs) {
  for (const auto* p : {&inputs.analysis, &inputs.annotations, &inputs.verdicts, &inputs.gold}) {
    if (*p && !fs::exists(**p)) throw EnvironmentError("input '" + (*p)->string() + "' does not exist");
  }
  const auto report = build_report(inputs, ctx.config, ctx.provenance("report"));
  write_json(ctx.output("report.json"), report.document);
  const std::string stamp = "# tool_version=" + std::string(kToolVersion) + " config_digest=" + ctx.digest + "\n";
  for (const auto& [name, csv] : report.tables) {
    try {
      write_text_file(ctx.output("tables") / name, stamp + csv);
    } catch (const std::exception& e) {
      throw EnvironmentError(e.what());
    }
  }
  Json sections = Json::array();
  for (const auto& [k, v] : report.document.at("sections").items()) sections.push_back(k);
  return Json{{"sections", sections}, {"tables", report.tables.size()}};
}

Json cmd_synth(const RunContext& ctx, int count) {
  if (count < 1) throw InputError("synth needs at least one conversation");
  const auto suite = synthetic_suite(ctx.config.seed, count);
  std::vector<Json> transcripts;
  std::vector<Alignment> truths;
  std::vector<LabeledExample> gold;
  auto side = [](const std::vector<Utterance>& us, bool asr) {
    Json out = Json::array();
    for (const auto& u : us) {
      Json j{{"speaker", to_string(u.speaker)}, {"text", u.text}};
      if (u.start_time) j["start"] = *u.start_time;
      if (u.end_time) j["end"] = *u.end_time;
      if (asr && u.confidence) j["confidence"] = *u.confidence;
      out.push_back(j);
    }
    return out;
  };
  for (const auto& sc : suite) {
    const auto& c = sc.conversation;
    transcripts.push_back(Json{{"conversation_id", c.id},
                               {"asr_provider", c.asr_provider},
                               {"transcript", side(c.gold, false)},
                               {"asr", side(c.hypothesis, true)}});
    truths.push_back(sc.truth);
    for (std::size_t i = 0; i < sc.turns.size(); ++i) {
      const auto& t = sc.turns[i];
      if (!t.label) continue;
      const auto it = std::find_if(sc.truth.entries.begin(), sc.truth.entries.end(),
                                   [&](const AlignmentEntry& e) { return e.gold_indices == t.gold_indices; });
      LabeledExample e;
      e.id = example_id(c.id, t.gold_indices.front());
      e.conversation_id = c.id;
      e.gold_final = align::joined_text(c.gold, t.gold_indices);
      if (it != sc.truth.entries.end()) e.hyp_final = align::joined_text(c.hypothesis, it->asr_indices);
      e.label = t.label;
      gold.push_back(std::move(e));
    }
  }
  const auto annotations = synthetic_annotations(suite, ctx.config.seed);
  write_lines(ctx.output("synthetic_transcripts.jsonl"), ctx.header("synthetic_transcripts"), transcripts);
  write_json(ctx.output("synthetic_reference.json"), alignment_document(truths, ctx.header("synthetic_reference")));
  write_records(ctx.output("synthetic_annotations.jsonl"), ctx.header("annotations"), annotations);
  write_records(ctx.output("synthetic_gold.jsonl"), ctx.header("gold"), gold);
  return Json{{"conversations", suite.size()}, {"gold_examples", gold.size()}, {"annotations", annotations.size()}};
}

void cmd_serve(const RunContext& ctx, const std::optional<fs::path>& examples_path, std::ostream& log) {
  const auto& ac = ctx.config.annotation;
  const auto path = examples_path ? examples_path : ac.examples;
  if (!path) throw InputError("serve needs an examples file (--examples or annotation.examples)");
  if (ac.tokens.empty()) throw InputError("serve needs at least one annotator token in annotation.tokens");
  const auto examples = load_records<LabeledExample>(*path);
  std::set<std::string> annotators;
  for (const auto& [token, who] : ac.tokens) annotators.insert(who);
  annotation::StoreOptions so;
  so.seed = ctx.config.seed;
  so.bootstrap = ctx.config.bootstrap();
  std::unique_ptr<annotation::AnnotationStore> store;
  try {
    store = std::make_unique<annotation::AnnotationStore>(
        ac.data_dir, examples, std::vector<std::string>(annotators.begin(), annotators.end()), so);
  } catch (const annotation::ServiceError& e) {
    if (e.kind() == annotation::ErrorKind::storage) throw EnvironmentError(e.what());
    throw InputError(e.what());
  }
  annotation::ServerOptions options;
  options.tokens = ac.tokens;
  options.static_dir = ac.static_dir;
  annotation::AnnotationServer server(*store, options);
  int port = 0;
  try {
    port = server.bind(ac.host, ac.port);
  } catch (const std::exception& e) {
    throw EnvironmentError(e.what());
  }
  log << "serving " << examples.size() << " examples on http://" << ac.host << ":" << port << std::endl;
  server.listen();
}

}  // namespace asrimpact::pipeline
