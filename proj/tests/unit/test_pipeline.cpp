#include <doctest.h>

#include <fstream>
#include <sstream>

#include "../support/temp_dir.hpp"
#include "asrimpact/judge/judge.hpp"
#include "asrimpact/pipeline/analysis.hpp"
#include "asrimpact/pipeline/commands.hpp"
#include "asrimpact/pipeline/config.hpp"
#include "asrimpact/pipeline/curate.hpp"
#include "asrimpact/pipeline/importer.hpp"
#include "asrimpact/pipeline/synthetic.hpp"

using namespace asrimpact;
using namespace asrimpact::pipeline;
using asrimpact::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string generic_line(const std::string& conv, const std::string& side, const std::string& speaker,
                         const std::string& text) {
  return Json{{"conversation_id", conv}, {"side", side}, {"speaker", speaker}, {"text", text}}.dump() + "\n";
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// Doctor prompt before each patient turn; ASR mirrors the layout.
struct PairFixture {
  std::vector<Conversation> conversations;
  std::vector<Alignment> alignments;
};

PairFixture pair_fixture(const std::vector<std::pair<std::string, std::string>>& pairs) {
  Conversation c;
  c.id = "conv";
  Alignment a;
  a.conversation_id = c.id;
  for (const auto& [gold, hyp] : pairs) {
    for (auto* side : {&c.gold, &c.hypothesis}) {
      Utterance d;
      d.index = static_cast<int>(side->size());
      d.speaker = Speaker::doctor;
      d.text = "and how is that";
      side->push_back(d);
    }
    Utterance g;
    g.index = static_cast<int>(c.gold.size());
    g.text = gold;
    c.gold.push_back(g);
    Utterance h;
    h.index = static_cast<int>(c.hypothesis.size());
    h.text = hyp;
    c.hypothesis.push_back(h);
    AlignmentEntry e;
    e.gold_indices = {g.index};
    e.asr_indices = {h.index};
    e.match_type = MatchType::fuzzy;
    e.similarity = 0.9;
    a.entries.push_back(e);
  }
  return {{c}, {a}};
}

}  // namespace

TEST_CASE("import merges adjacent same-speaker gold turns") {
  std::string in;
  in += generic_line("c1", "gold", "doctor", "how are you");
  in += generic_line("c1", "gold", "patient", "i have a headache");
  in += generic_line("c1", "gold", "patient", "since monday");
  in += generic_line("c1", "hypothesis", "doctor", "how are you");
  in += generic_line("c1", "hypothesis", "patient", "i have a headache");
  in += generic_line("c1", "hypothesis", "patient", "since monday");
  const auto r = import_text(in, "fixture.jsonl", {});
  REQUIRE(r.conversations.size() == 1);
  const auto& c = r.conversations.front();
  REQUIRE(c.gold.size() == 2);
  CHECK(c.gold[1].text == "i have a headache since monday");
  CHECK(c.gold[1].index == 1);
  CHECK(r.gold_turns_merged == 1);
  // ASR segmentation is left to the aligner unless asked otherwise.
  CHECK(c.hypothesis.size() == 3);

  ImportOptions merge_both;
  merge_both.merge_hypothesis_turns = true;
  const auto m = import_text(in, "fixture.jsonl", merge_both);
  CHECK(m.conversations.front().hypothesis.size() == 2);
  CHECK(m.hypothesis_turns_merged == 1);
}

TEST_CASE("import leaves alternating speakers unchanged") {
  std::string in;
  for (int i = 0; i < 6; ++i) {
    in += generic_line("c1", "gold", i % 2 ? "patient" : "doctor", "turn " + std::to_string(i));
    in += generic_line("c1", "hypothesis", i % 2 ? "patient" : "doctor", "turn " + std::to_string(i));
  }
  const auto r = import_text(in, "fixture.jsonl", {});
  CHECK(r.conversations.front().gold.size() == 6);
  CHECK(r.gold_turns_merged == 0);
}

TEST_CASE("import names the missing field and the line") {
  std::string in = generic_line("c1", "gold", "doctor", "hello");
  in += Json{{"conversation_id", "c1"}, {"side", "gold"}, {"text", "no speaker here"}}.dump() + "\n";
  try {
    import_text(in, "bad.jsonl", {});
    FAIL("expected an error");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("speaker") != std::string::npos);
    CHECK(msg.find("bad.jsonl:2") != std::string::npos);
  }
  CHECK_THROWS_AS(import_text("{not json\n", "bad.jsonl", {}), InputError);
  CHECK_THROWS_AS(import_text("", "empty.jsonl", {}), InputError);
}

TEST_CASE("import reads dora_like and primock_like layouts") {
  const Json conv{{"conversation_id", "d1"},
                  {"asr_provider", "vendor"},
                  {"transcript",
                   {{{"speaker", "doctor"}, {"text", "any pain"}}, {{"speaker", "patient"}, {"text", "no pain"}}}},
                  {"asr",
                   {{{"speaker", "doctor"}, {"text", "any pain"}},
                    {{"speaker", "patient"}, {"text", "no pain"}, {"confidence", 0.8}}}}};
  const std::string header = header_record(FileHeader{"synthetic_transcripts", "0.1.0", "x", 1}).dump() + "\n";
  ImportOptions dora;
  dora.mapping = ImportMapping::dora_like;
  const auto d = import_text(header + conv.dump() + "\n", "dora.jsonl", dora);
  REQUIRE(d.conversations.size() == 1);
  CHECK(d.conversations[0].source == Source::dora);
  CHECK(d.conversations[0].asr_provider == "vendor");
  CHECK(d.conversations[0].hypothesis[1].confidence == doctest::Approx(0.8));

  const std::string tsv =
      "consultation\ttier\tspeaker\tstart\tend\ttext\n"
      "p1\treference\tdoctor\t0.0\t1.0\thello there\n"
      "p1\treference\tpatient\t1.0\t2.0\ti feel sick\n"
      "p1\tasr\tdoctor\t0.0\t1.0\thello there\n"
      "p1\tasr\tpatient\t1.1\t2.0\ti feel sick\n";
  ImportOptions primock;
  primock.mapping = ImportMapping::primock_like;
  const auto p = import_text(tsv, "p.tsv", primock);
  REQUIRE(p.conversations.size() == 1);
  CHECK(p.conversations[0].gold[1].start_time == doctest::Approx(1.0));
  CHECK(p.conversations[0].hypothesis[1].start_time == doctest::Approx(1.1));
  CHECK_THROWS_AS(import_text("consultation\ttier\n", "p.tsv", primock), InputError);
  CHECK_THROWS_AS(import_mapping_from_string("other"), InputError);
}

TEST_CASE("curation drops perfect matches and keeps the high band") {
  PipelineConfig cfg;
  // WER 0, WER 0.2, and WER 9/20 = 0.45.
  const std::string long_ref = "alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo lima mike "
                               "november oscar papa quebec romeo sierra tango";
  const std::string long_hyp = "zulu zulu zulu zulu zulu zulu zulu zulu zulu juliet kilo lima mike "
                               "november oscar papa quebec romeo sierra tango";
  auto f = pair_fixture({{"i feel fine today", "i feel fine today"},
                         {"there is some extra bleeding", "there isn't some extra bleeding"},
                         {long_ref, long_hyp}});
  auto r = curate(f.conversations, f.alignments, cfg);
  CHECK(r.stats.perfect == 1);
  REQUIRE(r.pairs.size() == 2);
  CHECK(r.pairs[0].wer == doctest::Approx(0.2));
  CHECK(r.pairs[1].wer == doctest::Approx(0.45));
  CHECK(r.pairs[1].band == "high");
  for (const auto& p : r.pairs) CHECK_FALSE(p.example.label.has_value());

  cfg.curation.include_high_band = false;
  r = curate(f.conversations, f.alignments, cfg);
  CHECK(r.pairs.size() == 1);
  CHECK(r.stats.high_band_excluded == 1);
}

TEST_CASE("curation filler filter removes 3 of 20 pairs") {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < 17; ++i) {
    pairs.push_back({"the pain started " + std::to_string(i + 2) + " days ago in my knee",
                     "the pain started " + std::to_string(i + 2) + " days ago in my knees"});
  }
  pairs.push_back({"um i have a headache", "i have a headache"});
  pairs.push_back({"i have a cough", "uh i have a cough"});
  pairs.push_back({"it hurts mhm when i walk", "it hurts when i walk um"});
  const auto f = pair_fixture(pairs);

  PipelineConfig cfg;
  const auto r = curate(f.conversations, f.alignments, cfg);
  CHECK(r.stats.entries == 20);
  CHECK(r.stats.perfect == 0);
  CHECK(r.stats.fillers_only == 3);
  CHECK(r.pairs.size() == 17);

  cfg.curation.filter_non_lexical = false;
  CHECK(curate(f.conversations, f.alignments, cfg).pairs.size() == 20);
}

TEST_CASE("curation attaches the context window and rejects empty results") {
  auto f = pair_fixture({{"a b c", "a b d"}, {"one two", "one too"}});
  PipelineConfig cfg;
  const auto r = curate(f.conversations, f.alignments, cfg);
  REQUIRE(r.pairs.size() == 2);
  // Two doctor turns and the previous patient turn, in order.
  const auto& ctx = r.pairs[1].example.context;
  REQUIRE(ctx.size() == 3);
  CHECK(ctx[0].speaker == Speaker::doctor);
  CHECK(ctx[1].speaker == Speaker::patient);
  CHECK(ctx[1].text == "a b c");
  CHECK(ctx[2].speaker == Speaker::doctor);
  CHECK(r.pairs[0].example.context.size() == 1);

  auto perfect = pair_fixture({{"same", "same"}});
  CHECK_THROWS_AS(curate(perfect.conversations, perfect.alignments, cfg), InputError);
  f.alignments[0].conversation_id = "unknown";
  CHECK_THROWS_AS(curate(f.conversations, f.alignments, cfg), InputError);
}

TEST_CASE("curation sampling per band is seeded") {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < 12; ++i) pairs.push_back({"w" + std::to_string(i) + " a b c d", "x a b c d"});
  const auto f = pair_fixture(pairs);
  PipelineConfig cfg;
  cfg.curation.max_per_band = 5;
  const auto a = curate(f.conversations, f.alignments, cfg);
  const auto b = curate(f.conversations, f.alignments, cfg);
  CHECK(a.pairs.size() == 5);
  CHECK(a.stats.sampled_out == 7);
  for (std::size_t i = 0; i < a.pairs.size(); ++i) CHECK(a.pairs[i].example.id == b.pairs[i].example.id);
}

TEST_CASE("config parsing is strict and digests are stable") {
  const auto c = parse_config(R"(seed: 11
threads: 2
aligner: {method: llm, recovery_threshold: 0.7}
curation: {high_band: [0.3, 0.9], include_above_high_band: true}
split: {train: 10, validation: 5, test: 5}
judge: {budget: 100}
bootstrap: {iterations: 200, level: 0.9}
)",
                              ".");
  CHECK(c.seed == 11);
  CHECK(c.aligner == AlignerMethod::llm);
  CHECK(c.recovery_threshold == doctest::Approx(0.7));
  CHECK(c.curation.high_band_low == doctest::Approx(0.3));
  CHECK(c.curation.include_above_high_band);
  CHECK(c.split.train == 10);
  CHECK(c.judge.budget == 100);
  CHECK(c.bootstrap().iterations == 200);

  const PipelineConfig defaults;
  CHECK(defaults.recovery_threshold == 0.65);
  CHECK(defaults.max_output_tokens == 65000);
  CHECK(defaults.bootstrap_iterations == 1000);
  CHECK(defaults.judge.minibatch_size == 3);
  CHECK(defaults.split.train == 218);
  CHECK(defaults.split.validation == 30);
  CHECK(defaults.split.test == 50);

  CHECK_THROWS_AS(parse_config("seeed: 1\n", "."), InputError);
  CHECK_THROWS_AS(parse_config("aligner: {method: magic}\n", "."), InputError);
  CHECK_THROWS_AS(parse_config("threads: 0\n", "."), InputError);
  CHECK_THROWS_AS(parse_config("seed: [1\n", "."), InputError);
  CHECK_THROWS_AS(parse_config("cost_matrix: /no/such/file.json\n", "."), EnvironmentError);

  PipelineConfig other = c;
  CHECK(config_digest(other) == config_digest(c));
  other.output_dir = "elsewhere";
  other.threads = 8;
  CHECK(config_digest(other) == config_digest(c));
  other.seed = 12;
  CHECK(config_digest(other) != config_digest(c));
}

TEST_CASE("report sections follow the inputs") {
  TempDir dir("report");
  PipelineConfig cfg;
  cfg.bootstrap_iterations = 50;
  const FileHeader h{"x", "0.1.0", "d", 1};

  std::vector<AnnotationRecord> ann;
  std::vector<LabeledExample> gold;
  std::vector<judge::JudgeVerdict> verdicts;
  // True labels 0,0,1,1,2,2; predictions 0,1,1,1,2,0.
  const int truth[] = {0, 0, 1, 1, 2, 2};
  const int pred[] = {0, 1, 1, 1, 2, 0};
  for (int i = 0; i < 6; ++i) {
    const std::string id = "e" + std::to_string(i);
    for (const char* who : {"a1", "a2"}) ann.push_back({id, who, truth[i], truth[i] ? "why" : "", 0});
    LabeledExample e;
    e.id = id;
    e.label = truth[i];
    gold.push_back(e);
    verdicts.push_back({id, "reasoning", pred[i], "baseline"});
  }
  auto write = [&](const std::string& name, const auto& records) {
    std::ostringstream out;
    write_jsonl(out, h, records);
    write_file(dir.path() / name, out.str());
    return dir.path() / name;
  };
  ReportInputs in;
  in.annotations = write("ann.jsonl", ann);
  in.gold = write("gold.jsonl", gold);
  in.verdicts = write("verdicts.jsonl", verdicts);

  const Json analysis{{"metrics",
                       {{{"metric", "wer"},
                         {"family", "edit_distance"},
                         {"n", 6},
                         {"kendall_tau_b", 0.5},
                         {"tau_ci", {0.1, 0.9}},
                         {"tau_degenerate", false},
                         {"enrichment_delta", 0.3},
                         {"enrichment_ci", {0.1, 0.5}},
                         {"per_class_mean", {0.1, 0.2, 0.4}}},
                        {{"metric", "bleu1"},
                         {"family", "ngram"},
                         {"n", 6},
                         {"kendall_tau_b", -0.5},
                         {"tau_ci", {-0.9, -0.1}},
                         {"tau_degenerate", false},
                         {"enrichment_delta", -0.3},
                         {"enrichment_ci", {-0.5, -0.1}},
                         {"per_class_mean", {0.9, 0.8, 0.6}}}}}};
  write_file(dir.path() / "analysis.json", analysis.dump());
  in.analysis = dir.path() / "analysis.json";

  const auto r = build_report(in, cfg, Json{{"kind", "report"}});
  const auto& s = r.document.at("sections");
  for (const auto& name : kReportSections) CHECK(s.contains(name));
  CHECK(s.at("agreement").at(0).at("kappa").get<double>() == doctest::Approx(1.0));
  CHECK(s.at("enrichment_deltas").size() == 2);
  const auto confusion = s.at("classification").at("confusion");
  const Json expected = Json::array({{1, 1, 0}, {0, 2, 0}, {1, 0, 1}});
  CHECK(confusion == expected);
  // Cost matrix scores averaged over the six verdicts.
  const double mean_cost = (1.2 + 0.3 + 1.5 + 1.5 + 1.5 - 1.2) / 6.0;
  CHECK(s.at("classification").at("mean_cost_score").get<double>() == doctest::Approx(mean_cost).epsilon(1e-12));
  CHECK(r.document.at("inputs").size() == 4);
  for (const auto& f : r.document.at("inputs")) CHECK(f.at("sha256").get<std::string>().size() == 64);
  CHECK(r.tables.count("enrichment_deltas.csv"));
  CHECK(r.tables.at("classification_confusion.csv").find("true") != std::string::npos);

  ReportInputs only_analysis;
  only_analysis.analysis = in.analysis;
  only_analysis.required = {"agreement", "classification"};
  try {
    build_report(only_analysis, cfg, Json::object());
    FAIL("expected missing sections");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("agreement") != std::string::npos);
    CHECK(msg.find("classification") != std::string::npos);
  }
  only_analysis.required = {"correlations"};
  const auto partial = build_report(only_analysis, cfg, Json::object());
  CHECK(partial.document.at("missing_sections").size() == 2);
  CHECK_THROWS_AS(build_report(ReportInputs{}, cfg, Json::object()), InputError);
}

TEST_CASE("score rows round trip and metric selection is checked") {
  LabeledExample e;
  e.id = "e1";
  e.gold_final = "there is some extra bleeding";
  e.hyp_final = "there isn't some extra bleeding";
  PipelineConfig cfg;
  const auto rows = score_examples({e}, cfg);
  REQUIRE(rows.size() == 1);
  bool saw_wer = false;
  for (const auto& m : rows[0].results) {
    if (m.name == "wer") {
      saw_wer = true;
      CHECK(m.raw == doctest::Approx(0.2));
    }
  }
  CHECK(saw_wer);
  const auto back = score_row_from_json(to_json_value(rows[0]));
  CHECK(to_json_value(back) == to_json_value(rows[0]));

  cfg.metrics = {"wer", "no_such_metric"};
  CHECK_THROWS_AS(score_examples({e}, cfg), InputError);
  cfg.metrics = {};
  cfg.scorers = {"no_such_scorer"};
  CHECK_THROWS_AS(score_examples({e}, cfg), InputError);
}

TEST_CASE("commands write provenance and stay deterministic") {
  auto run = [](const fs::path& out) {
    PipelineConfig cfg;
    cfg.seed = 5;
    cfg.output_dir = out;
    cfg.threads = 3;
    cfg.aligner = AlignerMethod::llm;
    cfg.bootstrap_iterations = 100;
    RunContext ctx(cfg);
    ctx.gateway.mock = true;
    cmd_synth(ctx, 6);
    ctx.config.import_mapping = "dora_like";
    cmd_import(ctx, {out / "synthetic_transcripts.jsonl"});
    cmd_align(ctx, out / "conversations.jsonl");
    cmd_curate(ctx, out / "conversations.jsonl", out / "alignment.json");
    cmd_score(ctx, out / "examples.jsonl");
    cmd_analyze(ctx, out / "scores.jsonl", out / "synthetic_gold.jsonl");
    cmd_judge(ctx, out / "examples.jsonl", std::nullopt);
    ReportInputs in;
    in.analysis = out / "analysis.json";
    in.annotations = out / "synthetic_annotations.jsonl";
    in.verdicts = out / "verdicts.jsonl";
    in.gold = out / "synthetic_gold.jsonl";
    in.required = kReportSections;
    cmd_report(ctx, in);
    return ctx.digest;
  };
  TempDir a("cmd_a");
  TempDir b("cmd_b");
  const auto digest = run(a.path());
  run(b.path());
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path());
    const auto text = read_file(entry.path());
    CHECK_MESSAGE(text == read_file(b.path() / rel), rel.string());
    CHECK_MESSAGE(text.find(digest) != std::string::npos, rel.string());
    CHECK_MESSAGE(text.find(kToolVersion) != std::string::npos, rel.string());
  }
  // Every JSON lines file starts with a header naming the seed.
  const Json first = Json::parse(read_file(a.path() / "examples.jsonl").substr(0, read_file(a.path() / "examples.jsonl").find('\n')));
  CHECK(is_header_record(first));
  CHECK(first.dump().find("\"seed\":5") != std::string::npos);
}

TEST_CASE("commands map failures to input and environment errors") {
  TempDir dir("cmd_err");
  PipelineConfig cfg;
  cfg.output_dir = dir.path();
  RunContext ctx(cfg);
  CHECK_THROWS_AS(cmd_score(ctx, dir.path() / "missing.jsonl"), EnvironmentError);
  write_file(dir.path() / "bad.jsonl", "{\"id\": 3}\n");
  CHECK_THROWS_AS(cmd_score(ctx, dir.path() / "bad.jsonl"), InputError);
  // No gateway configured.
  LabeledExample e;
  e.id = "e";
  e.gold_final = "a";
  e.hyp_final = "b";
  std::ostringstream out;
  write_jsonl(out, ctx.header("examples"), std::vector<LabeledExample>{e});
  write_file(dir.path() / "ex.jsonl", out.str());
  CHECK_THROWS_AS(cmd_judge(ctx, dir.path() / "ex.jsonl", std::nullopt), EnvironmentError);
  CHECK_THROWS_AS(cmd_synth(ctx, 0), InputError);
}
