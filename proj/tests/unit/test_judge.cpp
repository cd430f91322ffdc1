#include <doctest.h>

#include "../support/judge_support.hpp"
#include "asrimpact/judge/judge.hpp"

using namespace asrimpact;
using namespace asrimpact::judge;
using asrimpact::testing::MockGateway;
using asrimpact::testing::scripted_examples;
using asrimpact::testing::scripted_judge;
using asrimpact::testing::scripted_reflection;
using asrimpact::testing::skill_instruction;

namespace {

LabeledExample bleeding(int label) {
  LabeledExample e;
  e.id = "bleed";
  e.context = {{Speaker::doctor, "any bleeding"}, {Speaker::patient, "a little"}, {Speaker::doctor, "and now"}};
  e.gold_final = "there is some extra bleeding";
  e.hyp_final = "there isn't some extra bleeding";
  e.label = label;
  return e;
}

PromptCandidate prompt(const std::string& instruction = baseline_instruction()) {
  PromptCandidate p;
  p.id = "p0000";
  p.instruction = instruction;
  return p;
}

std::vector<std::string> ids(const ExampleIndex& ex, std::size_t from, std::size_t to) {
  std::vector<std::string> out;
  std::size_t i = 0;
  for (const auto& [id, e] : ex) {
    (void)e;
    if (i >= from && i < to) out.push_back(id);
    ++i;
  }
  return out;
}

}  // namespace

TEST_CASE("cost score matches the clinical table") {
  const double table[3][3] = {{1.2, 0.3, -1.0}, {0.3, 1.5, 0.5}, {-1.2, 0.4, 1.5}};
  const CostMatrix cost;
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 3; ++p) CHECK(cost_score(t, p, cost) == table[t][p]);
  }
  CHECK(cost_score(2, 0, cost) == -1.2);
  CHECK(cost_score(1, 1, cost) == 1.5);
  CHECK(cost_score(0, 2, cost) == -1.0);
  CHECK_THROWS_AS(cost_score(3, 0, cost), std::out_of_range);
  CHECK_THROWS_AS(cost_score(0, -1, cost), std::out_of_range);
}

TEST_CASE("judgment parsing") {
  CHECK(parse_judgment("The negation flips the finding.\nlabel: 2").label == 2);
  CHECK(parse_judgment("The negation flips the finding.\nlabel: 2").reasoning == "The negation flips the finding.");
  CHECK(parse_judgment("Reasoning: fine\n**Label:** 1").label == 1);
  CHECK(parse_judgment(R"({"reasoning": "same meaning", "label": 0})").label == 0);
  CHECK(parse_judgment("```json\n{\"reasoning\": \"x\", \"label\": \"2\"}\n```").label == 2);
  CHECK(parse_judgment("first label: 0 was wrong\nlabel: 1").label == 1);
  CHECK_THROWS_AS(parse_judgment("label: 2"), JudgmentError);
  CHECK_THROWS_AS(parse_judgment("thinking\nlabel: 5"), JudgmentError);
  CHECK_THROWS_AS(parse_judgment("no answer here"), JudgmentError);
  CHECK_THROWS_AS(parse_judgment(R"({"reasoning": "x", "label": 3})"), JudgmentError);
}

TEST_CASE("judge one example") {
  SUBCASE("scripted label") {
    MockGateway m([](const llm::GenerationRequest&) { return std::string("reasoning...\nlabel: 2"); });
    const auto v = judge_one(bleeding(2), prompt(), *m.gateway);
    CHECK(v.label == 2);
    CHECK(v.example_id == "bleed");
    CHECK(v.prompt_id == "p0000");
    CHECK_FALSE(v.reasoning.empty());
    const auto req = m.transport->requests().at(0);
    CHECK(req.params.temperature == 0.1);
    CHECK(req.params.top_p == 0.95);
    CHECK(req.params.top_k == 40);
    CHECK(req.payload.find("there isn't some extra bleeding") != std::string::npos);
    CHECK(req.payload.find("Doctor: any bleeding") != std::string::npos);
  }
  SUBCASE("an invalid label gets one repair, then fails") {
    MockGateway m([](const llm::GenerationRequest&) { return std::string("hmm\nlabel: 5"); });
    CHECK_THROWS_AS(judge_one(bleeding(2), prompt(), *m.gateway), JudgmentError);
    CHECK(m.transport->calls() == 2);
  }
  SUBCASE("identical finals with a faithful model") {
    MockGateway m([](const llm::GenerationRequest& r) {
      const auto g = r.payload.find("reference:\n\"");
      const auto h = r.payload.find("ASR:\n\"");
      const auto gold = r.payload.substr(g + 12, r.payload.find('"', g + 12) - g - 12);
      const auto hyp = r.payload.substr(h + 6, r.payload.find('"', h + 6) - h - 6);
      return std::string("Compared the two utterances.\nlabel: ") + (gold == hyp ? "0" : "2");
    });
    auto e = bleeding(0);
    e.hyp_final = e.gold_final;
    CHECK(judge_one(e, prompt(), *m.gateway).label == 0);
    CHECK(judge_one(bleeding(2), prompt(), *m.gateway).label == 2);
  }
  SUBCASE("batch failures are counted, not thrown") {
    MockGateway m([](const llm::GenerationRequest& r) {
      return r.payload.find("chess") != std::string::npos ? std::string("?") : std::string("ok\nlabel: 1");
    });
    auto a = bleeding(1);
    auto b = bleeding(1);
    b.id = "other";
    b.hyp_final = "the pain is in my chess";
    const auto res = judge_batch({a, b}, prompt(), *m.gateway, {}, 2);
    CHECK(res.verdicts[0].has_value());
    CHECK_FALSE(res.verdicts[1].has_value());
    REQUIRE(res.failures.size() == 1);
    CHECK(res.failures[0].example_id == "other");
  }
}

TEST_CASE("feedback text") {
  const CostMatrix cost;
  const auto miss = feedback_for(bleeding(2), {"bleed", "fine", 0, "p"}, cost);
  CHECK(miss.find("missed a significant-impact error") != std::string::npos);
  CHECK(miss.find("-1.2") != std::string::npos);
  CHECK(miss.find("\"is\" -> \"isn't\"") != std::string::npos);
  auto over = bleeding(0);
  over.justification = "harmless";
  const auto text = feedback_for(over, {"bleed", "r", 1, "p"}, cost);
  CHECK(text.find("adjacent-class over-call") != std::string::npos);
  CHECK(text.find("Cost incurred: 0.3") != std::string::npos);
  CHECK(text.find("Annotator justification: harmless") != std::string::npos);
  CHECK(feedback_for(bleeding(2), {"bleed", "fine", 0, "p"}, cost) == miss);
  CHECK_THROWS_AS(feedback_for(bleeding(2), {"bleed", "r", 2, "p"}, cost), std::invalid_argument);
}

TEST_CASE("dominance and final selection") {
  CHECK(dominates({1, 2, 3}, {1, 2, 2}));
  CHECK_FALSE(dominates({1, 2, 3}, {1, 2, 3}));
  CHECK_FALSE(dominates({1, 2, 3}, {2, 1, 3}));
  CHECK_THROWS_AS(dominates({1}, {1, 2}), std::invalid_argument);

  OptimizerState s;
  CHECK_THROWS_AS(select_final(s), std::invalid_argument);
  PromptCandidate a{"a", std::string(200, 'x'), std::nullopt, {}, 0.9, true, 0};
  s.frontier = {a};
  CHECK(select_final(s).id == "a");
  PromptCandidate b{"b", std::string(120, 'x'), std::nullopt, {}, 0.7, true, 0};
  s.frontier = {a, b};
  CHECK(select_final(s).id == "a");
  b.aggregate = 0.9;
  s.frontier = {a, b};
  CHECK(select_final(s).id == "b");
  PromptCandidate c{"0c", std::string(120, 'y'), std::nullopt, {}, 0.9, true, 0};
  s.frontier = {a, b, c};
  CHECK(select_final(s).id == "0c");
}

TEST_CASE("optimizer") {
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) labels.push_back(i % 3 == 0 ? 2 : i % 5 == 0 ? 1 : 0);
  const auto examples = scripted_examples(labels);
  const auto train = ids(examples, 0, 25);
  const auto val = ids(examples, 25, 35);
  const auto test = ids(examples, 35, 40);
  const CostMatrix cost;

  SUBCASE("improving reflection keeps the best aggregate non-decreasing") {
    MockGateway judge(scripted_judge(labels));
    MockGateway reflect(scripted_reflection(+1));
    auto s = initial_state(examples, train, val, test, cost, 10'000, 5, skill_instruction(2), *judge.gateway);
    double best = best_aggregate(s);
    for (int i = 0; i < 5; ++i) {
      s = optimize(s, examples, *judge.gateway, *reflect.gateway);
      CHECK(best_aggregate(s) >= best);
      best = best_aggregate(s);
      for (const auto& x : s.frontier) {
        for (const auto& y : s.frontier) CHECK_FALSE(dominates(x.val_scores, y.val_scores));
      }
    }
    CHECK(best > s.archive.front().aggregate);
    CHECK(s.history.size() == 5);
  }
  SUBCASE("a dominated proposal leaves the frontier alone") {
    MockGateway judge(scripted_judge(labels));
    MockGateway reflect(scripted_reflection(-1, 1));
    auto s = initial_state(examples, train, val, test, cost, 10'000, 5, skill_instruction(5), *judge.gateway);
    const auto frontier = s.frontier;
    for (int i = 0; i < 6; ++i) {
      const auto evals = s.evaluations;
      s = optimize(s, examples, *judge.gateway, *reflect.gateway);
      CHECK(s.frontier == frontier);
      CHECK(s.evaluations > evals);
    }
    CHECK(s.archive.size() > 1);
  }
  SUBCASE("zero budget returns the state unchanged") {
    MockGateway judge(scripted_judge(labels));
    MockGateway reflect(scripted_reflection(+1));
    auto s = initial_state(examples, train, val, test, cost, static_cast<std::int64_t>(val.size()), 5,
                           skill_instruction(2), *judge.gateway);
    CHECK(s.budget == 0);
    const auto calls = judge.transport->calls();
    const auto next = optimize(s, examples, *judge.gateway, *reflect.gateway);
    CHECK(checkpoint_json(next) == checkpoint_json(s));
    CHECK(judge.transport->calls() == calls);
    CHECK(converged(next));
  }
  SUBCASE("the perfect judge scores the weighted diagonal") {
    MockGateway judge(scripted_judge(labels));
    auto s = initial_state(examples, train, val, test, cost, 1000, 5, skill_instruction(10), *judge.gateway);
    int n[3] = {0, 0, 0};
    for (const auto& id : val) ++n[*examples.at(id).label];
    const double expected = (n[0] * 1.2 + n[1] * 1.5 + n[2] * 1.5) / static_cast<double>(val.size());
    CHECK(std::abs(s.frontier.front().aggregate - expected) <= 1e-12);
  }
  SUBCASE("reflection failures skip the iteration's candidates") {
    MockGateway judge(scripted_judge(labels));
    MockGateway reflect([](const llm::GenerationRequest&) { return std::string("no json at all"); });
    auto s = initial_state(examples, train, val, test, cost, 10'000, 5, skill_instruction(2), *judge.gateway);
    s = optimize(s, examples, *judge.gateway, *reflect.gateway);
    CHECK(s.frontier.size() == 1);
    CHECK(s.history.back().notes.size() == 1);
  }
  SUBCASE("checkpoint round trip and resumption") {
    MockGateway judge(scripted_judge(labels));
    MockGateway reflect(scripted_reflection(+1));
    auto s = initial_state(examples, train, val, test, cost, 10'000, 9, skill_instruction(1), *judge.gateway);
    s = optimize(s, examples, *judge.gateway, *reflect.gateway);
    const auto doc = checkpoint_json(s);
    const auto back = state_from_checkpoint(Json::parse(doc.dump()));
    CHECK(checkpoint_json(back) == doc);
    const auto a = optimize(s, examples, *judge.gateway, *reflect.gateway);
    const auto b = optimize(back, examples, *judge.gateway, *reflect.gateway);
    CHECK(checkpoint_json(a) == checkpoint_json(b));
  }
  SUBCASE("threads do not change results") {
    MockGateway judge(scripted_judge(labels));
    MockGateway reflect(scripted_reflection(+1));
    OptimizerConfig one;
    OptimizerConfig four;
    four.threads = 4;
    auto s1 = initial_state(examples, train, val, test, cost, 10'000, 3, skill_instruction(1), *judge.gateway, one);
    auto s4 = initial_state(examples, train, val, test, cost, 10'000, 3, skill_instruction(1), *judge.gateway, four);
    s1 = run_optimizer(s1, examples, *judge.gateway, *reflect.gateway, 4, one);
    s4 = run_optimizer(s4, examples, *judge.gateway, *reflect.gateway, 4, four);
    CHECK(checkpoint_json(s1) == checkpoint_json(s4));
  }
  SUBCASE("provenance follows the lineage") {
    MockGateway judge(scripted_judge(labels));
    MockGateway reflect(scripted_reflection(+1, 1));
    auto s = initial_state(examples, train, val, test, cost, 10'000, 5, skill_instruction(3), *judge.gateway);
    s = run_optimizer(s, examples, *judge.gateway, *reflect.gateway, 20);
    const auto& best = select_final(s);
    const auto p = prompt_provenance(s, best);
    CHECK(p.at("lineage").front() == "p0000");
    CHECK(p.at("lineage").back() == best.id);
    CHECK(p.at("evaluations") == s.evaluations);
  }
}
