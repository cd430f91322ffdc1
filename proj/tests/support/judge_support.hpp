#pragma once

// Scripted judge and reflection models for optimizer tests. An instruction
// carries a "[skill=K]" marker; the scripted judge answers case i correctly
// iff i % 10 < K, otherwise it names the next class. Reflection proposes
// instructions with the skill shifted by `step`.

#include <memory>
#include <regex>
#include <string>
#include <vector>

#include "asrimpact/core/clock.hpp"
#include "asrimpact/judge/judge.hpp"
#include "asrimpact/llm/transports.hpp"

namespace asrimpact::testing {

inline std::string skill_instruction(int skill, const std::string& variant = "base") {
  return "Rate the clinical impact of the transcription error. [skill=" + std::to_string(skill) + "] (" + variant +
         ")";
}

inline int skill_of(const std::string& text) {
  static const std::regex re(R"(\[skill=(-?\d+)\])");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return 0;
  return std::stoi(m[1].str());
}

// Labeled examples "case-000" ... with labels cycling through `mix`.
inline judge::ExampleIndex scripted_examples(const std::vector<int>& labels) {
  judge::ExampleIndex out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "case-%03zu", i);
    LabeledExample e;
    e.id = id;
    e.context = {{Speaker::doctor, "any problems since the last visit"}};
    e.gold_final = "case " + std::to_string(i) + " the pain is in my chest";
    e.hyp_final = "case " + std::to_string(i) + " the pain is in my chess";
    e.label = labels[i];
    if (labels[i] > 0) e.justification = "location of the pain changes";
    out.emplace(e.id, e);
  }
  return out;
}

inline llm::MockTransport::Responder scripted_judge(std::vector<int> labels) {
  return [labels = std::move(labels)](const llm::GenerationRequest& req) {
    static const std::regex case_re(R"(case (\d+) )");
    std::smatch m;
    if (!std::regex_search(req.payload, m, case_re)) return std::string("I am not sure.");
    const auto i = static_cast<std::size_t>(std::stoi(m[1].str()));
    const int truth = labels.at(i);
    const bool correct = static_cast<int>(i % 10) < skill_of(req.instruction);
    const int label = correct ? truth : (truth + 1) % 3;
    return "The words differ in one place and I weigh the clinical meaning.\nlabel: " + std::to_string(label);
  };
}

inline llm::MockTransport::Responder scripted_reflection(int step, int candidates = 3) {
  return [step, candidates](const llm::GenerationRequest& req) {
    static const std::regex current(R"(<<<\n([\s\S]*?)\n>>>)");
    std::smatch m;
    std::regex_search(req.payload, m, current);
    const int skill = skill_of(m.size() > 1 ? m[1].str() : std::string());
    Json list = Json::array();
    for (int v = 0; v < candidates; ++v) {
      list.push_back(skill_instruction(skill + step, "from " + std::to_string(skill) + " v" + std::to_string(v)));
    }
    return Json{{"candidates", list}}.dump();
  };
}

struct MockGateway {
  std::shared_ptr<llm::MockTransport> transport = std::make_shared<llm::MockTransport>();
  ManualClock clock;
  std::unique_ptr<llm::Gateway> gateway;

  explicit MockGateway(llm::MockTransport::Responder responder) {
    transport->set_responder(std::move(responder));
    llm::ProviderProfile p;
    p.rate_limit_rpm = 1'000'000;
    p.max_concurrency = 8;
    llm::GatewayOptions o;
    o.clock = &clock;
    gateway = std::make_unique<llm::Gateway>(p, transport, o);
  }
};

}  // namespace asrimpact::testing
