#pragma once

// Deterministic stand-ins for the aligner, judge and reflection models, used
// with --mock-gateway when no script answers a request. They make dry runs
// and end-to-end tests possible without a provider.

#include <memory>
#include <optional>
#include <string>

#include "asrimpact/llm/gateway.hpp"
#include "asrimpact/llm/transports.hpp"
#include "asrimpact/pipeline/config.hpp"

namespace asrimpact::pipeline {

// Reply of the edit-distance baseline to an aligner payload.
std::string builtin_aligner_reply(const llm::GenerationRequest& request);

// Rule-based verdict: differences confined to fillers or articles rate 0,
// other differences 1, and categories named by a "Always treat ..." line
// in the instruction rate 2.
std::string builtin_judge_reply(const llm::GenerationRequest& request);

// Adds the first rule lines the current instruction lacks.
std::string builtin_reflection_reply(const llm::GenerationRequest& request);

// Routes by instruction to the three replies above.
llm::MockTransport::Responder builtin_responder();

struct GatewayChoice {
  // Use the mock transport; `script` optionally holds scripted replies.
  bool mock = false;
  std::optional<std::filesystem::path> script;
  std::optional<std::filesystem::path> profile;
  std::optional<std::filesystem::path> audit_log;
  int threads = 1;
};

// Throws EnvironmentError for unreadable profiles or scripts.
std::unique_ptr<llm::Gateway> make_gateway(const GatewayChoice& choice);

}  // namespace asrimpact::pipeline
