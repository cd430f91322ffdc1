#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>

#include "asrimpact/llm/gateway.hpp"

namespace asrimpact::llm {

// Deterministic provider: scripted responses keyed by request digest, then an
// optional responder, with faults replayed before any response.
class MockTransport final : public Transport {
 public:
  using Responder = std::function<std::string(const GenerationRequest&)>;

  void script(std::string_view instruction, std::string_view payload, std::string text);
  void script_digest(std::string digest, std::string text);
  void set_responder(Responder responder);
  void push_fault(TransportFailure::Kind kind, std::string message = "scripted fault");

  TransportResponse send(const GenerationRequest& request, const ProviderProfile& profile,
                         const std::string& secret) override;

  int calls() const;
  std::vector<GenerationRequest> requests() const;

  // {"responses": [{"digest"|"instruction"+"payload", "text"}], "faults": ["transient", ...]}
  static std::shared_ptr<MockTransport> from_script(const Json& script);
  static std::shared_ptr<MockTransport> from_script_file(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::string> table_;
  Responder responder_;
  std::deque<TransportFailure> faults_;
  std::vector<GenerationRequest> requests_;
};

// OpenAI-compatible chat completions over HTTP(S).
class HttpTransport final : public Transport {
 public:
  TransportResponse send(const GenerationRequest& request, const ProviderProfile& profile,
                         const std::string& secret) override;
  bool requires_secret() const override { return true; }

  // Request body and response parsing, exposed for tests.
  static Json request_body(const GenerationRequest& request, const ProviderProfile& profile);
  static TransportResponse parse_response(int status, const std::string& body);
};

std::shared_ptr<Transport> make_transport(const ProviderProfile& profile);

}  // namespace asrimpact::llm
