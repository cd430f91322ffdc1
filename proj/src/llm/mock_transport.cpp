#include "asrimpact/llm/transports.hpp"

namespace asrimpact::llm {

namespace {

TransportFailure::Kind fault_kind(const std::string& s) {
  if (s == "transient") return TransportFailure::Kind::transient;
  if (s == "rate_limited") return TransportFailure::Kind::rate_limited;
  if (s == "auth") return TransportFailure::Kind::auth;
  if (s == "fatal") return TransportFailure::Kind::fatal;
  throw SchemaError("unknown fault kind '" + s + "'");
}

}  // namespace

void MockTransport::script(std::string_view instruction, std::string_view payload, std::string text) {
  script_digest(request_digest(instruction, payload), std::move(text));
}

void MockTransport::script_digest(std::string digest, std::string text) {
  std::lock_guard lock(mutex_);
  table_[std::move(digest)] = std::move(text);
}

void MockTransport::set_responder(Responder responder) {
  std::lock_guard lock(mutex_);
  responder_ = std::move(responder);
}

void MockTransport::push_fault(TransportFailure::Kind kind, std::string message) {
  std::lock_guard lock(mutex_);
  faults_.emplace_back(kind, message);
}

TransportResponse MockTransport::send(const GenerationRequest& request, const ProviderProfile&, const std::string&) {
  Responder responder;
  {
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
    if (!faults_.empty()) {
      TransportFailure f = faults_.front();
      faults_.pop_front();
      throw f;
    }
    const auto digest = request_digest(request.instruction, request.payload);
    if (auto it = table_.find(digest); it != table_.end()) {
      return {it->second, {static_cast<int>(request.payload.size() / 4), static_cast<int>(it->second.size() / 4)}};
    }
    responder = responder_;
    if (!responder) {
      throw TransportFailure(TransportFailure::Kind::fatal, "mock has no scripted response for digest " + digest);
    }
  }
  std::string text = responder(request);
  const int completion = static_cast<int>(text.size() / 4);
  return {std::move(text), {static_cast<int>(request.payload.size() / 4), completion}};
}

int MockTransport::calls() const {
  std::lock_guard lock(mutex_);
  return static_cast<int>(requests_.size());
}

std::vector<GenerationRequest> MockTransport::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::shared_ptr<MockTransport> MockTransport::from_script(const Json& script) {
  auto mock = std::make_shared<MockTransport>();
  if (script.contains("responses")) {
    for (const auto& r : script.at("responses")) {
      const std::string text = r.at("text").get<std::string>();
      if (r.contains("digest")) {
        mock->script_digest(r.at("digest").get<std::string>(), text);
      } else {
        mock->script(r.at("instruction").get<std::string>(), r.at("payload").get<std::string>(), text);
      }
    }
  }
  if (script.contains("faults")) {
    for (const auto& f : script.at("faults")) mock->push_fault(fault_kind(f.get<std::string>()));
  }
  return mock;
}

std::shared_ptr<MockTransport> MockTransport::from_script_file(const std::filesystem::path& path) {
  return from_script(read_json_file(path));
}

}  // namespace asrimpact::llm
