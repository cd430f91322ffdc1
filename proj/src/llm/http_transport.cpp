#include <httplib.h>

#include "asrimpact/llm/transports.hpp"

namespace asrimpact::llm {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw TransportFailure(TransportFailure::Kind::fatal, "endpoint has no scheme");
  const auto path_start = endpoint.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = endpoint.substr(0, path_start);
  out.path = path_start == std::string::npos ? "" : endpoint.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

}  // namespace

Json HttpTransport::request_body(const GenerationRequest& request, const ProviderProfile& profile) {
  Json body{{"model", profile.model},
            {"messages", Json::array({Json{{"role", "system"}, {"content", request.instruction}},
                                      Json{{"role", "user"}, {"content", request.payload}}})},
            {"temperature", request.params.temperature},
            {"top_p", request.params.top_p},
            {"top_k", request.params.top_k},
            {"max_tokens", request.params.max_tokens}};
  if (request.contract == ResponseContract::structured_document) {
    body["response_format"] = Json{{"type", "json_object"}};
  }
  return body;
}

TransportResponse HttpTransport::parse_response(int status, const std::string& body) {
  using Kind = TransportFailure::Kind;
  if (status == 401 || status == 403) throw TransportFailure(Kind::auth, "HTTP " + std::to_string(status));
  if (status == 429) throw TransportFailure(Kind::rate_limited, "HTTP 429");
  if (status >= 500) throw TransportFailure(Kind::transient, "HTTP " + std::to_string(status));
  if (status != 200) {
    throw TransportFailure(Kind::fatal, "HTTP " + std::to_string(status) + ": " + body.substr(0, 200));
  }
  const Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
    throw TransportFailure(Kind::fatal, "unexpected response body");
  }
  const auto& message = j["choices"][0]["message"];
  TransportResponse out;
  if (message.contains("content") && message["content"].is_string()) out.text = message["content"].get<std::string>();
  if (j.contains("usage")) {
    out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
    out.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
  }
  return out;
}

TransportResponse HttpTransport::send(const GenerationRequest& request, const ProviderProfile& profile,
                                      const std::string& secret) {
  const auto url = split_url(profile.endpoint);
  httplib::Client client(url.origin);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(profile.timeout).count();
  client.set_connection_timeout(static_cast<time_t>(std::min<long long>(seconds, 30)), 0);
  client.set_read_timeout(static_cast<time_t>(seconds), 0);
  httplib::Headers headers;
  if (!secret.empty()) headers.emplace("Authorization", "Bearer " + secret);
  const auto result =
      client.Post(url.path + "/chat/completions", headers, request_body(request, profile).dump(), "application/json");
  if (!result) {
    throw TransportFailure(TransportFailure::Kind::transient, "connection failed: " + httplib::to_string(result.error()));
  }
  return parse_response(result->status, result->body);
}

std::shared_ptr<Transport> make_transport(const ProviderProfile& profile) {
  if (profile.kind == "openai") return std::make_shared<HttpTransport>();
  return std::make_shared<MockTransport>();
}

}  // namespace asrimpact::llm
