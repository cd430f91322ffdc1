#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "asrimpact/core/digest.hpp"
#include "asrimpact/llm/extract.hpp"
#include "asrimpact/llm/gateway.hpp"
#include "asrimpact/llm/transports.hpp"

using namespace asrimpact;
using namespace asrimpact::llm;

namespace {

GenerationRequest request(std::string payload = "payload") {
  GenerationRequest r;
  r.instruction = "instruction";
  r.payload = std::move(payload);
  return r;
}

ProviderProfile mock_profile(int attempts = 3) {
  ProviderProfile p;
  p.retry.max_attempts = attempts;
  p.retry.backoff_base = std::chrono::milliseconds(100);
  return p;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "asrimpact_llm_tests";
  std::filesystem::create_directories(dir);
  auto path = dir / name;
  std::filesystem::remove(path);
  return path;
}

}  // namespace

TEST_CASE("aligner decoding preset") {
  const auto p = DecodingParams::aligner_preset();
  CHECK(p.temperature == 0.1);
  CHECK(p.top_p == 0.95);
  CHECK(p.top_k == 40);
  CHECK(p.max_tokens == 65000);
  DecodingParams bad;
  bad.top_p = 0.0;
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
}

TEST_CASE("scripted mock returns the scripted text") {
  ManualClock clock;
  auto mock = std::make_shared<MockTransport>();
  mock->script("instruction", "payload", "scripted answer");
  Gateway gw(mock_profile(), mock, {&clock});
  const auto r = gw.generate(request());
  CHECK(r.text == "scripted answer");
  CHECK(r.attempts == 1);
  // Exact keying: a whitespace change misses the script.
  CHECK_THROWS_AS(gw.generate(request("payload ")), TransportError);
}

TEST_CASE("transient failures are retried with exponential backoff") {
  ManualClock clock;
  auto mock = std::make_shared<MockTransport>();
  mock->script("instruction", "payload", "ok");
  mock->push_fault(TransportFailure::Kind::transient);
  mock->push_fault(TransportFailure::Kind::transient);
  Gateway gw(mock_profile(3), mock, {&clock});
  const auto r = gw.generate(request());
  CHECK(r.text == "ok");
  CHECK(r.attempts == 3);
  CHECK(clock.total_slept() == std::chrono::milliseconds(100 + 200));
}

TEST_CASE("persistent failure surfaces a transport error") {
  ManualClock clock;
  auto mock = std::make_shared<MockTransport>();
  mock->push_fault(TransportFailure::Kind::transient);
  Gateway gw(mock_profile(1), mock, {&clock});
  CHECK_THROWS_AS(gw.generate(request()), TransportError);
  CHECK(mock->calls() == 1);
}

TEST_CASE("error kinds are distinct") {
  ManualClock clock;
  {
    auto mock = std::make_shared<MockTransport>();
    mock->push_fault(TransportFailure::Kind::auth);
    Gateway gw(mock_profile(3), mock, {&clock});
    CHECK_THROWS_AS(gw.generate(request()), AuthError);
    CHECK(mock->calls() == 1);  // not retried
  }
  {
    auto mock = std::make_shared<MockTransport>();
    for (int i = 0; i < 3; ++i) mock->push_fault(TransportFailure::Kind::rate_limited);
    Gateway gw(mock_profile(3), mock, {&clock});
    CHECK_THROWS_AS(gw.generate(request()), RateLimitError);
    CHECK(mock->calls() == 3);
  }
}

TEST_CASE("contract violations are not retried") {
  ManualClock clock;
  auto mock = std::make_shared<MockTransport>();
  mock->script("instruction", "payload", "sorry, I cannot help");
  Gateway gw(mock_profile(3), mock, {&clock});
  auto req = request();
  req.contract = ResponseContract::structured_document;
  try {
    gw.generate(req);
    FAIL("expected a contract error");
  } catch (const ContractError& e) {
    CHECK(e.raw() == "sorry, I cannot help");
  }
  CHECK(mock->calls() == 1);
}

TEST_CASE("missing secret is an auth error naming the variable only") {
  ProviderProfile p;
  p.name = "remote";
  p.kind = "openai";
  p.endpoint = "http://127.0.0.1:9";
  p.auth_env = "ASRIMPACT_TEST_KEY";
  GatewayOptions opts;
  opts.env = [](const std::string&) { return std::nullopt; };
  Gateway gw(p, std::make_shared<HttpTransport>(), opts);
  CHECK_THROWS_WITH_AS(gw.generate(request()), doctest::Contains("ASRIMPACT_TEST_KEY"), AuthError);
}

TEST_CASE("secrets never reach errors or the audit log") {
  const std::string secret = "sk-test-9f8e7d6c5b4a";
  struct Leaky : Transport {
    TransportResponse send(const GenerationRequest&, const ProviderProfile&, const std::string& s) override {
      throw TransportFailure(TransportFailure::Kind::fatal, "server echoed key " + s + " and Bearer " + s);
    }
  };
  auto leaky = std::make_shared<Leaky>();
  ProviderProfile p = mock_profile(1);
  p.auth_env = "KEY";
  GatewayOptions opts;
  opts.env = [&](const std::string&) { return std::optional<std::string>(secret); };
  const auto log = temp_file("audit_secret.jsonl");
  opts.audit_log = log;
  ManualClock clock;
  opts.clock = &clock;
  Gateway gw(p, leaky, opts);
  try {
    gw.generate(request());
    FAIL("expected failure");
  } catch (const TransportError& e) {
    CHECK(std::string(e.what()).find(secret) == std::string::npos);
    CHECK(std::string(e.what()).find("[REDACTED]") != std::string::npos);
  }
  std::ifstream in(log);
  const std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(contents.find(secret) == std::string::npos);
  CHECK(contents.find("payload_sha256") != std::string::npos);
}

TEST_CASE("scrubbing property over fixture secrets") {
  for (const std::string secret : {"abc123", "sk-XYZ_987", "token.with.dots", "aaaa"}) {
    const std::string text = "x" + secret + secret + " mid " + secret + " Bearer " + secret;
    const auto out = scrub_secrets(text, {secret});
    CHECK(out.find(secret) == std::string::npos);
  }
  CHECK(scrub_secrets("Authorization: Bearer abc.def", {}) == "Authorization: Bearer [REDACTED]");
}

TEST_CASE("audit log holds digests, not bodies, by default") {
  ManualClock clock;
  auto mock = std::make_shared<MockTransport>();
  mock->script("instruction", "private transcript text", "answer");
  GatewayOptions opts;
  opts.clock = &clock;
  const auto log = temp_file("audit.jsonl");
  opts.audit_log = log;
  Gateway gw(mock_profile(), mock, opts);
  gw.generate(request("private transcript text"));
  std::ifstream in(log);
  std::string line;
  REQUIRE(std::getline(in, line));
  const auto rec = Json::parse(line);
  CHECK(rec["status"] == "ok");
  CHECK(rec["payload_sha256"] == sha256_hex("private transcript text"));
  CHECK(line.find("private transcript text") == std::string::npos);
}

TEST_CASE("rate limit holds in every sliding minute") {
  ManualClock clock;
  RateLimiter limiter(5, clock);
  for (int i = 0; i < 23; ++i) {
    limiter.acquire();
    clock.advance(std::chrono::milliseconds(1000));
  }
  const auto h = limiter.history();
  REQUIRE(h.size() == 23);
  for (std::size_t i = 0; i < h.size(); ++i) {
    int in_window = 0;
    for (std::size_t j = i; j < h.size() && h[j] < h[i] + std::chrono::minutes(1); ++j) ++in_window;
    CHECK(in_window <= 5);
  }
}

TEST_CASE("gateway rate limiting uses the injected clock") {
  ManualClock clock;
  auto mock = std::make_shared<MockTransport>();
  mock->set_responder([](const GenerationRequest&) { return std::string("r"); });
  auto p = mock_profile();
  p.rate_limit_rpm = 2;
  Gateway gw(p, mock, {&clock});
  for (int i = 0; i < 5; ++i) gw.generate(request());
  // Requests 3 and 5 each wait a full minute.
  CHECK(clock.total_slept() == std::chrono::minutes(2));
}

TEST_CASE("in-flight requests are bounded") {
  struct Slow : Transport {
    std::atomic<int> active{0};
    std::atomic<int> peak{0};
    TransportResponse send(const GenerationRequest&, const ProviderProfile&, const std::string&) override {
      const int now = ++active;
      int prev = peak.load();
      while (prev < now && !peak.compare_exchange_weak(prev, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --active;
      return {"ok", {}};
    }
  };
  auto slow = std::make_shared<Slow>();
  auto p = mock_profile();
  p.max_concurrency = 2;
  p.rate_limit_rpm = 1000;
  Gateway gw(p, slow);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { gw.generate(request()); });
  for (auto& t : threads) t.join();
  CHECK(slow->peak.load() <= 2);
  CHECK(gw.max_in_flight_observed() <= 2);
}

TEST_CASE("mock is deterministic and loads scripts") {
  const auto script = Json::parse(R"({"responses":[{"instruction":"i","payload":"p","text":"t"}],"faults":["transient"]})");
  auto mock = MockTransport::from_script(script);
  ManualClock clock;
  Gateway gw(mock_profile(), mock, {&clock});
  GenerationRequest r;
  r.instruction = "i";
  r.payload = "p";
  const auto a = gw.generate(r);
  const auto b = gw.generate(r);
  CHECK(a.text == "t");
  CHECK(b.text == "t");
  CHECK(a.attempts == 2);
  CHECK(b.attempts == 1);
}

TEST_CASE("extract structured documents") {
  CHECK(extract_structured(R"({"a": 1})")["a"] == 1);
  const auto fenced = extract_structured("Here you go:\n```json\n{\"alignments\": []}\n```\nDone.");
  CHECK(fenced.contains("alignments"));
  const auto prose = extract_structured("The answer is {\"label\": 2, \"note\": \"has } brace\"} as requested.");
  CHECK(prose["label"] == 2);
  CHECK(extract_structured("noise [1, 2] then {\"x\": 1}").is_array());
  try {
    extract_structured("prefix {\"alignments\": [1, 2");
    FAIL("expected extraction error");
  } catch (const ExtractionError& e) {
    CHECK(e.offset() == 7);
    CHECK(e.raw() == "prefix {\"alignments\": [1, 2");
  }
  CHECK_THROWS_AS(extract_structured("no document here"), ExtractionError);
}

TEST_CASE("openai request body and response parsing") {
  ProviderProfile p;
  p.model = "some-model";
  GenerationRequest r = request();
  r.params = DecodingParams::aligner_preset(1000);
  const auto body = HttpTransport::request_body(r, p);
  CHECK(body["temperature"] == 0.1);
  CHECK(body["top_k"] == 40);
  CHECK(body["messages"][0]["role"] == "system");
  const auto ok = HttpTransport::parse_response(
      200, R"({"choices":[{"message":{"content":"hi"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}})");
  CHECK(ok.text == "hi");
  CHECK(ok.usage.prompt_tokens == 3);
  CHECK_THROWS_AS(HttpTransport::parse_response(401, ""), TransportFailure);
  try {
    HttpTransport::parse_response(503, "");
  } catch (const TransportFailure& f) {
    CHECK(f.kind == TransportFailure::Kind::transient);
  }
}
