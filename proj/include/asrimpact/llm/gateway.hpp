#pragma once

// Provider-neutral text generation with pinned decoding parameters, retries,
// rate limiting and a digest-only audit log.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asrimpact/core/clock.hpp"
#include "asrimpact/core/serialize.hpp"

namespace asrimpact::llm {

inline constexpr int kMaxOutputTokens = 65000;

struct DecodingParams {
  double temperature = 0.1;
  double top_p = 0.95;
  int top_k = 40;
  int max_tokens = 4096;

  // Low-temperature settings used for alignment.
  static DecodingParams aligner_preset(int max_tokens = kMaxOutputTokens);
  // Throws std::invalid_argument when a field is out of range.
  void check() const;
  bool operator==(const DecodingParams&) const = default;
};

enum class ResponseContract { free_text, structured_document };

struct GenerationRequest {
  std::string instruction;
  std::string payload;
  DecodingParams params;
  ResponseContract contract = ResponseContract::free_text;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
};

struct ProviderProfile {
  std::string name = "mock";
  // "mock" or "openai" (any OpenAI-compatible chat completions endpoint).
  std::string kind = "mock";
  std::string endpoint;
  std::string model;
  // Name of the environment variable holding the API key; never the key itself.
  std::string auth_env;
  int rate_limit_rpm = 60;
  int max_concurrency = 4;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{120000};

  void check() const;
};

ProviderProfile profile_from_json(const Json& j);
Json profile_to_json(const ProviderProfile& p);

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct GenerationResult {
  std::string text;
  Usage usage;
  double latency_ms = 0.0;
  int attempts = 0;
};

class LlmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AuthError : public LlmError {
 public:
  using LlmError::LlmError;
};

class RateLimitError : public LlmError {
 public:
  using LlmError::LlmError;
};

class TransportError : public LlmError {
 public:
  using LlmError::LlmError;
};

// The provider answered but the response breaks the requested contract.
class ContractError : public LlmError {
 public:
  ContractError(const std::string& message, std::string raw) : LlmError(message), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// Raised by transports; the gateway maps it to the public error types.
struct TransportFailure : std::runtime_error {
  enum class Kind { transient, rate_limited, auth, fatal };
  TransportFailure(Kind k, const std::string& message) : std::runtime_error(message), kind(k) {}
  Kind kind;
};

struct TransportResponse {
  std::string text;
  Usage usage;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportResponse send(const GenerationRequest& request, const ProviderProfile& profile,
                                 const std::string& secret) = 0;
  virtual bool requires_secret() const { return false; }
};

// Replaces every listed secret and any bearer token with a placeholder.
std::string scrub_secrets(std::string text, const std::vector<std::string>& secrets);

// Requests allowed in any trailing one-minute window.
class RateLimiter {
 public:
  RateLimiter(int requests_per_minute, Clock& clock);
  void acquire();
  // Start times of admitted requests, oldest first (for tests).
  std::vector<Clock::time_point> history() const;

 private:
  int limit_;
  Clock& clock_;
  mutable std::mutex mutex_;
  std::deque<Clock::time_point> window_;
  std::vector<Clock::time_point> history_;
};

struct GatewayOptions {
  Clock* clock = nullptr;  // defaults to the system clock
  std::optional<std::filesystem::path> audit_log;
  bool audit_bodies = false;
  // Looks up secrets; defaults to the process environment.
  std::function<std::optional<std::string>(const std::string&)> env;
};

class Gateway {
 public:
  Gateway(ProviderProfile profile, std::shared_ptr<Transport> transport, GatewayOptions options = {});

  GenerationResult generate(const GenerationRequest& request);

  const ProviderProfile& profile() const { return profile_; }
  int max_in_flight_observed() const;

 private:
  std::string resolve_secret() const;
  void audit(const GenerationRequest& request, const std::string* response, int attempts, const std::string& status,
             const std::string& error);

  ProviderProfile profile_;
  std::shared_ptr<Transport> transport_;
  GatewayOptions options_;
  Clock& clock_;
  RateLimiter limiter_;

  mutable std::mutex in_flight_mutex_;
  std::condition_variable in_flight_cv_;
  int in_flight_ = 0;
  int max_in_flight_ = 0;

  std::mutex audit_mutex_;
  std::ofstream audit_out_;
};

// Digest keying (instruction, payload) for scripted responses.
std::string request_digest(std::string_view instruction, std::string_view payload);

}  // namespace asrimpact::llm
