#include "asrimpact/llm/gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <regex>

#include "asrimpact/core/digest.hpp"
#include "asrimpact/llm/extract.hpp"

namespace asrimpact::llm {

namespace {

constexpr std::string_view kRedacted = "[REDACTED]";

class InFlightGuard {
 public:
  InFlightGuard(std::mutex& m, std::condition_variable& cv, int& count, int& peak, int limit)
      : mutex_(m), cv_(cv), count_(count) {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return count_ < limit; });
    ++count_;
    peak = std::max(peak, count_);
  }
  ~InFlightGuard() {
    {
      std::lock_guard lock(mutex_);
      --count_;
    }
    cv_.notify_one();
  }
  InFlightGuard(const InFlightGuard&) = delete;
  InFlightGuard& operator=(const InFlightGuard&) = delete;

 private:
  std::mutex& mutex_;
  std::condition_variable& cv_;
  int& count_;
};

std::int64_t epoch_ms(Clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

}  // namespace

DecodingParams DecodingParams::aligner_preset(int max_tokens) {
  DecodingParams p;
  p.max_tokens = max_tokens;
  return p;
}

void DecodingParams::check() const {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must lie in (0, 1]");
  if (top_k < 1) throw std::invalid_argument("top_k must be positive");
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be positive");
}

void ProviderProfile::check() const {
  if (name.empty()) throw std::invalid_argument("provider profile needs a name");
  if (kind != "mock" && kind != "openai") {
    throw std::invalid_argument("provider '" + name + "': unknown kind '" + kind + "'");
  }
  if (kind == "openai" && endpoint.empty()) throw std::invalid_argument("provider '" + name + "': endpoint missing");
  if (retry.max_attempts < 1) throw std::invalid_argument("provider '" + name + "': retry attempts must be >= 1");
  if (rate_limit_rpm < 1) throw std::invalid_argument("provider '" + name + "': rate limit must be >= 1");
  if (max_concurrency < 1) throw std::invalid_argument("provider '" + name + "': concurrency must be >= 1");
}

ProviderProfile profile_from_json(const Json& j) {
  ProviderProfile p;
  p.name = j.value("name", p.name);
  p.kind = j.value("kind", p.kind);
  p.endpoint = j.value("endpoint", p.endpoint);
  p.model = j.value("model", p.model);
  p.auth_env = j.value("auth_env", p.auth_env);
  p.rate_limit_rpm = j.value("rate_limit_rpm", p.rate_limit_rpm);
  p.max_concurrency = j.value("max_concurrency", p.max_concurrency);
  if (j.contains("retry")) {
    const auto& r = j.at("retry");
    p.retry.max_attempts = r.value("max_attempts", p.retry.max_attempts);
    p.retry.backoff_base = std::chrono::milliseconds(r.value("backoff_base_ms", p.retry.backoff_base.count()));
  }
  p.timeout = std::chrono::milliseconds(j.value("timeout_ms", p.timeout.count()));
  p.check();
  return p;
}

Json profile_to_json(const ProviderProfile& p) {
  return Json{{"name", p.name},
              {"kind", p.kind},
              {"endpoint", p.endpoint},
              {"model", p.model},
              {"auth_env", p.auth_env},
              {"rate_limit_rpm", p.rate_limit_rpm},
              {"max_concurrency", p.max_concurrency},
              {"retry", {{"max_attempts", p.retry.max_attempts}, {"backoff_base_ms", p.retry.backoff_base.count()}}},
              {"timeout_ms", p.timeout.count()}};
}

std::string scrub_secrets(std::string text, const std::vector<std::string>& secrets) {
  for (const auto& secret : secrets) {
    if (secret.empty()) continue;
    for (std::size_t pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos)) {
      text.replace(pos, secret.size(), kRedacted);
      pos += kRedacted.size();
    }
  }
  static const std::regex bearer(R"((Bearer\s+)[A-Za-z0-9._~+/=-]+)", std::regex::icase);
  return std::regex_replace(text, bearer, "$1[REDACTED]");
}

std::string request_digest(std::string_view instruction, std::string_view payload) {
  std::string joined;
  joined.reserve(instruction.size() + payload.size() + 1);
  joined.append(instruction);
  joined += '\0';
  joined.append(payload);
  return sha256_hex(joined);
}

RateLimiter::RateLimiter(int requests_per_minute, Clock& clock) : limit_(requests_per_minute), clock_(clock) {}

void RateLimiter::acquire() {
  constexpr auto kWindow = std::chrono::minutes(1);
  std::unique_lock lock(mutex_);
  while (true) {
    const auto now = clock_.now();
    while (!window_.empty() && window_.front() + kWindow <= now) window_.pop_front();
    if (static_cast<int>(window_.size()) < limit_) {
      window_.push_back(now);
      history_.push_back(now);
      return;
    }
    const auto wait = std::chrono::ceil<std::chrono::milliseconds>(window_.front() + kWindow - now);
    lock.unlock();
    clock_.sleep_for(wait);
    lock.lock();
  }
}

std::vector<Clock::time_point> RateLimiter::history() const {
  std::lock_guard lock(mutex_);
  return history_;
}

Gateway::Gateway(ProviderProfile profile, std::shared_ptr<Transport> transport, GatewayOptions options)
    : profile_(std::move(profile)),
      transport_(std::move(transport)),
      options_(std::move(options)),
      clock_(options_.clock != nullptr ? *options_.clock : static_cast<Clock&>(system_clock())),
      limiter_(profile_.rate_limit_rpm, clock_) {
  profile_.check();
  if (!transport_) throw std::invalid_argument("gateway needs a transport");
  if (options_.audit_log) {
    audit_out_.open(*options_.audit_log, std::ios::app);
    if (!audit_out_) throw std::runtime_error("cannot open audit log " + options_.audit_log->string());
  }
}

int Gateway::max_in_flight_observed() const {
  std::lock_guard lock(in_flight_mutex_);
  return max_in_flight_;
}

std::string Gateway::resolve_secret() const {
  if (profile_.auth_env.empty()) {
    if (transport_->requires_secret()) {
      throw AuthError("provider '" + profile_.name + "' names no credential environment variable");
    }
    return {};
  }
  std::optional<std::string> value;
  if (options_.env) {
    value = options_.env(profile_.auth_env);
  } else if (const char* raw = std::getenv(profile_.auth_env.c_str())) {
    value = std::string(raw);
  }
  if (!value || value->empty()) {
    if (transport_->requires_secret()) {
      throw AuthError("provider '" + profile_.name + "': environment variable " + profile_.auth_env + " is not set");
    }
    return {};
  }
  return *value;
}

void Gateway::audit(const GenerationRequest& request, const std::string* response, int attempts,
                    const std::string& status, const std::string& error) {
  if (!audit_out_.is_open()) return;
  Json rec{{"ts_ms", epoch_ms(clock_.now())},
           {"provider", profile_.name},
           {"model", profile_.model},
           {"instruction_sha256", sha256_hex(request.instruction)},
           {"payload_sha256", sha256_hex(request.payload)},
           {"response_sha256", response != nullptr ? Json(sha256_hex(*response)) : Json(nullptr)},
           {"attempts", attempts},
           {"status", status},
           {"error", error}};
  if (options_.audit_bodies) {
    rec["instruction"] = request.instruction;
    rec["payload"] = request.payload;
    rec["response"] = response != nullptr ? Json(*response) : Json(nullptr);
  }
  std::lock_guard lock(audit_mutex_);
  audit_out_ << rec.dump() << '\n';
  audit_out_.flush();
}

GenerationResult Gateway::generate(const GenerationRequest& request) {
  if (request.instruction.empty()) throw std::invalid_argument("generation request needs an instruction");
  request.params.check();

  std::string secret;
  try {
    secret = resolve_secret();
  } catch (const AuthError& e) {
    audit(request, nullptr, 0, "auth_error", e.what());
    throw;
  }
  const std::vector<std::string> secrets = {secret};

  const int max_attempts = profile_.retry.max_attempts;
  for (int attempt = 1;; ++attempt) {
    limiter_.acquire();
    TransportResponse response;
    const auto started = clock_.now();
    try {
      InFlightGuard guard(in_flight_mutex_, in_flight_cv_, in_flight_, max_in_flight_, profile_.max_concurrency);
      response = transport_->send(request, profile_, secret);
    } catch (const TransportFailure& f) {
      const std::string message = scrub_secrets(f.what(), secrets);
      const bool retryable =
          f.kind == TransportFailure::Kind::transient || f.kind == TransportFailure::Kind::rate_limited;
      if (retryable && attempt < max_attempts) {
        clock_.sleep_for(profile_.retry.backoff_base * (1LL << std::min(attempt - 1, 20)));
        continue;
      }
      const std::string context = "provider '" + profile_.name + "' after " + std::to_string(attempt) +
                                  (attempt == 1 ? " attempt: " : " attempts: ") + message;
      switch (f.kind) {
        case TransportFailure::Kind::auth:
          audit(request, nullptr, attempt, "auth_error", message);
          throw AuthError(context);
        case TransportFailure::Kind::rate_limited:
          audit(request, nullptr, attempt, "rate_limited", message);
          throw RateLimitError(context);
        case TransportFailure::Kind::transient:
        case TransportFailure::Kind::fatal:
          audit(request, nullptr, attempt, "transport_error", message);
          throw TransportError(context);
      }
    }

    GenerationResult result;
    result.text = std::move(response.text);
    result.usage = response.usage;
    result.attempts = attempt;
    result.latency_ms = std::chrono::duration<double, std::milli>(clock_.now() - started).count();

    if (request.contract == ResponseContract::structured_document) {
      try {
        (void)extract_structured(result.text);
      } catch (const ExtractionError& e) {
        audit(request, &result.text, attempt, "contract_error", e.what());
        throw ContractError(std::string("response is not a structured document: ") + e.what(), result.text);
      }
    }
    audit(request, &result.text, attempt, "ok", "");
    return result;
  }
}

}  // namespace asrimpact::llm
