#pragma once

// Injectable wall clock so rate limiting, backoff and audit timestamps can be
// driven by tests.

#include <chrono>
#include <mutex>

namespace asrimpact {

class Clock {
 public:
  using time_point = std::chrono::system_clock::time_point;

  virtual ~Clock() = default;
  virtual time_point now() const = 0;
  virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

class SystemClock final : public Clock {
 public:
  time_point now() const override { return std::chrono::system_clock::now(); }
  void sleep_for(std::chrono::milliseconds d) override;
};

// Time moves only when told to; sleeping advances it instantly.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(time_point start = time_point{}) : now_(start) {}

  time_point now() const override;
  void sleep_for(std::chrono::milliseconds d) override;
  void advance(std::chrono::milliseconds d) { sleep_for(d); }
  std::chrono::milliseconds total_slept() const;

 private:
  mutable std::mutex mutex_;
  time_point now_;
  std::chrono::milliseconds slept_{0};
};

SystemClock& system_clock();

}  // namespace asrimpact
