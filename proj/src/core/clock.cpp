#include "asrimpact/core/clock.hpp"

#include <thread>

namespace asrimpact {

void SystemClock::sleep_for(std::chrono::milliseconds d) {
  if (d.count() > 0) std::this_thread::sleep_for(d);
}

Clock::time_point ManualClock::now() const {
  std::lock_guard lock(mutex_);
  return now_;
}

void ManualClock::sleep_for(std::chrono::milliseconds d) {
  std::lock_guard lock(mutex_);
  if (d.count() <= 0) return;
  now_ += d;
  slept_ += d;
}

std::chrono::milliseconds ManualClock::total_slept() const {
  std::lock_guard lock(mutex_);
  return slept_;
}

SystemClock& system_clock() {
  static SystemClock clock;
  return clock;
}

}  // namespace asrimpact
