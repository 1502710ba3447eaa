#include "ovmse/schedule.hpp"

#include <algorithm>

namespace ovmse {

double Schedule::value(std::uint64_t t) const {
  if (literal_min) {
    if (duration == 0) return end;
    const double slope = (start - end) / static_cast<double>(duration);
    return std::min(end, 1.0 - slope * static_cast<double>(t));
  }
  if (duration == 0 || t >= duration) return end;
  const double slope = (start - end) / static_cast<double>(duration);
  const double raw = start - slope * static_cast<double>(t);
  return start >= end ? std::max(end, raw) : std::min(end, raw);
}

double lambda_schedule_value(std::uint64_t t, double lambda_end, std::uint64_t anneal_steps,
                             bool literal_min) {
  return Schedule{1.0, lambda_end, anneal_steps, literal_min}.value(t);
}

}  // namespace ovmse
