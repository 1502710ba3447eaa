#pragma once

#include <cstdint>

namespace ovmse {

// Linear anneal from `start` to `end` over `duration` steps.
//
// The default form clamps at `end`:
//   value(t) = max(end, start - ((start - end) / duration) * t)   (decay)
//   value(t) = min(end, start + ((end - start) / duration) * t)   (growth)
// so value(0) == start and value(t >= duration) == end.
//
// `literal_min` reproduces the printed variant
//   value(t) = min(end, 1 - ((start - end) / duration) * t)
// which pins a decaying schedule to `end` from t = 0. It exists only for
// fidelity experiments.
struct Schedule {
  double start = 1.0;
  double end = 0.0;
  std::uint64_t duration = 0;
  bool literal_min = false;

  double value(std::uint64_t t) const;
};

// Memory coefficient: linear decay from 1.0 to lambda_end over anneal_steps.
// anneal_steps == 0 yields lambda_end immediately.
double lambda_schedule_value(std::uint64_t t, double lambda_end, std::uint64_t anneal_steps,
                             bool literal_min = false);

}  // namespace ovmse
