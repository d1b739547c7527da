#pragma once

#include <cstdint>
#include <string>

namespace lam3c {

enum class ScheduleKind { constant, linear, cosine };

// A scalar that moves from `start` (step 0) to `end` (step total_steps).
struct Schedule {
  ScheduleKind kind = ScheduleKind::constant;
  double start = 0.0;
  double end = 0.0;
  std::int64_t total_steps = 1;

  static Schedule constant(double value, std::int64_t steps = 1) { return {ScheduleKind::constant, value, value, steps}; }
  static Schedule linear(double from, double to, std::int64_t steps) { return {ScheduleKind::linear, from, to, steps}; }
  static Schedule cosine(double from, double to, std::int64_t steps) { return {ScheduleKind::cosine, from, to, steps}; }
};

// Steps outside [0, total_steps] are clamped; `clamped` reports it.
double schedule_value(const Schedule& schedule, std::int64_t step, bool* clamped = nullptr);

// Linear warmup from 0 over `warmup_steps`, then cosine from `peak` to `floor`.
double warmup_cosine(double peak, double floor, std::int64_t warmup_steps, std::int64_t total_steps,
                     std::int64_t step);

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

}  // namespace lam3c
