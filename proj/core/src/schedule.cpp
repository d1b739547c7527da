#include "lam3c/schedule.hpp"

#include "lam3c/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lam3c {

double schedule_value(const Schedule& schedule, std::int64_t step, bool* clamped) {
  if (schedule.total_steps <= 0) {
    throw InvalidArgument("schedule needs total_steps > 0");
  }
  const auto s = std::clamp<std::int64_t>(step, 0, schedule.total_steps);
  if (clamped != nullptr) {
    *clamped = s != step;
  }
  if (s == schedule.total_steps) {
    return schedule.end;
  }
  const double t = static_cast<double>(s) / static_cast<double>(schedule.total_steps);
  switch (schedule.kind) {
    case ScheduleKind::constant:
      return schedule.start;
    case ScheduleKind::linear:
      return schedule.start + (schedule.end - schedule.start) * t;
    case ScheduleKind::cosine:
      return schedule.end + (schedule.start - schedule.end) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  }
  return schedule.start;
}

double warmup_cosine(double peak, double floor, std::int64_t warmup_steps, std::int64_t total_steps,
                     std::int64_t step) {
  step = std::clamp<std::int64_t>(step, 0, total_steps);
  if (warmup_steps > 0 && step < warmup_steps) {
    return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const auto span = std::max<std::int64_t>(1, total_steps - warmup_steps);
  return schedule_value(Schedule::cosine(peak, floor, span), step - warmup_steps);
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::constant:
      return "constant";
    case ScheduleKind::linear:
      return "linear";
    case ScheduleKind::cosine:
      return "cosine";
  }
  return "constant";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "constant") {
    return ScheduleKind::constant;
  }
  if (name == "linear") {
    return ScheduleKind::linear;
  }
  if (name == "cosine") {
    return ScheduleKind::cosine;
  }
  throw ConfigError("unknown schedule kind '" + name + "'");
}

}  // namespace lam3c
