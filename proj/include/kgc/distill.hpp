#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "kgc/autodiff.hpp"
#include "kgc/error.hpp"
#include "kgc/tensor.hpp"

namespace kgc {

// Iterative message distillation: per round, the highest-magnitude message
// dimensions are retained verbatim and the rest are zeroed, under a decaying
// retention ratio. Rounds nest (retained sets shrink), so K rounds of a
// nonincreasing schedule equal a single round at the final ratio; the loop
// still runs round by round to match the defining iteration.

enum class DecayFamily { linear, exponential };

struct DistillSchedule {
  DecayFamily family = DecayFamily::linear;
  double alpha_start = 1.0;
  double delta = 0.2;   // linear step
  double gamma = 0.74;  // exponential factor
  std::size_t rounds = 3;
};

inline void validate_schedule(const DistillSchedule& s) {
  if (s.alpha_start <= 0.0 || s.alpha_start > 1.0) {
    throw ScheduleError("distill: alpha_start must be in (0, 1]");
  }
  if (s.rounds < 1) throw ScheduleError("distill: rounds must be >= 1");
  if (s.family == DecayFamily::linear) {
    if (s.delta < 0.0) throw ScheduleError("distill: delta must be >= 0");
    if (s.alpha_start - static_cast<double>(s.rounds - 1) * s.delta <= 0.0) {
      throw ScheduleError("distill: linear schedule reaches zero before round " +
                          std::to_string(s.rounds));
    }
  } else {
    if (s.gamma <= 0.0 || s.gamma > 1.0) {
      throw ScheduleError("distill: gamma must be in (0, 1]");
    }
  }
}

// Retention ratio for round k (1-based).
inline double schedule_alpha(const DistillSchedule& s, std::size_t k) {
  if (k < 1 || k > s.rounds) {
    throw ScheduleError("distill: round " + std::to_string(k) + " outside 1.." +
                        std::to_string(s.rounds));
  }
  double alpha;
  if (s.family == DecayFamily::linear) {
    alpha = s.alpha_start - static_cast<double>(k - 1) * s.delta;
  } else {
    alpha = s.alpha_start * std::pow(s.gamma, static_cast<double>(k - 1));
  }
  if (alpha <= 0.0) {
    throw ScheduleError("distill: schedule exhausted at round " + std::to_string(k));
  }
  return alpha;
}

inline std::size_t retained_dims(std::size_t d, double alpha) {
  auto kept = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(d)));
  return std::min(kept, d);
}

// One round: keep the ceil(alpha*d) highest-|value| dimensions, zero the rest.
inline Tensor distill_round(const Tensor& message, double alpha) {
  if (message.numel() == 0) throw Error("distill_round: empty message");
  if (alpha <= 0.0 || alpha > 1.0) throw ScheduleError("distill_round: alpha must be in (0, 1]");
  auto mask = topk_select(message.data, retained_dims(message.numel(), alpha), true);
  Tensor out = message;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (!mask[i]) out.data[i] = 0.0;
  }
  return out;
}

inline Var distill_round(const Var& message, double alpha) {
  if (message.value().numel() == 0) throw Error("distill_round: empty message");
  if (alpha <= 0.0 || alpha > 1.0) throw ScheduleError("distill_round: alpha must be in (0, 1]");
  return topk_mask(message, retained_dims(message.value().numel(), alpha), true);
}

template <typename MessageT>
MessageT distill(const MessageT& message, const DistillSchedule& schedule) {
  MessageT refined = message;
  for (std::size_t k = 1; k <= schedule.rounds; ++k) {
    refined = distill_round(refined, schedule_alpha(schedule, k));
  }
  return refined;
}

}  // namespace kgc
