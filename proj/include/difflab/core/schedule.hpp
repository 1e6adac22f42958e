#pragma once

namespace difflab {

enum class ScheduleKind { linear, cosine };

struct AlphaValue {
  double alpha;
  double alpha_prime;
};

// Monotone non-increasing noise level alpha_t on [0, 1] with derivative.
//
//   linear:  alpha_t = 1 - t,             alpha'_t = -1
//   cosine:  alpha_t = cos^2(pi t / 2),   alpha'_t = -(pi/2) sin(pi t)
//
// An optional scale factor multiplies the whole path (alpha and derivative).
// The interpolating bound uses scale = alpha_0 so the path starts at alpha_0
// instead of 1 while still reaching 0 at t = 1.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(ScheduleKind kind, double scale = 1.0);

  // Throws std::domain_error if t is outside [0, 1].
  AlphaValue at(double t) const;

  ScheduleKind kind() const { return kind_; }
  double scale() const { return scale_; }
  NoiseSchedule scaled(double factor) const { return NoiseSchedule(kind_, scale_ * factor); }

 private:
  ScheduleKind kind_;
  double scale_;
};

}  // namespace difflab
