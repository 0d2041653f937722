#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tailrisk/error.hpp"

namespace tailrisk {

/// A scalar score and, when requested, its per-time addends (value == mean(per_time)).
struct LossValue {
  double value = 0.0;
  std::vector<double> per_time;
};

namespace detail {

inline void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InputError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

inline double positive_part(double x) noexcept { return x > 0.0 ? x : 0.0; }

inline double pinball_term(double y, double q, double theta) noexcept {
  return (y - q) * (theta - (y < q ? 1.0 : 0.0));
}

inline double barrera_term(double r, double y, double q, double theta) noexcept {
  const double a = r + positive_part(q - y) / theta;
  return a * a;
}

inline double patton_term(double e, double q, double y, double theta) noexcept {
  const double hit = y <= q ? 1.0 : 0.0;
  return q / e - (q - y) * hit / (theta * e) + std::log(-e);
}

inline LossValue finish(std::vector<double> terms) {
  LossValue out;
  double sum = 0.0;
  for (double v : terms) sum += v;
  out.value = terms.empty() ? 0.0 : sum / static_cast<double>(terms.size());
  out.per_time = std::move(terms);
  return out;
}

}  // namespace detail

// Scalar kernels used inside optimizer objectives. They never throw: the Patton
// family returns +inf outside its domain.

inline double pinball_mean(std::span<const double> q, std::span<const double> y, double theta) noexcept {
  double s = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) s += detail::pinball_term(y[t], q[t], theta);
  return s / static_cast<double>(y.size());
}

inline double penalized_r_mean(std::span<const double> r, std::span<const double> y, std::span<const double> q,
                               double theta, double lambda_r) noexcept {
  double s = 0.0;
  double pen = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    s += detail::barrera_term(r[t], y[t], q[t], theta);
    pen += detail::positive_part(r[t]);
  }
  return s / static_cast<double>(y.size()) + lambda_r * pen;
}

inline double penalized_joint_mean(std::span<const double> e, std::span<const double> q, std::span<const double> y,
                                   double theta, double lambda_e, double lambda_q) noexcept {
  double s = 0.0;
  double pen = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (!(e[t] < 0.0)) return std::numeric_limits<double>::infinity();
    s += detail::patton_term(e[t], q[t], y[t], theta);
    pen += lambda_e * detail::positive_part(e[t] - q[t]) + lambda_q * detail::positive_part(q[t]);
  }
  return s / static_cast<double>(y.size()) + pen;
}

/// Quantile (pinball) loss of a VaR path.
inline LossValue pinball_loss(std::span<const double> q, std::span<const double> y, double theta) {
  detail::require_same_length(q.size(), y.size(), "pinball_loss");
  std::vector<double> terms(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) terms[t] = detail::pinball_term(y[t], q[t], theta);
  return detail::finish(std::move(terms));
}

/// Squared error between the ES-VaR residual and the theta-scaled excess loss.
/// The residual sign is not enforced here.
inline LossValue barrera_loss(std::span<const double> r, std::span<const double> y, std::span<const double> q,
                              double theta) {
  detail::require_same_length(r.size(), y.size(), "barrera_loss");
  detail::require_same_length(q.size(), y.size(), "barrera_loss");
  std::vector<double> terms(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) terms[t] = detail::barrera_term(r[t], y[t], q[t], theta);
  return detail::finish(std::move(terms));
}

/// Joint VaR/ES score with log barrier. Every e_t must be strictly negative.
inline LossValue patton_loss(std::span<const double> e, std::span<const double> q, std::span<const double> y,
                             double theta) {
  detail::require_same_length(e.size(), y.size(), "patton_loss");
  detail::require_same_length(q.size(), y.size(), "patton_loss");
  std::vector<double> terms(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (!(e[t] < 0.0)) {
      throw DomainError("patton_loss: ES forecast must be negative (e[" + std::to_string(t) + "] = " +
                        std::to_string(e[t]) + ")");
    }
    terms[t] = detail::patton_term(e[t], q[t], y[t], theta);
  }
  return detail::finish(std::move(terms));
}

/// Barrera loss plus lambda_r * sum_t (r_t)^+. The penalty is a sum, the base a mean.
inline LossValue penalized_r_loss(std::span<const double> r, std::span<const double> y, std::span<const double> q,
                                  double theta, double lambda_r) {
  if (!(lambda_r >= 0.0)) throw InputError("lambda_r must be nonnegative");
  LossValue out = barrera_loss(r, y, q, theta);
  if (lambda_r == 0.0) return out;
  const double n = static_cast<double>(y.size());
  double pen = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double p = lambda_r * detail::positive_part(r[t]);
    pen += p;
    out.per_time[t] += n * p;
  }
  out.value += pen;
  return out;
}

/// Patton loss plus monotonicity (e <= q) and nonpositive-VaR penalties, both summed over t.
inline LossValue penalized_joint_loss(std::span<const double> e, std::span<const double> q, std::span<const double> y,
                                      double theta, double lambda_e, double lambda_q) {
  if (!(lambda_e >= 0.0) || !(lambda_q >= 0.0)) throw InputError("penalty weights must be nonnegative");
  LossValue out = patton_loss(e, q, y, theta);
  if (lambda_e == 0.0 && lambda_q == 0.0) return out;
  const double n = static_cast<double>(y.size());
  double pen = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double p = lambda_e * detail::positive_part(e[t] - q[t]) + lambda_q * detail::positive_part(q[t]);
    pen += p;
    out.per_time[t] += n * p;
  }
  out.value += pen;
  return out;
}

}  // namespace tailrisk
