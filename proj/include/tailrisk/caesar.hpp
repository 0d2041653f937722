#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tailrisk/caviar.hpp"
#include "tailrisk/config_json.hpp"
#include "tailrisk/core.hpp"
#include "tailrisk/error.hpp"
#include "tailrisk/losses.hpp"
#include "tailrisk/optimizer.hpp"

namespace tailrisk {

/// Joint recursion coefficients. Each vector is laid out as
/// [intercept | p*d regressor terms | u lagged-VaR terms | u lagged-ES terms].
struct CaesarParams {
  std::vector<double> beta;
  std::vector<double> gamma;
};

/// Residual (ES - VaR) recursion, same layout with lagged residuals in the last block.
struct ResidualParams {
  std::vector<double> gamma_tilde;
};

/// Joint filter output aligned with y (q[0] = q0, e[0] = e0) plus the next forecast.
struct JointPath {
  std::vector<double> q;
  std::vector<double> e;
  double next_q = 0.0;
  double next_e = 0.0;
  /// Recursion outputs (t >= 1 and the next forecast) that break strict e < q.
  std::size_t monotonicity_violations = 0;

  ForecastPath forecast_path(double theta) const { return {q, e, theta}; }
};

namespace detail {

/// Joint VaR/ES kernel; oq/oe have y.size()+1 slots, the last one is the forecast past the sample.
inline FilterStatus caesar_kernel(std::span<const double> beta, std::span<const double> gamma, const CaviarSpec& spec,
                                  std::span<const double> y, double q0, double e0, std::span<double> oq,
                                  std::span<double> oe, double guard) noexcept {
  const std::size_t T = y.size();
  const std::size_t pd = spec.pd();
  const auto u = static_cast<std::size_t>(spec.u);
  const double lq0 = to_latent(spec.kind, q0);
  const double le0 = to_latent(spec.kind, e0);
  oq[0] = q0;
  oe[0] = e0;
  for (std::size_t t = 1; t <= T; ++t) {
    double sq = beta[0] + regressor_sum(spec, beta, y, t);
    double se = gamma[0] + regressor_sum(spec, gamma, y, t);
    for (std::size_t j = 1; j <= u; ++j) {
      const double lq = t >= j ? to_latent(spec.kind, oq[t - j]) : lq0;
      const double le = t >= j ? to_latent(spec.kind, oe[t - j]) : le0;
      sq += beta[pd + j] * lq + beta[pd + u + j] * le;
      se += gamma[pd + j] * lq + gamma[pd + u + j] * le;
    }
    if (auto st = from_latent(spec.kind, sq, oq[t]); st != FilterStatus::Ok) return st;
    if (auto st = from_latent(spec.kind, se, oe[t]); st != FilterStatus::Ok) return st;
    if (auto st = check(oq[t], guard); st != FilterStatus::Ok) return st;
    if (auto st = check(oe[t], guard); st != FilterStatus::Ok) return st;
  }
  return FilterStatus::Ok;
}

/// Latent residual: r itself for linear specs, e^2 - q^2 for IG.
inline double residual_latent(SpecKind k, double q, double r) noexcept {
  if (k != SpecKind::IG) return r;
  const double e = q + r;
  return e * e - q * q;
}

/// Residual kernel given a fixed VaR path q (size T); out has T slots, out[0] = r0.
inline FilterStatus residual_kernel(std::span<const double> gt, const CaviarSpec& spec, std::span<const double> y,
                                    std::span<const double> q, double r0, std::span<double> out,
                                    double guard) noexcept {
  const std::size_t T = y.size();
  const std::size_t pd = spec.pd();
  const auto u = static_cast<std::size_t>(spec.u);
  const double lq0 = to_latent(spec.kind, q[0]);
  const double lr0 = residual_latent(spec.kind, q[0], r0);
  out[0] = r0;
  for (std::size_t t = 1; t < T; ++t) {
    double s = gt[0] + regressor_sum(spec, gt, y, t);
    for (std::size_t j = 1; j <= u; ++j) {
      const double lq = t >= j ? to_latent(spec.kind, q[t - j]) : lq0;
      const double lr = t >= j ? residual_latent(spec.kind, q[t - j], out[t - j]) : lr0;
      s += gt[pd + j] * lq + gt[pd + u + j] * lr;
    }
    if (spec.kind == SpecKind::IG) {
      const double e2 = q[t] * q[t] + s;
      if (!(e2 >= 0.0)) return FilterStatus::Domain;
      out[t] = -std::sqrt(e2) - q[t];
    } else {
      out[t] = s;
    }
    if (auto st = check(out[t], guard); st != FilterStatus::Ok) return st;
  }
  return FilterStatus::Ok;
}

/// True when the n x n row-major matrix has spectral radius below one. Closed form
/// up to 2 x 2; larger matrices use log ||A^(2^20)||_F < 0 with renormalized squaring.
inline bool companion_stable(std::vector<double> a, std::size_t n) noexcept {
  if (n == 1) return std::abs(a[0]) < 1.0;
  if (n == 2) {
    const double half_tr = 0.5 * (a[0] + a[3]);
    const double det = a[0] * a[3] - a[1] * a[2];
    const double disc = half_tr * half_tr - det;
    if (disc < 0.0) return det < 1.0;
    const double root = std::sqrt(disc);
    return std::max(std::abs(half_tr + root), std::abs(half_tr - root)) < 1.0;
  }
  std::vector<double> b(n * n);
  double log_norm = 0.0;
  for (int k = 0; k < 20; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t l = 0; l < n; ++l) s += a[i * n + l] * a[l * n + j];
        b[i * n + j] = s;
      }
    }
    a.swap(b);
    double f = 0.0;
    for (double v : a) f += v * v;
    if (f == 0.0) return true;
    if (!std::isfinite(f)) return false;
    f = std::sqrt(f);
    for (double& v : a) v /= f;
    log_norm = 2.0 * log_norm + std::log(f);
  }
  return log_norm < 0.0;
}

/// Stationarity of the lagged-state block of the joint recursion (latent scale).
inline bool joint_stable(std::span<const double> beta, std::span<const double> gamma, const CaviarSpec& spec) {
  const std::size_t pd = spec.pd();
  const auto u = static_cast<std::size_t>(spec.u);
  const std::size_t n = 2 * u;
  // State (q_{t-1..t-u}, e_{t-1..t-u}).
  std::vector<double> a(n * n, 0.0);
  for (std::size_t j = 0; j < u; ++j) {
    a[0 * n + j] = beta[pd + 1 + j];
    a[0 * n + u + j] = beta[pd + u + 1 + j];
    a[u * n + j] = gamma[pd + 1 + j];
    a[u * n + u + j] = gamma[pd + u + 1 + j];
  }
  for (std::size_t j = 1; j < u; ++j) {
    a[j * n + j - 1] = 1.0;
    a[(u + j) * n + u + j - 1] = 1.0;
  }
  return companion_stable(std::move(a), n);
}

/// Stationarity of the residual's own lags.
inline bool residual_stable(std::span<const double> gt, const CaviarSpec& spec) {
  const std::size_t pd = spec.pd();
  const auto u = static_cast<std::size_t>(spec.u);
  std::vector<double> a(u * u, 0.0);
  for (std::size_t j = 0; j < u; ++j) a[j] = gt[pd + u + 1 + j];
  for (std::size_t j = 1; j < u; ++j) a[j * u + j - 1] = 1.0;
  return companion_stable(std::move(a), u);
}

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw InputError(std::string(what) + ": expected " + std::to_string(want) + " coefficients, got " +
                     std::to_string(got));
  }
}

}  // namespace detail

inline JointPath caesar_filter(const CaesarParams& params, const CaviarSpec& spec, std::span<const double> y,
                               double q0, double e0) {
  spec.validate();
  detail::require_dim(params.beta.size(), spec.joint_dim(), "caesar_filter beta");
  detail::require_dim(params.gamma.size(), spec.joint_dim(), "caesar_filter gamma");
  if (y.empty()) throw InputError("caesar_filter: empty series");
  if (!std::isfinite(q0) || !std::isfinite(e0)) throw InputError("caesar_filter: q0 and e0 must be finite");
  if (e0 > q0) throw InputError("caesar_filter: need e0 <= q0");
  std::vector<double> q(y.size() + 1), e(y.size() + 1);
  detail::throw_on(detail::caesar_kernel(params.beta, params.gamma, spec, y, q0, e0, q, e,
                                         std::numeric_limits<double>::infinity()),
                   "caesar_filter");
  JointPath out;
  // Ties count, up to rounding in the recursion.
  for (std::size_t t = 1; t < q.size(); ++t) {
    out.monotonicity_violations += e[t] < q[t] - 1e-12 * std::max(1.0, std::abs(q[t])) ? 0 : 1;
  }
  out.next_q = q.back();
  out.next_e = e.back();
  q.pop_back();
  e.pop_back();
  out.q = std::move(q);
  out.e = std::move(e);
  return out;
}

/// Residual path r_t = e_t - q_t driven by a fixed VaR path (same length as y).
inline std::vector<double> residual_filter(const ResidualParams& params, const CaviarSpec& spec,
                                           std::span<const double> y, std::span<const double> q, double r0) {
  spec.validate();
  detail::require_dim(params.gamma_tilde.size(), spec.joint_dim(), "residual_filter");
  if (q.size() != y.size()) throw InputError("residual_filter: q and y differ in length");
  if (y.empty()) throw InputError("residual_filter: empty series");
  std::vector<double> r(y.size());
  detail::throw_on(detail::residual_kernel(params.gamma_tilde, spec, y, q, r0, r,
                                           std::numeric_limits<double>::infinity()),
                   "residual_filter");
  return r;
}

/// Maps residual coefficients and CAViaR coefficients onto the joint recursion:
///   gamma_j = gt_j + beta_j                 j = 0..pd
///   gamma_j = gt_j + beta_j - gt_{j+u}      j = pd+1..pd+u
///   gamma_j = gt_j                          j = pd+u+1..pd+2u
/// and extends beta with zeros on the lagged-ES slots.
inline CaesarParams lift_residual_params(const ResidualParams& residual, const CaviarParams& caviar,
                                         const CaviarSpec& spec) {
  detail::require_dim(residual.gamma_tilde.size(), spec.joint_dim(), "lift_residual_params gamma_tilde");
  detail::require_dim(caviar.beta.size(), spec.caviar_dim(), "lift_residual_params beta");
  const std::size_t pd = spec.pd();
  const auto u = static_cast<std::size_t>(spec.u);
  const auto& gt = residual.gamma_tilde;
  CaesarParams out;
  out.beta = caviar.beta;
  out.beta.resize(spec.joint_dim(), 0.0);
  out.gamma.resize(spec.joint_dim());
  for (std::size_t j = 0; j <= pd; ++j) out.gamma[j] = gt[j] + caviar.beta[j];
  for (std::size_t j = pd + 1; j <= pd + u; ++j) out.gamma[j] = gt[j] + caviar.beta[j] - gt[j + u];
  for (std::size_t j = pd + u + 1; j <= pd + 2 * u; ++j) out.gamma[j] = gt[j];
  return out;
}

struct StepLosses {
  double step1_pinball = std::numeric_limits<double>::quiet_NaN();
  double step2_penalized_r = std::numeric_limits<double>::quiet_NaN();
  /// Joint objective at the step-3 starting point (lifted step-2 solution when available).
  double step3_start = std::numeric_limits<double>::quiet_NaN();
  double step3_penalized_joint = std::numeric_limits<double>::quiet_NaN();
};

struct CaesarModel {
  CaviarSpec spec;
  double theta = 0.05;
  CaesarParams params;
  double q0 = 0.0;
  double e0 = 0.0;
  /// Losses of each estimation step, evaluated on the unit-RMS training data.
  StepLosses step_losses;
  CaviarParams caviar_params;
  double scale = 1.0;
  double lambda_r = 0.0;
  double lambda_e = 0.0;
  double lambda_q = 0.0;
  bool degenerate = false;
  /// Step 3 could not start because the lifted point left the Patton domain.
  bool step3_skipped = false;
  EstimationConfig config;
  MultistartResult step1_audit;
  MultistartResult step2_audit;
  MultistartResult step3_audit;

  JointPath filter(std::span<const double> y) const { return caesar_filter(params, spec, y, q0, e0); }
};

namespace detail {

/// Indices of the free joint parameters in the concatenated [beta | gamma] vector.
inline std::vector<std::size_t> joint_free_indices(const CaviarSpec& spec, bool no_cross) {
  const std::size_t n = spec.joint_dim();
  const std::size_t pd = spec.pd();
  const auto u = static_cast<std::size_t>(spec.u);
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < 2 * n; ++j) {
    if (no_cross) {
      const bool beta_es_lag = j < n && j > pd + u;
      const bool gamma_var_lag = j >= n && (j - n) > pd && (j - n) <= pd + u;
      if (beta_es_lag || gamma_var_lag) continue;
    }
    idx.push_back(j);
  }
  return idx;
}

/// ES as a constant multiple c of the CAViaR recursion: e_t = c q_t whenever e0 = c q0.
inline CaesarParams ratio_start(const CaviarParams& caviar, const CaviarSpec& spec, double ratio) {
  const std::size_t pd = spec.pd();
  const auto u = static_cast<std::size_t>(spec.u);
  const double c = spec.kind == SpecKind::IG ? ratio * ratio : ratio;
  CaesarParams p;
  p.beta = caviar.beta;
  p.beta.resize(spec.joint_dim(), 0.0);
  p.gamma.assign(spec.joint_dim(), 0.0);
  for (std::size_t j = 0; j <= pd; ++j) p.gamma[j] = c * caviar.beta[j];
  for (std::size_t j = 1; j <= u; ++j) p.gamma[pd + u + j] = caviar.beta[pd + j];
  return p;
}

/// Residual coefficients reproducing r_t = (c - 1) q_t (linear) or e^2 - q^2 = (c^2 - 1) q^2 (IG).
inline std::vector<double> residual_ratio_hint(const CaviarParams& caviar, const CaviarSpec& spec, double ratio) {
  const double k = spec.kind == SpecKind::IG ? ratio * ratio - 1.0 : ratio - 1.0;
  std::vector<double> h(spec.joint_dim(), 0.0);
  for (std::size_t j = 0; j < spec.caviar_dim(); ++j) h[j] = k * caviar.beta[j];
  return h;
}

inline std::vector<double> residual_persistence_hint(const CaviarSpec& spec, double q0, double r0) {
  std::vector<double> h(spec.joint_dim(), 0.0);
  h[0] = 0.1 * residual_latent(spec.kind, q0, r0);
  h[spec.pd() + static_cast<std::size_t>(spec.u) + 1] = 0.9;
  return h;
}

inline double tail_ratio(double q0, double e0) {
  if (q0 < 0.0 && e0 <= q0) return e0 / q0;
  return 1.25;
}

}  // namespace detail

/// Three-step joint VaR/ES estimation on a training slice:
///  1. CAViaR pinball fit for the VaR recursion;
///  2. multistart fit of the residual recursion under the penalized Barrera loss;
///  3. lift to the joint recursion and refine under the penalized Patton loss.
/// loss_variant BARRERA_ONLY stops after the lift; PATTON_ONLY (and no_cross)
/// replaces steps 2-3 with a multistart fit of the joint loss alone.
inline CaesarModel caesar_fit(std::span<const double> y, double theta, const CaviarSpec& spec,
                              const EstimationConfig& config) {
  ProbabilityLevel level(theta);
  spec.validate();
  config.validate();
  if (y.size() < 50) throw InputError("caesar_fit: need at least 50 training observations");
  const std::size_t T = y.size();

  CaesarModel m;
  m.spec = spec;
  m.theta = theta;
  m.config = config;
  const auto tail = empirical_var_es(y.first(prefix_length(T, config.prefix_fraction)), theta);
  m.q0 = tail.q0;
  m.e0 = tail.e0;
  m.scale = detail::rms(y);
  m.lambda_r = config.resolved_lambda(config.lambda_r, T);
  m.lambda_e = config.resolved_lambda(config.lambda_e, T);
  m.lambda_q = config.resolved_lambda(config.lambda_q, T);

  if (!(m.scale > 0.0)) {
    m.degenerate = true;
    m.caviar_params.beta.assign(spec.caviar_dim(), 0.0);
    m.params.beta.assign(spec.joint_dim(), 0.0);
    m.params.gamma.assign(spec.joint_dim(), 0.0);
    m.caviar_params.beta[0] = m.params.beta[0] = detail::to_latent(spec.kind, m.q0);
    m.params.gamma[0] = detail::to_latent(spec.kind, m.e0);
    return m;
  }

  const double s = m.scale;
  std::vector<double> ys(y.begin(), y.end());
  for (double& v : ys) v /= s;
  const double q0s = m.q0 / s;
  const double e0s = m.e0 / s;
  const double r0s = e0s - q0s;
  const double ratio = detail::tail_ratio(q0s, e0s);

  // Step 1.
  auto step1 = detail::fit_caviar_unit(ys, theta, spec, q0s, MultistartConfig::from(config));
  CaviarParams caviar_unit{step1.beta};
  m.step_losses.step1_pinball = step1.objective;
  m.step1_audit = std::move(step1.audit);

  std::vector<double> q1(T + 1);
  detail::caviar_kernel(caviar_unit.beta, spec, ys, q0s, q1, std::numeric_limits<double>::infinity());
  const std::span<const double> q_step1 = std::span<const double>(q1).first(T);

  const std::size_t jd = spec.joint_dim();
  Objective joint_obj = [&, T, jd](std::span<const double> x) {
    thread_local std::vector<double> bq, be;
    bq.resize(T + 1);
    be.resize(T + 1);
    if (detail::caesar_kernel(x.first(jd), x.subspan(jd, jd), spec, ys, q0s, e0s, bq, be,
                              detail::kDivergenceGuard) != detail::FilterStatus::Ok) {
      return kInfeasible;
    }
    if (config.require_stationary && !detail::joint_stable(x.first(jd), x.subspan(jd, jd), spec)) return kInfeasible;
    return penalized_joint_mean(std::span<const double>(be).first(T), std::span<const double>(bq).first(T), ys,
                                theta, m.lambda_e, m.lambda_q);
  };

  CaesarParams unit;
  const bool patton_only = config.loss_variant == LossVariant::PattonOnly || config.no_cross;
  if (!patton_only) {
    // Step 2.
    Objective r_obj = [&, T](std::span<const double> gt) {
      thread_local std::vector<double> br;
      br.resize(T);
      if (detail::residual_kernel(gt, spec, ys, q_step1, r0s, br, detail::kDivergenceGuard) !=
          detail::FilterStatus::Ok) {
        return kInfeasible;
      }
      if (config.require_stationary && !detail::residual_stable(gt, spec)) return kInfeasible;
      return penalized_r_mean(br, ys, q_step1, theta, m.lambda_r);
    };
    std::vector<std::vector<double>> hints{detail::residual_ratio_hint(caviar_unit, spec, ratio),
                                           detail::residual_persistence_hint(spec, q0s, r0s)};
    m.step2_audit = multistart_minimize(r_obj, jd, MultistartConfig::from(config, 1), hints);
    m.step_losses.step2_penalized_r = m.step2_audit.f;
    unit = lift_residual_params(ResidualParams{m.step2_audit.x}, caviar_unit, spec);

    std::vector<double> x0 = unit.beta;
    x0.insert(x0.end(), unit.gamma.begin(), unit.gamma.end());
    m.step_losses.step3_start = detail::boxed(joint_obj, x0, config.bound);

    if (config.loss_variant == LossVariant::Both) {
      // Step 3 from the lifted point only.
      if (std::isfinite(m.step_losses.step3_start)) {
        m.step3_audit = single_start_minimize(joint_obj, x0, MultistartConfig::from(config, 2));
        unit.beta.assign(m.step3_audit.x.begin(), m.step3_audit.x.begin() + static_cast<std::ptrdiff_t>(jd));
        unit.gamma.assign(m.step3_audit.x.begin() + static_cast<std::ptrdiff_t>(jd), m.step3_audit.x.end());
        m.step_losses.step3_penalized_joint = m.step3_audit.f;
      } else {
        m.step3_skipped = true;
      }
    } else {
      m.step_losses.step3_penalized_joint = m.step_losses.step3_start;
    }
  } else {
    // Joint loss only, optionally with the cross terms pinned at zero.
    const auto free = detail::joint_free_indices(spec, config.no_cross);
    auto expand = [&, jd](std::span<const double> z) {
      std::vector<double> x(2 * jd, 0.0);
      for (std::size_t k = 0; k < free.size(); ++k) x[free[k]] = z[k];
      return x;
    };
    Objective reduced = [&](std::span<const double> z) {
      const auto x = expand(z);
      return joint_obj(x);
    };
    const CaesarParams start = detail::ratio_start(caviar_unit, spec, ratio);
    std::vector<double> hint;
    for (std::size_t k : free) hint.push_back(k < jd ? start.beta[k] : start.gamma[k - jd]);
    std::vector<std::vector<double>> hints{hint};
    m.step_losses.step3_start = detail::boxed(reduced, hint, config.bound);
    m.step3_audit = multistart_minimize(reduced, free.size(), MultistartConfig::from(config, 2), hints);
    const auto x = expand(m.step3_audit.x);
    unit.beta.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(jd));
    unit.gamma.assign(x.begin() + static_cast<std::ptrdiff_t>(jd), x.end());
    m.step_losses.step3_penalized_joint = m.step3_audit.f;
  }

  const double k = detail::intercept_factor(spec.kind, s);
  m.caviar_params = caviar_unit;
  m.caviar_params.beta[0] *= k;
  m.params = unit;
  m.params.beta[0] *= k;
  m.params.gamma[0] *= k;
  return m;
}

/// Most recent lags, newest last: y needs >= p values, q and e need >= u values.
struct RecentState {
  std::vector<double> y;
  std::vector<double> q;
  std::vector<double> e;
};

/// One application of the joint recursion.
inline std::pair<double, double> caesar_forecast(const CaesarParams& params, const CaviarSpec& spec,
                                                 const RecentState& state) {
  spec.validate();
  detail::require_dim(params.beta.size(), spec.joint_dim(), "caesar_forecast beta");
  detail::require_dim(params.gamma.size(), spec.joint_dim(), "caesar_forecast gamma");
  const auto u = static_cast<std::size_t>(spec.u);
  if (state.y.size() < static_cast<std::size_t>(spec.p) || state.q.size() < u || state.e.size() < u) {
    throw InputError("caesar_forecast: state holds fewer lags than the specification needs");
  }
  const std::size_t P = static_cast<std::size_t>(spec.p);
  // Feed the last p observations to the kernel as a tiny series and read its forecast slot.
  std::span<const double> ylags = std::span<const double>(state.y).last(P);
  double sq = params.beta[0] + detail::regressor_sum(spec, params.beta, ylags, P);
  double se = params.gamma[0] + detail::regressor_sum(spec, params.gamma, ylags, P);
  const std::size_t pd = spec.pd();
  for (std::size_t j = 1; j <= u; ++j) {
    const double lq = detail::to_latent(spec.kind, state.q[state.q.size() - j]);
    const double le = detail::to_latent(spec.kind, state.e[state.e.size() - j]);
    sq += params.beta[pd + j] * lq + params.beta[pd + u + j] * le;
    se += params.gamma[pd + j] * lq + params.gamma[pd + u + j] * le;
  }
  double q = 0.0, e = 0.0;
  detail::throw_on(detail::from_latent(spec.kind, sq, q), "caesar_forecast");
  detail::throw_on(detail::from_latent(spec.kind, se, e), "caesar_forecast");
  detail::throw_on(detail::check(q, std::numeric_limits<double>::infinity()), "caesar_forecast");
  detail::throw_on(detail::check(e, std::numeric_limits<double>::infinity()), "caesar_forecast");
  return {q, e};
}

inline std::pair<double, double> caesar_forecast(const CaesarModel& model, const RecentState& state) {
  return caesar_forecast(model.params, model.spec, state);
}

inline nlohmann::json to_json(const CaesarModel& m) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"model", "CAESAR"},
          {"spec", to_json(m.spec)},
          {"theta", m.theta},
          {"beta", m.params.beta},
          {"gamma", m.params.gamma},
          {"q0", m.q0},
          {"e0", m.e0},
          {"step_losses",
           {{"step1_pinball", num(m.step_losses.step1_pinball)},
            {"step2_penalized_r", num(m.step_losses.step2_penalized_r)},
            {"step3_start", num(m.step_losses.step3_start)},
            {"step3_penalized_joint", num(m.step_losses.step3_penalized_joint)},
            {"scale", "unit-rms training data"}}},
          {"caviar_beta", m.caviar_params.beta},
          {"scale", m.scale},
          {"lambda", {{"r", m.lambda_r}, {"e", m.lambda_e}, {"q", m.lambda_q}}},
          {"step2_ranking_loss", "penalized_r"},
          {"degenerate", m.degenerate},
          {"step3_skipped", m.step3_skipped},
          {"config_echo", to_json(m.config)}};
}

inline CaesarModel caesar_model_from_json(const nlohmann::json& j) {
  CaesarModel m;
  m.spec = spec_from_json(j.at("spec"));
  m.theta = j.at("theta").get<double>();
  m.params.beta = j.at("beta").get<std::vector<double>>();
  m.params.gamma = j.at("gamma").get<std::vector<double>>();
  m.q0 = j.at("q0").get<double>();
  m.e0 = j.at("e0").get<double>();
  m.scale = j.value("scale", 1.0);
  m.degenerate = j.value("degenerate", false);
  if (j.contains("caviar_beta")) m.caviar_params.beta = j.at("caviar_beta").get<std::vector<double>>();
  if (j.contains("config_echo")) m.config = estimation_config_from_json(j.at("config_echo"));
  detail::require_dim(m.params.beta.size(), m.spec.joint_dim(), "caesar model beta");
  detail::require_dim(m.params.gamma.size(), m.spec.joint_dim(), "caesar model gamma");
  return m;
}

}  // namespace tailrisk
