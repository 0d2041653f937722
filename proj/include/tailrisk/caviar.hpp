#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailrisk/core.hpp"
#include "tailrisk/error.hpp"
#include "tailrisk/losses.hpp"
#include "tailrisk/optimizer.hpp"

namespace tailrisk {

/// Regressor map applied to lagged returns.
///  AS  : ((y)^+, (y)^-), d = 2
///  SAV : |y|,            d = 1
///  IG  : y^2,            d = 1, recursion runs on squared targets, output -sqrt(.)
enum class SpecKind { AS, SAV, IG };

inline const char* to_string(SpecKind k) {
  switch (k) {
    case SpecKind::AS: return "AS";
    case SpecKind::SAV: return "SAV";
    case SpecKind::IG: return "IG";
  }
  return "AS";
}

inline SpecKind spec_kind_from_string(const std::string& s) {
  if (s == "AS") return SpecKind::AS;
  if (s == "SAV") return SpecKind::SAV;
  if (s == "IG") return SpecKind::IG;
  throw InputError("unknown specification kind: " + s);
}

struct CaviarSpec {
  SpecKind kind = SpecKind::AS;
  int p = 1;
  int u = 1;

  int d() const noexcept { return kind == SpecKind::AS ? 2 : 1; }
  /// Regressor block length p*d.
  std::size_t pd() const noexcept { return static_cast<std::size_t>(p * d()); }
  /// 1 + p*d + u coefficients.
  std::size_t caviar_dim() const noexcept { return 1 + pd() + static_cast<std::size_t>(u); }
  /// 1 + p*d + 2u coefficients per equation of the joint model.
  std::size_t joint_dim() const noexcept { return 1 + pd() + 2 * static_cast<std::size_t>(u); }
  std::size_t max_lag() const noexcept { return static_cast<std::size_t>(std::max(p, u)); }

  void validate() const {
    if (p < 1 || u < 1) throw InputError("lag orders p and u must be >= 1");
  }

  friend bool operator==(const CaviarSpec&, const CaviarSpec&) = default;
};

namespace detail {

enum class FilterStatus { Ok, Diverged, Domain };

/// Adds the regressor block sum_i coef_i . f(y_{t-i}); missing lags use y[0].
inline double regressor_sum(const CaviarSpec& spec, std::span<const double> coef, std::span<const double> y,
                            std::size_t t) noexcept {
  double s = 0.0;
  for (int i = 1; i <= spec.p; ++i) {
    const double yl = t >= static_cast<std::size_t>(i) ? y[t - static_cast<std::size_t>(i)] : y[0];
    const std::size_t base = 1 + static_cast<std::size_t>((i - 1) * spec.d());
    switch (spec.kind) {
      case SpecKind::AS:
        s += coef[base] * (yl > 0.0 ? yl : 0.0) + coef[base + 1] * (yl < 0.0 ? -yl : 0.0);
        break;
      case SpecKind::SAV:
        s += coef[base] * std::abs(yl);
        break;
      case SpecKind::IG:
        s += coef[base] * yl * yl;
        break;
    }
  }
  return s;
}

inline double to_latent(SpecKind k, double v) noexcept { return k == SpecKind::IG ? v * v : v; }

inline FilterStatus from_latent(SpecKind k, double s, double& out) noexcept {
  if (k != SpecKind::IG) {
    out = s;
  } else {
    if (!(s >= 0.0)) return FilterStatus::Domain;
    out = -std::sqrt(s);
  }
  return FilterStatus::Ok;
}

inline FilterStatus check(double v, double guard) noexcept {
  return std::isfinite(v) && std::abs(v) <= guard ? FilterStatus::Ok : FilterStatus::Diverged;
}

/// VaR recursion. out has y.size()+1 slots: out[0] = q0, out[t] for t >= 1 uses
/// lags y[t-i] and out[t-j]; out[T] is the one-step forecast past the sample.
inline FilterStatus caviar_kernel(std::span<const double> beta, const CaviarSpec& spec, std::span<const double> y,
                                  double q0, std::span<double> out, double guard) noexcept {
  const std::size_t T = y.size();
  const std::size_t pd = spec.pd();
  const double lq0 = to_latent(spec.kind, q0);
  out[0] = q0;
  for (std::size_t t = 1; t <= T; ++t) {
    double s = beta[0] + regressor_sum(spec, beta, y, t);
    for (int j = 1; j <= spec.u; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      const double lq = t >= uj ? to_latent(spec.kind, out[t - uj]) : lq0;
      s += beta[pd + uj] * lq;
    }
    if (auto st = from_latent(spec.kind, s, out[t]); st != FilterStatus::Ok) return st;
    if (auto st = check(out[t], guard); st != FilterStatus::Ok) return st;
  }
  return FilterStatus::Ok;
}

inline void throw_on(FilterStatus st, const char* where) {
  if (st == FilterStatus::Domain) throw DomainError(std::string(where) + ": negative radicand in the IG recursion");
  if (st == FilterStatus::Diverged) throw DivergenceError(std::string(where) + ": filter state diverged");
}

inline constexpr double kDivergenceGuard = 1e6;

/// Root-mean-square of the training data, used to fit on a unit scale.
inline double rms(std::span<const double> y) noexcept {
  double s = 0.0;
  for (double v : y) s += v * v;
  return std::sqrt(s / static_cast<double>(y.size()));
}

/// Intercept rescaling between unit-scale and data-scale coefficients. The AS and
/// SAV recursions are positively homogeneous in (y, q, intercept); IG is
/// homogeneous on the squared scale.
inline double intercept_factor(SpecKind k, double scale) noexcept { return k == SpecKind::IG ? scale * scale : scale; }

}  // namespace detail

struct CaviarParams {
  std::vector<double> beta;
};

/// Filtered VaR path aligned with y (q[0] = q0) plus the forecast for the next time.
struct CaviarPath {
  std::vector<double> q;
  double next = 0.0;
};

inline CaviarPath caviar_filter(const CaviarParams& params, const CaviarSpec& spec, std::span<const double> y,
                                double q0) {
  spec.validate();
  if (params.beta.size() != spec.caviar_dim()) {
    throw InputError("caviar_filter: expected " + std::to_string(spec.caviar_dim()) + " coefficients, got " +
                     std::to_string(params.beta.size()));
  }
  if (y.empty()) throw InputError("caviar_filter: empty series");
  if (!std::isfinite(q0)) throw InputError("caviar_filter: q0 must be finite");
  std::vector<double> buf(y.size() + 1);
  detail::throw_on(detail::caviar_kernel(params.beta, spec, y, q0, buf,
                                         std::numeric_limits<double>::infinity()),
                   "caviar_filter");
  CaviarPath out;
  out.next = buf.back();
  buf.pop_back();
  out.q = std::move(buf);
  return out;
}

struct CaviarModel {
  CaviarSpec spec;
  CaviarParams params;
  double theta = 0.05;
  double q0 = 0.0;
  /// In-sample pinball loss on the training data (data scale).
  double fit_loss = 0.0;
  /// Optimum of the unit-scale objective; never above any multistart candidate's start value.
  double objective = 0.0;
  double scale = 1.0;
  bool degenerate = false;
  MultistartResult audit;

  CaviarPath filter(std::span<const double> y) const { return caviar_filter(params, spec, y, q0); }
};

namespace detail {

struct UnitCaviarFit {
  std::vector<double> beta;
  double objective = 0.0;
  MultistartResult audit;
};

inline std::vector<double> caviar_persistence_hint(const CaviarSpec& spec, double q0) {
  std::vector<double> h(spec.caviar_dim(), 0.0);
  const double lq0 = to_latent(spec.kind, q0);
  h[0] = 0.1 * lq0;
  h[spec.pd() + 1] = 0.9;
  return h;
}

/// Pinball fit of the VaR recursion on unit-scale data.
inline UnitCaviarFit fit_caviar_unit(std::span<const double> ys, double theta, const CaviarSpec& spec, double q0s,
                                     const MultistartConfig& mcfg) {
  const std::size_t T = ys.size();
  Objective obj = [&, T](std::span<const double> beta) {
    thread_local std::vector<double> buf;
    buf.resize(T + 1);
    if (caviar_kernel(beta, spec, ys, q0s, buf, kDivergenceGuard) != FilterStatus::Ok) return kInfeasible;
    return pinball_mean(std::span<const double>(buf).first(T), ys, theta);
  };
  std::vector<std::vector<double>> hints{caviar_persistence_hint(spec, q0s)};
  UnitCaviarFit out;
  out.audit = multistart_minimize(obj, spec.caviar_dim(), mcfg, hints);
  out.beta = out.audit.x;
  out.objective = out.audit.f;
  return out;
}

}  // namespace detail

/// Fits a CAViaR recursion by pinball-loss minimization on the training slice.
/// The recursion is seeded with the empirical quantile of the first
/// prefix_fraction of the data; estimation runs on data rescaled to unit RMS.
inline CaviarModel caviar_fit(std::span<const double> y, double theta, const CaviarSpec& spec,
                              const EstimationConfig& config) {
  ProbabilityLevel level(theta);
  spec.validate();
  config.validate();
  if (y.size() < 50) throw InputError("caviar_fit: need at least 50 training observations");

  CaviarModel m;
  m.spec = spec;
  m.theta = theta;
  const auto tail = empirical_var_es(y.first(prefix_length(y.size(), config.prefix_fraction)), theta);
  m.q0 = tail.q0;
  m.scale = detail::rms(y);

  if (!(m.scale > 0.0)) {
    m.degenerate = true;
    m.params.beta.assign(spec.caviar_dim(), 0.0);
    m.params.beta[0] = detail::to_latent(spec.kind, m.q0);
    m.fit_loss = pinball_mean(m.filter(y).q, y, theta);
    m.objective = m.fit_loss;
    return m;
  }

  std::vector<double> ys(y.begin(), y.end());
  for (double& v : ys) v /= m.scale;
  auto unit = detail::fit_caviar_unit(ys, theta, spec, m.q0 / m.scale, MultistartConfig::from(config));
  m.params.beta = unit.beta;
  m.params.beta[0] *= detail::intercept_factor(spec.kind, m.scale);
  m.objective = unit.objective;
  m.audit = std::move(unit.audit);
  m.fit_loss = pinball_mean(m.filter(y).q, y, theta);
  return m;
}

inline nlohmann::json to_json(const CaviarSpec& s) {
  return {{"kind", to_string(s.kind)}, {"p", s.p}, {"u", s.u}};
}

inline CaviarSpec spec_from_json(const nlohmann::json& j) {
  CaviarSpec s{spec_kind_from_string(j.at("kind").get<std::string>()), j.at("p").get<int>(), j.at("u").get<int>()};
  s.validate();
  return s;
}

/// Flat model object: {kind, p, u, theta, beta[], q0, ...}.
inline nlohmann::json to_json(const CaviarModel& m) {
  return {{"model", "CAVIAR"},
          {"kind", to_string(m.spec.kind)},
          {"p", m.spec.p},
          {"u", m.spec.u},
          {"theta", m.theta},
          {"beta", m.params.beta},
          {"q0", m.q0},
          {"fit_loss", m.fit_loss},
          {"scale", m.scale},
          {"degenerate", m.degenerate}};
}

inline CaviarModel caviar_model_from_json(const nlohmann::json& j) {
  CaviarModel m;
  m.spec = spec_from_json(j);
  m.theta = j.at("theta").get<double>();
  m.params.beta = j.at("beta").get<std::vector<double>>();
  m.q0 = j.at("q0").get<double>();
  m.fit_loss = j.value("fit_loss", 0.0);
  m.scale = j.value("scale", 1.0);
  m.degenerate = j.value("degenerate", false);
  if (m.params.beta.size() != m.spec.caviar_dim()) throw InputError("caviar model: beta has wrong length");
  return m;
}

}  // namespace tailrisk
