#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tailrisk/caesar.hpp"
#include "tailrisk/core.hpp"
#include "tailrisk/error.hpp"
#include "tailrisk/losses.hpp"
#include "tailrisk/optimizer.hpp"

namespace tailrisk {

/// One-factor score-driven model: q_t = a exp(k_t), e_t = b exp(k_t), b < a < 0.
struct Gas1Params {
  double a = -1.0;
  double b = -1.5;
  double beta = 0.9;
  double gamma = 0.05;
  double k0 = 0.0;

  void validate() const {
    if (!(b < a && a < 0.0)) throw InputError("GAS1 parameters need b < a < 0");
    if (!std::isfinite(beta) || !std::isfinite(gamma) || !std::isfinite(k0)) {
      throw InputError("GAS1 parameters must be finite");
    }
  }
};

/// Two-factor score-driven model on (q_t, e_t) directly.
struct Gas2Params {
  std::array<double, 2> w{0.0, 0.0};
  double b1 = 0.9;
  double b2 = 0.9;
  /// Row-major 2x2 score loading.
  std::array<double, 4> A{0.0, 0.0, 0.0, 0.0};
  double q_init = -1.0;
  double e_init = -1.5;

  void validate() const {
    for (double v : {w[0], w[1], b1, b2, A[0], A[1], A[2], A[3], q_init, e_init}) {
      if (!std::isfinite(v)) throw InputError("GAS2 parameters must be finite");
    }
    if (!(e_init <= q_init && q_init <= 0.0)) throw InputError("GAS2 initial values need e_init <= q_init <= 0");
  }
};

namespace detail {

inline constexpr double kMaxFactor = 50.0;

inline FilterStatus gas1_kernel(const Gas1Params& p, std::span<const double> y, double theta, std::span<double> oq,
                                std::span<double> oe) noexcept {
  double k = p.k0;
  if (std::abs(k) > kMaxFactor) return FilterStatus::Diverged;
  oq[0] = p.a * std::exp(k);
  oe[0] = p.b * std::exp(k);
  for (std::size_t t = 1; t <= y.size(); ++t) {
    const double yl = y[t - 1];
    const double hit = yl <= oq[t - 1] ? 1.0 : 0.0;
    k = p.beta * k + (p.gamma / oe[t - 1]) * (hit * yl / theta - oe[t - 1]);
    if (!std::isfinite(k) || std::abs(k) > kMaxFactor) return FilterStatus::Diverged;
    const double ek = std::exp(k);
    oq[t] = p.a * ek;
    oe[t] = p.b * ek;
  }
  return FilterStatus::Ok;
}

inline FilterStatus gas2_kernel(const Gas2Params& p, std::span<const double> y, double theta, std::span<double> oq,
                                std::span<double> oe, double guard) noexcept {
  oq[0] = p.q_init;
  oe[0] = p.e_init;
  for (std::size_t t = 1; t <= y.size(); ++t) {
    const double yl = y[t - 1];
    const double ql = oq[t - 1];
    const double el = oe[t - 1];
    const double hit = yl <= ql ? 1.0 : 0.0;
    const double s1 = ql * (theta - hit);
    const double s2 = yl / theta * hit - el;
    oq[t] = p.w[0] + p.b1 * ql + p.A[0] * s1 + p.A[1] * s2;
    oe[t] = p.w[1] + p.b2 * el + p.A[2] * s1 + p.A[3] * s2;
    if (auto st = check(oq[t], guard); st != FilterStatus::Ok) return st;
    if (auto st = check(oe[t], guard); st != FilterStatus::Ok) return st;
  }
  return FilterStatus::Ok;
}

inline JointPath to_joint_path(std::vector<double> q, std::vector<double> e) {
  JointPath out;
  for (std::size_t t = 1; t < q.size(); ++t) out.monotonicity_violations += e[t] < q[t] ? 0 : 1;
  out.next_q = q.back();
  out.next_e = e.back();
  q.pop_back();
  e.pop_back();
  out.q = std::move(q);
  out.e = std::move(e);
  return out;
}

}  // namespace detail

inline JointPath gas1_filter(const Gas1Params& params, std::span<const double> y, double theta) {
  params.validate();
  ProbabilityLevel level(theta);
  if (y.empty()) throw InputError("gas1_filter: empty series");
  std::vector<double> q(y.size() + 1), e(y.size() + 1);
  if (detail::gas1_kernel(params, y, theta, q, e) != detail::FilterStatus::Ok) {
    throw DivergenceError("gas1_filter: latent factor left [-50, 50]");
  }
  return detail::to_joint_path(std::move(q), std::move(e));
}

inline JointPath gas2_filter(const Gas2Params& params, std::span<const double> y, double theta) {
  params.validate();
  ProbabilityLevel level(theta);
  if (y.empty()) throw InputError("gas2_filter: empty series");
  std::vector<double> q(y.size() + 1), e(y.size() + 1);
  detail::throw_on(detail::gas2_kernel(params, y, theta, q, e, std::numeric_limits<double>::infinity()),
                   "gas2_filter");
  return detail::to_joint_path(std::move(q), std::move(e));
}

enum class GasVariant { One, Two };

struct GasModel {
  GasVariant variant = GasVariant::One;
  std::variant<Gas1Params, Gas2Params> params;
  double theta = 0.05;
  /// In-sample objective on unit-RMS data (Patton loss; GAS2 adds the monotonicity penalties).
  double objective = 0.0;
  double scale = 1.0;
  bool degenerate = false;
  /// Best in-sample path range exceeded instability_ratio times the return range.
  bool unstable = false;
  double instability_ratio = 10.0;
  MultistartResult audit;

  JointPath filter(std::span<const double> y) const {
    if (variant == GasVariant::One) return gas1_filter(std::get<Gas1Params>(params), y, theta);
    return gas2_filter(std::get<Gas2Params>(params), y, theta);
  }
};

/// max(range(q), range(e)) > ratio * range(y); the instability rule for score-driven fits.
inline bool path_unstable(const JointPath& path, std::span<const double> y, double ratio) {
  auto range = [](std::span<const double> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  };
  const double ry = range(y);
  return std::max(range(path.q), range(path.e)) > ratio * ry;
}

namespace detail {

/// GAS1 is fitted on (log(-a), log(a - b), beta, gamma) with k0 = 0.
inline Gas1Params gas1_from_free(std::span<const double> z) {
  Gas1Params p;
  p.a = -std::exp(z[0]);
  p.b = p.a - std::exp(z[1]);
  p.beta = z[2];
  p.gamma = z[3];
  p.k0 = 0.0;
  return p;
}

inline Gas2Params gas2_from_free(std::span<const double> z, double q_init, double e_init) {
  Gas2Params p;
  p.w = {z[0], z[1]};
  p.b1 = z[2];
  p.b2 = z[3];
  p.A = {z[4], z[5], z[6], z[7]};
  p.q_init = q_init;
  p.e_init = e_init;
  return p;
}

}  // namespace detail

/// Fits a score-driven model under the Patton loss. A documented default start is
/// chain-minimized alongside the random multistart candidates; the best wins.
inline GasModel gas_fit(std::span<const double> y, double theta, GasVariant variant, const EstimationConfig& config,
                        double instability_ratio = 10.0) {
  ProbabilityLevel level(theta);
  config.validate();
  if (y.size() < 50) throw InputError("gas_fit: need at least 50 training observations");
  const std::size_t T = y.size();
  GasModel m;
  m.variant = variant;
  m.theta = theta;
  m.instability_ratio = instability_ratio;
  m.scale = detail::rms(y);
  auto tail = empirical_var_es(y.first(prefix_length(T, config.prefix_fraction)), theta);

  if (!(m.scale > 0.0)) {
    m.degenerate = true;
    if (variant == GasVariant::One) {
      m.params = Gas1Params{-1e-12, -2e-12, 0.0, 0.0, 0.0};
    } else {
      m.params = Gas2Params{{0.0, 0.0}, 1.0, 1.0, {0.0, 0.0, 0.0, 0.0}, tail.q0, tail.e0};
    }
    return m;
  }

  const double s = m.scale;
  std::vector<double> ys(y.begin(), y.end());
  for (double& v : ys) v /= s;
  double q0s = tail.q0 / s;
  double e0s = tail.e0 / s;
  if (!(q0s < 0.0)) q0s = -0.5;
  if (!(e0s < q0s)) e0s = 1.25 * q0s;
  const double lambda_e = config.resolved_lambda(config.lambda_e, T);
  const double lambda_q = config.resolved_lambda(config.lambda_q, T);

  Objective obj;
  std::vector<double> start;
  std::size_t dim = 0;
  if (variant == GasVariant::One) {
    dim = 4;
    obj = [&, T](std::span<const double> z) {
      thread_local std::vector<double> bq, be;
      bq.resize(T + 1);
      be.resize(T + 1);
      if (detail::gas1_kernel(detail::gas1_from_free(z), ys, theta, bq, be) != detail::FilterStatus::Ok) {
        return kInfeasible;
      }
      return penalized_joint_mean(std::span<const double>(be).first(T), std::span<const double>(bq).first(T), ys,
                                  theta, 0.0, 0.0);
    };
    start = {std::log(-q0s), std::log(q0s - e0s), 0.9, 0.05};
  } else {
    dim = 8;
    obj = [&, T](std::span<const double> z) {
      thread_local std::vector<double> bq, be;
      bq.resize(T + 1);
      be.resize(T + 1);
      if (detail::gas2_kernel(detail::gas2_from_free(z, q0s, e0s), ys, theta, bq, be, detail::kDivergenceGuard) !=
          detail::FilterStatus::Ok) {
        return kInfeasible;
      }
      return penalized_joint_mean(std::span<const double>(be).first(T), std::span<const double>(bq).first(T), ys,
                                  theta, lambda_e, lambda_q);
    };
    start = {0.1 * q0s, 0.1 * e0s, 0.9, 0.9, 0.01, 0.0, 0.0, 0.01};
  }

  std::vector<std::vector<double>> hints{start};
  m.audit = multistart_minimize(obj, dim, MultistartConfig::from(config, 3), hints);
  m.objective = m.audit.f;
  if (variant == GasVariant::One) {
    Gas1Params p = detail::gas1_from_free(m.audit.x);
    p.a *= s;
    p.b *= s;
    m.params = p;
  } else {
    Gas2Params p = detail::gas2_from_free(m.audit.x, tail.q0, tail.e0);
    p.w[0] *= s;
    p.w[1] *= s;
    p.q_init = q0s * s;
    p.e_init = e0s * s;
    m.params = p;
  }
  m.unstable = path_unstable(m.filter(y), y, instability_ratio);
  return m;
}

inline nlohmann::json to_json(const GasModel& m) {
  nlohmann::json j{{"theta", m.theta},
                   {"objective", m.objective},
                   {"scale", m.scale},
                   {"degenerate", m.degenerate},
                   {"unstable", m.unstable},
                   {"instability_ratio", m.instability_ratio}};
  if (m.variant == GasVariant::One) {
    const auto& p = std::get<Gas1Params>(m.params);
    j["model"] = "GAS1";
    j["params"] = {{"a", p.a}, {"b", p.b}, {"beta", p.beta}, {"gamma", p.gamma}, {"k0", p.k0}};
    j["parameterization"] = "a=-exp(alpha), b=a-exp(delta), k0 fixed at 0";
  } else {
    const auto& p = std::get<Gas2Params>(m.params);
    j["model"] = "GAS2";
    j["params"] = {{"w", p.w}, {"b1", p.b1}, {"b2", p.b2}, {"A", p.A}, {"q_init", p.q_init}, {"e_init", p.e_init}};
    j["parameterization"] = "free (w, b1, b2, A); initial values from the empirical prefix";
  }
  return j;
}

inline GasModel gas_model_from_json(const nlohmann::json& j) {
  GasModel m;
  const auto name = j.at("model").get<std::string>();
  m.theta = j.at("theta").get<double>();
  m.objective = j.value("objective", 0.0);
  m.scale = j.value("scale", 1.0);
  m.degenerate = j.value("degenerate", false);
  m.unstable = j.value("unstable", false);
  m.instability_ratio = j.value("instability_ratio", 10.0);
  const auto& p = j.at("params");
  if (name == "GAS1") {
    m.variant = GasVariant::One;
    Gas1Params g{p.at("a").get<double>(), p.at("b").get<double>(), p.at("beta").get<double>(),
                 p.at("gamma").get<double>(), p.value("k0", 0.0)};
    g.validate();
    m.params = g;
  } else if (name == "GAS2") {
    m.variant = GasVariant::Two;
    Gas2Params g;
    g.w = p.at("w").get<std::array<double, 2>>();
    g.b1 = p.at("b1").get<double>();
    g.b2 = p.at("b2").get<double>();
    g.A = p.at("A").get<std::array<double, 4>>();
    g.q_init = p.at("q_init").get<double>();
    g.e_init = p.at("e_init").get<double>();
    g.validate();
    m.params = g;
  } else {
    throw InputError("not a GAS model: " + name);
  }
  return m;
}

}  // namespace tailrisk
