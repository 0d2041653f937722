#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "tailrisk/core.hpp"
#include "tailrisk/error.hpp"
#include "tailrisk/losses.hpp"

namespace tailrisk {

enum class TestStatus { Ok, Inconclusive, Degenerate };

inline const char* to_string(TestStatus s) {
  switch (s) {
    case TestStatus::Ok: return "ok";
    case TestStatus::Inconclusive: return "inconclusive";
    case TestStatus::Degenerate: return "degenerate";
  }
  return "ok";
}

struct TestReport {
  std::string name;
  double statistic = 0.0;
  double p_value = 1.0;
  int n_boot = 0;
  bool reject_at_5pct = false;
  TestStatus status = TestStatus::Ok;
  std::map<std::string, double> diagnostics;
};

inline constexpr double kTestLevel = 0.05;

namespace detail {

inline TestReport finalize(TestReport r) {
  r.p_value = std::clamp(r.p_value, 0.0, 1.0);
  r.reject_at_5pct = r.status == TestStatus::Ok && r.p_value < kTestLevel;
  return r;
}

/// Means of n_boot resamples (with replacement) of values. Index draws depend only
/// on (values.size(), n_boot, seed).
inline std::vector<double> bootstrap_means(std::span<const double> values, int n_boot, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> out(static_cast<std::size_t>(n_boot));
  const double n = static_cast<double>(values.size());
  for (auto& m : out) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
    m = s / n;
  }
  return out;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// One-sided bootstrap for H0: E[x] >= 0. Shifts x to mean zero and returns the
/// fraction of resampled means at or below the observed mean.
inline double one_sided_lower_p(std::span<const double> x, int n_boot, std::uint64_t seed, double& observed) {
  observed = mean(x);
  std::vector<double> centred(x.begin(), x.end());
  for (double& v : centred) v -= observed;
  const auto means = bootstrap_means(centred, n_boot, seed);
  std::size_t hits = 0;
  for (double m : means) hits += m <= observed ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(n_boot);
}

inline void require_boot(int n_boot) {
  if (n_boot < 1) throw InputError("n_boot must be >= 1");
}

inline double student_two_sided_p(double t, double dof) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t_distribution<double> dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace detail

/// Strict violation set {t : y_t < q_t}.
inline std::vector<std::size_t> violation_set(std::span<const double> y, std::span<const double> q) {
  detail::require_same_length(y.size(), q.size(), "violation_set");
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (y[t] < q[t]) out.push_back(t);
  }
  return out;
}

/// McNeil-Frey: one-sided bootstrap test of H0 E[y_t - e_t | violation] >= 0.
/// Rejection signals underestimated risk. Fewer than 5 violations is inconclusive.
inline TestReport mnf_test(std::span<const double> y, std::span<const double> q, std::span<const double> e,
                           int n_boot = 10000, std::uint64_t seed = 0) {
  detail::require_same_length(y.size(), e.size(), "mnf_test");
  detail::require_boot(n_boot);
  const auto viol = violation_set(y, q);
  TestReport r{"MNF", 0.0, 1.0, n_boot, false, TestStatus::Ok, {}};
  r.diagnostics["n_violations"] = static_cast<double>(viol.size());
  if (viol.size() < 5) {
    r.status = TestStatus::Inconclusive;
    if (!viol.empty()) {
      double s = 0.0;
      for (auto t : viol) s += y[t] - e[t];
      r.statistic = s / static_cast<double>(viol.size());
    }
    return detail::finalize(r);
  }
  std::vector<double> x;
  x.reserve(viol.size());
  for (auto t : viol) x.push_back(y[t] - e[t]);
  r.p_value = detail::one_sided_lower_p(x, n_boot, seed, r.statistic);
  return detail::finalize(r);
}

enum class AsVariant { Z1, Z2 };

/// Acerbi-Szekely Z1/Z2 with a two-sided recentred bootstrap around H0: Z = 1.
///   Z1 = mean over violations of y_t / e_t
///   Z2 = (1/T) sum over violations of y_t / (e_t theta)
inline TestReport acerbi_szekely_test(std::span<const double> y, std::span<const double> q,
                                      std::span<const double> e, AsVariant variant, double theta,
                                      int n_boot = 10000, std::uint64_t seed = 0) {
  detail::require_same_length(y.size(), e.size(), "acerbi_szekely_test");
  detail::require_boot(n_boot);
  ProbabilityLevel level(theta);
  const auto viol = violation_set(y, q);
  TestReport r{variant == AsVariant::Z1 ? "Z1" : "Z2", 0.0, 1.0, n_boot, false, TestStatus::Ok, {}};
  r.diagnostics["n_violations"] = static_cast<double>(viol.size());
  for (auto t : viol) {
    if (e[t] == 0.0) throw DomainError("acerbi_szekely_test: ES forecast is zero at a violation");
  }

  std::vector<double> terms;
  if (variant == AsVariant::Z1) {
    if (viol.empty()) {
      r.status = TestStatus::Inconclusive;
      return detail::finalize(r);
    }
    for (auto t : viol) terms.push_back(y[t] / e[t]);
  } else {
    terms.assign(y.size(), 0.0);
    for (auto t : viol) terms[t] = y[t] / (e[t] * theta);
  }
  r.statistic = detail::mean(terms);
  for (double& v : terms) v += 1.0 - r.statistic;
  const auto means = detail::bootstrap_means(terms, n_boot, seed);
  const double dev = std::abs(r.statistic - 1.0);
  std::size_t hits = 0;
  for (double m : means) hits += std::abs(m - 1.0) >= dev ? 1 : 0;
  r.p_value = static_cast<double>(hits) / static_cast<double>(n_boot);
  return detail::finalize(r);
}

/// Diebold-Mariano with the Harvey small-sample factor; two-sided, Student-t(T-1).
/// Positive statistics mean A has the larger loss.
inline TestReport dm_test(std::span<const double> loss_a, std::span<const double> loss_b, int h = 1) {
  detail::require_same_length(loss_a.size(), loss_b.size(), "dm_test");
  const std::size_t T = loss_a.size();
  if (T < 10) throw InputError("dm_test: need at least 10 observations");
  if (h < 1) throw InputError("dm_test: horizon must be >= 1");
  std::vector<double> d(T);
  bool all_zero = true;
  for (std::size_t t = 0; t < T; ++t) {
    d[t] = loss_a[t] - loss_b[t];
    all_zero = all_zero && d[t] == 0.0;
  }
  TestReport r{"DM", 0.0, 1.0, 0, false, TestStatus::Ok, {}};
  if (all_zero) {
    r.status = TestStatus::Degenerate;
    r.diagnostics["equal_losses"] = 1.0;
    return detail::finalize(r);
  }
  const double dbar = detail::mean(d);
  const double n = static_cast<double>(T);
  auto autocov = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t t = k; t < T; ++t) s += (d[t] - dbar) * (d[t - k] - dbar);
    return s / n;
  };
  double v = autocov(0);
  for (int k = 1; k <= h - 1; ++k) v += 2.0 * autocov(static_cast<std::size_t>(k));
  const double hd = static_cast<double>(h);
  const double harvey = std::sqrt((n + 1.0 - 2.0 * hd + hd * (hd - 1.0) / n) / n);
  double stat = 0.0;
  if (v > 0.0) {
    stat = dbar / std::sqrt(v / n) * harvey;
  } else {
    stat = dbar > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }
  r.statistic = stat;
  r.p_value = detail::student_two_sided_p(stat, n - 1.0);
  r.diagnostics["mean_difference"] = dbar;
  r.diagnostics["variance"] = v;
  r.diagnostics["harvey_factor"] = harvey;
  return detail::finalize(r);
}

/// Corrected resampled t-test across folds: t = dbar / sqrt((1/J + n_test/n_train) s_d^2),
/// two-sided Student-t(J-1).
inline TestReport nadeau_bengio_test(std::span<const double> fold_loss_a, std::span<const double> fold_loss_b,
                                     std::size_t n_train, std::size_t n_test) {
  detail::require_same_length(fold_loss_a.size(), fold_loss_b.size(), "nadeau_bengio_test");
  const std::size_t J = fold_loss_a.size();
  if (J < 2) throw InputError("nadeau_bengio_test: need at least 2 folds");
  if (n_train == 0) throw InputError("nadeau_bengio_test: n_train must be positive");
  std::vector<double> d(J);
  for (std::size_t j = 0; j < J; ++j) d[j] = fold_loss_a[j] - fold_loss_b[j];
  const double dbar = detail::mean(d);
  double ss = 0.0;
  for (double v : d) ss += (v - dbar) * (v - dbar);
  const double s2 = ss / static_cast<double>(J - 1);
  TestReport r{"NB", 0.0, 1.0, 0, false, TestStatus::Ok, {}};
  const double factor = 1.0 / static_cast<double>(J) + static_cast<double>(n_test) / static_cast<double>(n_train);
  r.diagnostics["variance_factor"] = factor;
  r.diagnostics["mean_difference"] = dbar;
  if (!(s2 > 0.0)) {
    r.status = TestStatus::Degenerate;
    return detail::finalize(r);
  }
  r.statistic = dbar / std::sqrt(factor * s2);
  r.p_value = detail::student_two_sided_p(r.statistic, static_cast<double>(J - 1));
  return detail::finalize(r);
}

/// One-sided bootstrap on d_t = loss_a - loss_b with H0: E[d] >= 0; rejection means A beats B.
inline TestReport loss_difference_test(std::span<const double> loss_a, std::span<const double> loss_b,
                                       int n_boot = 10000, std::uint64_t seed = 0) {
  detail::require_same_length(loss_a.size(), loss_b.size(), "loss_difference_test");
  detail::require_boot(n_boot);
  if (loss_a.empty()) throw InputError("loss_difference_test: empty input");
  std::vector<double> d(loss_a.size());
  bool all_zero = true;
  for (std::size_t t = 0; t < d.size(); ++t) {
    d[t] = loss_a[t] - loss_b[t];
    all_zero = all_zero && d[t] == 0.0;
  }
  TestReport r{"LD", 0.0, 1.0, n_boot, false, TestStatus::Ok, {}};
  if (all_zero) {
    r.status = TestStatus::Degenerate;
    return detail::finalize(r);
  }
  r.p_value = detail::one_sided_lower_p(d, n_boot, seed, r.statistic);
  return detail::finalize(r);
}

namespace detail {

struct NnlsWeights {
  double alpha = 0.0;
  double beta = 0.0;
};

/// min ||t - alpha a - beta b||^2 over alpha, beta >= 0 by active-set enumeration.
inline NnlsWeights nnls2(std::span<const double> a, std::span<const double> b, std::span<const double> target) {
  double aa = 0, bb = 0, ab = 0, at = 0, bt = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    aa += a[i] * a[i];
    bb += b[i] * b[i];
    ab += a[i] * b[i];
    at += a[i] * target[i];
    bt += b[i] * target[i];
  }
  auto sse = [&](double x, double z) {
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double res = target[i] - x * a[i] - z * b[i];
      s += res * res;
    }
    return s;
  };
  std::vector<NnlsWeights> cands;
  const double det = aa * bb - ab * ab;
  if (det > 1e-14 * aa * bb) {
    const NnlsWeights w{(at * bb - bt * ab) / det, (bt * aa - at * ab) / det};
    if (w.alpha >= 0.0 && w.beta >= 0.0) return w;
  }
  cands.push_back({aa > 0.0 ? std::max(0.0, at / aa) : 0.0, 0.0});
  cands.push_back({0.0, bb > 0.0 ? std::max(0.0, bt / bb) : 0.0});
  return sse(cands[0].alpha, cands[0].beta) <= sse(cands[1].alpha, cands[1].beta) ? cands[0] : cands[1];
}

}  // namespace detail

/// Encompassing test. On the first half, non-negative least squares of the realized
/// tail returns (times where y_t < q_A,t) on (e_A, e_B) gives weights (alpha, beta);
/// C = alpha A + beta B is applied to both VaR and ES. On the second half the Patton
/// losses of A and C go through loss_difference_test; rejection means B only adds
/// noise, i.e. A outperforms B.
inline TestReport encompassing_test(const ForecastPath& a, const ForecastPath& b, std::span<const double> y,
                                    double theta, int n_boot = 10000, std::uint64_t seed = 0) {
  detail::require_same_length(a.size(), y.size(), "encompassing_test");
  detail::require_same_length(b.size(), y.size(), "encompassing_test");
  detail::require_same_length(a.e.size(), y.size(), "encompassing_test");
  detail::require_same_length(b.e.size(), y.size(), "encompassing_test");
  if (y.size() < 20) throw InputError("encompassing_test: need at least 20 observations");
  ProbabilityLevel level(theta);
  TestReport r{"ENC", 0.0, 1.0, n_boot, false, TestStatus::Ok, {}};

  double diff = 0.0, mag = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    diff = std::max({diff, std::abs(a.e[t] - b.e[t]), std::abs(a.q[t] - b.q[t])});
    mag = std::max({mag, std::abs(a.e[t]), std::abs(a.q[t])});
  }
  if (diff <= 1e-12 * std::max(mag, 1.0)) {
    r.status = TestStatus::Degenerate;
    r.diagnostics["collinear"] = 1.0;
    return detail::finalize(r);
  }

  const std::size_t half = y.size() / 2;
  std::vector<double> ea, eb, tgt;
  for (std::size_t t = 0; t < half; ++t) {
    if (y[t] < a.q[t]) {
      ea.push_back(a.e[t]);
      eb.push_back(b.e[t]);
      tgt.push_back(y[t]);
    }
  }
  r.diagnostics["n_fit_points"] = static_cast<double>(tgt.size());
  if (tgt.size() < 2) {
    r.status = TestStatus::Inconclusive;
    return detail::finalize(r);
  }
  const auto w = detail::nnls2(ea, eb, tgt);
  r.diagnostics["alpha"] = w.alpha;
  r.diagnostics["beta"] = w.beta;

  const std::size_t n2 = y.size() - half;
  std::vector<double> ec(n2), qc(n2);
  const auto ys = y.subspan(half);
  for (std::size_t i = 0; i < n2; ++i) {
    const std::size_t t = half + i;
    qc[i] = w.alpha * a.q[t] + w.beta * b.q[t];
    ec[i] = w.alpha * a.e[t] + w.beta * b.e[t];
  }
  bool c_valid = true;
  for (double v : ec) c_valid = c_valid && v < 0.0;
  if (!c_valid) {
    r.status = TestStatus::Inconclusive;
    r.diagnostics["combination_outside_domain"] = 1.0;
    return detail::finalize(r);
  }
  const auto la = patton_loss(std::span<const double>(a.e).subspan(half), std::span<const double>(a.q).subspan(half),
                              ys, theta);
  const auto lc = patton_loss(ec, qc, ys, theta);
  TestReport ld = loss_difference_test(la.per_time, lc.per_time, n_boot, seed);
  r.statistic = ld.statistic;
  r.p_value = ld.p_value;
  r.status = ld.status;
  return detail::finalize(r);
}

inline nlohmann::json to_json(const TestReport& r) {
  nlohmann::json diag = nlohmann::json::object();
  for (const auto& [k, v] : r.diagnostics) diag[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  return {{"name", r.name},
          {"statistic", std::isfinite(r.statistic) ? nlohmann::json(r.statistic) : nlohmann::json(nullptr)},
          {"p_value", r.p_value},
          {"n_boot", r.n_boot},
          {"reject_at_5pct", r.reject_at_5pct},
          {"status", to_string(r.status)},
          {"diagnostics", diag}};
}

}  // namespace tailrisk
