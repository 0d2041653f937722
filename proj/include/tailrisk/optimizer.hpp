#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tailrisk/core.hpp"
#include "tailrisk/error.hpp"

namespace tailrisk {

/// Total objective: returns +inf on infeasible points, never throws.
using Objective = std::function<double(std::span<const double>)>;

inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();

struct LocalResult {
  std::vector<double> x;
  double f = kInfeasible;
  int iterations = 0;
  int evaluations = 0;
};

struct MultistartConfig {
  int n_starts = 100;
  int n_keep = 3;
  int n_chained = 6;
  std::uint64_t seed = 42;
  int max_iter = 400;
  double tol = 1e-8;
  double bound = 50.0;
  double uniform_share = 0.5;
  bool parallel = true;

  static MultistartConfig from(const EstimationConfig& c, std::uint64_t seed_offset = 0) {
    return {c.n_starts, c.n_keep, c.n_chained, c.seed + seed_offset, c.max_iter, c.tol, c.bound, c.uniform_share,
            c.parallel};
  }
};

struct CandidateTrace {
  std::vector<double> start;
  double start_f = kInfeasible;
  bool hint = false;
  bool kept = false;
  /// Objective after each chained local run (empty unless kept).
  std::vector<double> chain_f;
  double end_f = kInfeasible;
};

struct MultistartResult {
  std::vector<double> x;
  double f = kInfeasible;
  std::vector<CandidateTrace> audit;
};

namespace detail {

inline double boxed(const Objective& obj, std::span<const double> x, double bound) {
  for (double v : x) {
    if (!std::isfinite(v) || std::abs(v) > bound) return kInfeasible;
  }
  const double f = obj(x);
  return std::isnan(f) ? kInfeasible : f;
}

}  // namespace detail

/// Nelder-Mead simplex descent. Stops when the objective spread across the simplex
/// falls to tol (absolute) or after max_iter iterations. Deterministic; f <= f(x0).
inline LocalResult local_minimize(const Objective& objective, std::span<const double> x0, int max_iter, double tol,
                                  double bound = std::numeric_limits<double>::infinity()) {
  const std::size_t n = x0.size();
  if (n == 0) throw InputError("local_minimize: empty start vector");
  for (double v : x0) {
    if (!std::isfinite(v)) throw InputError("local_minimize: non-finite start");
  }
  LocalResult out;
  auto eval = [&](std::span<const double> x) {
    ++out.evaluations;
    return detail::boxed(objective, x, bound);
  };

  const double f0 = eval(x0);
  if (!std::isfinite(f0)) throw EstimationFailure("local_minimize", "objective is infeasible at the start point");

  std::vector<std::vector<double>> simplex(n + 1, std::vector<double>(x0.begin(), x0.end()));
  std::vector<double> fv(n + 1, f0);
  for (std::size_t i = 0; i < n; ++i) {
    double step = std::max(0.1 * std::abs(x0[i]), 0.025);
    double f = kInfeasible;
    // Shrink or flip the edge until the vertex is feasible.
    for (int attempt = 0; attempt < 20 && !std::isfinite(f); ++attempt) {
      simplex[i + 1][i] = x0[i] + step;
      f = eval(simplex[i + 1]);
      step = attempt % 2 == 0 ? -step : -0.5 * step;
    }
    if (!std::isfinite(f)) simplex[i + 1][i] = x0[i];
    fv[i + 1] = std::isfinite(f) ? f : f0;
  }

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;

  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];
    if (std::isfinite(fv[worst]) && fv[worst] - fv[best] <= tol) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& v = simplex[order[k]];
      for (std::size_t i = 0; i < n; ++i) centroid[i] += v[i];
    }
    for (double& c : centroid) c /= static_cast<double>(n);

    const auto& xw = simplex[worst];
    for (std::size_t i = 0; i < n; ++i) xr[i] = centroid[i] + kReflect * (centroid[i] - xw[i]);
    const double fr = eval(xr);

    if (fr < fv[best]) {
      for (std::size_t i = 0; i < n; ++i) xe[i] = centroid[i] + kExpand * (xr[i] - centroid[i]);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    for (std::size_t i = 0; i < n; ++i) {
      xc[i] = outside ? centroid[i] + kContract * (xr[i] - centroid[i])
                      : centroid[i] + kContract * (xw[i] - centroid[i]);
    }
    const double fc = eval(xc);
    if (fc < (outside ? fr : fv[worst])) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    const auto xb = simplex[best];
    for (std::size_t k = 0; k <= n; ++k) {
      if (k == best) continue;
      for (std::size_t i = 0; i < n; ++i) simplex[k][i] = xb[i] + kShrink * (simplex[k][i] - xb[i]);
      fv[k] = eval(simplex[k]);
    }
  }

  std::size_t best = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    if (fv[k] < fv[best]) best = k;
  }
  out.x = simplex[best];
  out.f = fv[best];
  if (!(out.f <= f0)) {
    out.x.assign(x0.begin(), x0.end());
    out.f = f0;
  }
  return out;
}

/// Runs n_chained local searches, each started from the previous output.
/// Returns the terminal point and the objective after every run.
inline LocalResult chain_minimize(const Objective& objective, std::span<const double> x0, int n_chained, int max_iter,
                                  double tol, double bound, std::vector<double>* chain_f = nullptr) {
  LocalResult cur;
  cur.x.assign(x0.begin(), x0.end());
  for (int k = 0; k < n_chained; ++k) {
    LocalResult next = local_minimize(objective, cur.x, max_iter, tol, bound);
    next.iterations += cur.iterations;
    next.evaluations += cur.evaluations;
    cur = std::move(next);
    if (chain_f) chain_f->push_back(cur.f);
  }
  return cur;
}

/// Multistart-and-chain: draw n_starts random candidates (a uniform_share of them in
/// [-1,1]^dim, the rest standard normal), append any hints, rank by objective, and
/// chain-minimize the n_keep best. The best terminal point wins; ties go to the
/// lower-ranked candidate.
inline MultistartResult multistart_minimize(const Objective& objective, std::size_t dim, const MultistartConfig& cfg,
                                            std::span<const std::vector<double>> hints = {}) {
  if (dim < 1) throw InputError("multistart_minimize: dim must be >= 1");
  if (cfg.n_starts < 1 || cfg.n_keep < 1 || cfg.n_chained < 1) throw InputError("multistart_minimize: bad counts");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  const auto n_uniform = static_cast<int>(std::lround(cfg.uniform_share * cfg.n_starts));

  MultistartResult res;
  res.audit.resize(static_cast<std::size_t>(cfg.n_starts) + hints.size());
  for (int c = 0; c < cfg.n_starts; ++c) {
    auto& start = res.audit[static_cast<std::size_t>(c)].start;
    start.resize(dim);
    for (double& v : start) v = c < n_uniform ? unif(rng) : norm(rng);
  }
  for (std::size_t h = 0; h < hints.size(); ++h) {
    if (hints[h].size() != dim) throw InputError("multistart_minimize: hint has wrong dimension");
    auto& tr = res.audit[static_cast<std::size_t>(cfg.n_starts) + h];
    tr.start = hints[h];
    tr.hint = true;
  }

  parallel_for(
      res.audit.size(), [&](std::size_t i) { res.audit[i].start_f = detail::boxed(objective, res.audit[i].start, cfg.bound); },
      cfg.parallel);

  std::vector<std::size_t> ranked;
  for (std::size_t i = 0; i < res.audit.size(); ++i) {
    if (std::isfinite(res.audit[i].start_f)) ranked.push_back(i);
  }
  if (ranked.empty()) {
    throw EstimationFailure("multistart", "all " + std::to_string(res.audit.size()) + " candidates are infeasible");
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](std::size_t a, std::size_t b) { return res.audit[a].start_f < res.audit[b].start_f; });
  ranked.resize(std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(cfg.n_keep)));

  std::vector<LocalResult> chains(ranked.size());
  parallel_for(
      ranked.size(),
      [&](std::size_t k) {
        auto& tr = res.audit[ranked[k]];
        chains[k] = chain_minimize(objective, tr.start, cfg.n_chained, cfg.max_iter, cfg.tol, cfg.bound, &tr.chain_f);
        tr.kept = true;
        tr.end_f = chains[k].f;
      },
      cfg.parallel);

  std::size_t win = 0;
  for (std::size_t k = 1; k < chains.size(); ++k) {
    if (chains[k].f < chains[win].f) win = k;
  }
  res.x = std::move(chains[win].x);
  res.f = chains[win].f;
  return res;
}

/// Single-start variant of the scheme: chain-minimize from x0 and report an audit
/// with one entry.
inline MultistartResult single_start_minimize(const Objective& objective, std::span<const double> x0,
                                              const MultistartConfig& cfg) {
  MultistartResult res;
  CandidateTrace tr;
  tr.start.assign(x0.begin(), x0.end());
  tr.start_f = detail::boxed(objective, x0, cfg.bound);
  tr.hint = true;
  tr.kept = true;
  LocalResult r = chain_minimize(objective, x0, cfg.n_chained, cfg.max_iter, cfg.tol, cfg.bound, &tr.chain_f);
  tr.end_f = r.f;
  res.audit.push_back(std::move(tr));
  res.x = std::move(r.x);
  res.f = r.f;
  return res;
}

}  // namespace tailrisk
