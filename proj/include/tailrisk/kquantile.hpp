#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailrisk/caesar.hpp"
#include "tailrisk/caviar.hpp"
#include "tailrisk/core.hpp"
#include "tailrisk/error.hpp"

namespace tailrisk {

/// ES as the average of CAViaR quantile paths on the equispaced tail grid
/// theta_j = j * theta / n, j = 1..n. VaR is the theta_n = theta path.
struct KCaviarModel {
  double theta = 0.05;
  std::vector<double> levels;
  std::vector<CaviarModel> sub;
};

inline std::vector<double> tail_partition(double theta, int n) {
  if (n < 1) throw InputError("tail partition needs n >= 1");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) out[static_cast<std::size_t>(j - 1)] = theta * j / n;
  return out;
}

/// Independent sub-fits, seeded seed + j so serial and parallel runs agree.
inline KCaviarModel kcaviar_fit(std::span<const double> y, double theta, int n, const CaviarSpec& spec,
                                const EstimationConfig& config) {
  ProbabilityLevel level(theta);
  KCaviarModel m;
  m.theta = theta;
  m.levels = tail_partition(theta, n);
  m.sub.resize(m.levels.size());
  EstimationConfig inner = config;
  inner.parallel = false;
  std::vector<std::string> errors(m.levels.size());
  parallel_for(
      m.levels.size(),
      [&](std::size_t j) {
        EstimationConfig c = inner;
        c.seed = config.seed + j + 1;
        try {
          m.sub[j] = caviar_fit(y, m.levels[j], spec, c);
        } catch (const std::exception& ex) {
          errors[j] = ex.what();
        }
      },
      config.parallel);
  for (std::size_t j = 0; j < errors.size(); ++j) {
    if (!errors[j].empty()) {
      throw EstimationFailure("kcaviar theta_j=" + std::to_string(m.levels[j]), errors[j]);
    }
  }
  return m;
}

/// Filters every sub-model over y and averages the quantile paths.
inline JointPath kcaviar_estimate(const KCaviarModel& m, std::span<const double> y) {
  if (m.sub.empty()) throw InputError("kcaviar_estimate: model has no sub-fits");
  JointPath out;
  out.e.assign(y.size(), 0.0);
  double next_e = 0.0;
  for (std::size_t j = 0; j < m.sub.size(); ++j) {
    auto path = m.sub[j].filter(y);
    for (std::size_t t = 0; t < y.size(); ++t) out.e[t] += path.q[t];
    next_e += path.next;
    if (j + 1 == m.sub.size()) {
      out.q = std::move(path.q);
      out.next_q = path.next;
    }
  }
  const auto n = static_cast<double>(m.sub.size());
  for (double& v : out.e) v /= n;
  out.next_e = next_e / n;
  for (std::size_t t = 1; t < y.size(); ++t) out.monotonicity_violations += out.e[t] < out.q[t] ? 0 : 1;
  out.monotonicity_violations += out.next_e < out.next_q ? 0 : 1;
  return out;
}

inline nlohmann::json to_json(const KCaviarModel& m) {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& s : m.sub) subs.push_back(to_json(s));
  return {{"model", "KCAVIAR"}, {"theta", m.theta}, {"levels", m.levels}, {"sub_models", subs}};
}

inline KCaviarModel kcaviar_model_from_json(const nlohmann::json& j) {
  KCaviarModel m;
  m.theta = j.at("theta").get<double>();
  m.levels = j.at("levels").get<std::vector<double>>();
  for (const auto& s : j.at("sub_models")) m.sub.push_back(caviar_model_from_json(s));
  if (m.sub.empty() || m.sub.size() != m.levels.size()) throw InputError("kcaviar model: levels and sub-models differ");
  return m;
}

}  // namespace tailrisk
