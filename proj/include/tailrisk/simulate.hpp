#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "tailrisk/core.hpp"
#include "tailrisk/error.hpp"

namespace tailrisk {

enum class Innovation { Normal, Student };

/// GARCH(1,1): sigma_t^2 = omega + alpha y_{t-1}^2 + beta sigma_{t-1}^2, y_t = sigma_t eps_t,
/// with eps standardized to unit variance.
struct GarchParams {
  double omega = 5e-6;
  double alpha = 0.08;
  double beta = 0.90;
  Innovation innovation = Innovation::Normal;
  double nu = 5.0;

  void validate() const {
    if (!(omega > 0.0)) throw InputError("GARCH omega must be positive");
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw InputError("GARCH alpha and beta must be nonnegative");
    if (!(alpha + beta < 1.0)) throw InputError("GARCH needs alpha + beta < 1");
    if (innovation == Innovation::Student && !(nu > 2.0)) throw InputError("Student innovations need nu > 2");
  }

  double unconditional_variance() const noexcept { return omega / (1.0 - alpha - beta); }
};

struct GarchPath {
  std::vector<double> y;
  std::vector<double> sigma;
};

inline GarchPath garch_simulate(const GarchParams& p, std::size_t T, std::uint64_t seed) {
  p.validate();
  if (T < 1) throw InputError("garch_simulate: T must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::student_t_distribution<double> student(p.innovation == Innovation::Student ? p.nu : 3.0);
  const double t_scale = p.innovation == Innovation::Student ? std::sqrt((p.nu - 2.0) / p.nu) : 1.0;

  GarchPath out;
  out.y.resize(T);
  out.sigma.resize(T);
  double var = p.unconditional_variance();
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) var = p.omega + p.alpha * out.y[t - 1] * out.y[t - 1] + p.beta * var;
    const double eps = p.innovation == Innovation::Normal ? normal(rng) : student(rng) * t_scale;
    out.sigma[t] = std::sqrt(var);
    out.y[t] = out.sigma[t] * eps;
  }
  return out;
}

struct VarEs {
  double q = 0.0;
  double e = 0.0;
};

inline VarEs true_var_es_normal(double sigma, double theta) {
  if (!(sigma >= 0.0)) throw DomainError("sigma must be nonnegative");
  ProbabilityLevel level(theta);
  const boost::math::normal_distribution<double> n01;
  const double z = boost::math::quantile(n01, theta);
  const double tail_density = boost::math::pdf(n01, boost::math::quantile(n01, 1.0 - theta));
  return {sigma * z, -sigma / theta * tail_density};
}

enum class StudentScale {
  /// Innovation rescaled to unit variance (the convention of garch_simulate).
  UnitVariance,
  /// Plain Student-t with scale 1.
  Raw
};

inline const char* to_string(StudentScale s) { return s == StudentScale::UnitVariance ? "unit_variance" : "raw"; }

/// Closed-form Student-t VaR and ES:
///   e = -sigma * (nu + x^2) / ((nu - 1) theta) * Gamma((nu+1)/2) / (Gamma(nu/2) sqrt(pi nu)) * (1 + x^2/nu)^(-(nu+1)/2)
/// with x the t quantile at theta, times sqrt((nu-2)/nu) on the unit-variance scale.
inline VarEs true_var_es_student(double sigma, double nu, double theta,
                                 StudentScale scale = StudentScale::UnitVariance) {
  if (!(nu > 2.0)) throw DomainError("Student ES needs nu > 2");
  if (!(sigma >= 0.0)) throw DomainError("sigma must be nonnegative");
  ProbabilityLevel level(theta);
  const boost::math::students_t_distribution<double> dist(nu);
  const double x = boost::math::quantile(dist, theta);
  const double log_norm = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) - 0.5 * std::log(M_PI * nu);
  const double density = std::exp(log_norm - (nu + 1.0) / 2.0 * std::log1p(x * x / nu));
  const double es_raw = -(nu + x * x) / ((nu - 1.0) * theta) * density;
  const double c = scale == StudentScale::UnitVariance ? std::sqrt((nu - 2.0) / nu) : 1.0;
  return {sigma * c * x, sigma * c * es_raw};
}

inline VarEs true_var_es(const GarchParams& p, double sigma, double theta) {
  return p.innovation == Innovation::Normal ? true_var_es_normal(sigma, theta)
                                            : true_var_es_student(sigma, p.nu, theta);
}

struct NormalDist {
  double mu = 0.0;
  double sigma = 1.0;
};
struct StudentDist {
  double nu = 5.0;
};

/// VaR / ES at theta for a normal or centred Student-t distribution.
inline double var_es_ratio(const NormalDist& d, double theta) {
  if (!(d.sigma >= 0.0)) throw DomainError("sigma must be nonnegative");
  const auto z = true_var_es_normal(1.0, theta);
  const double es = d.mu + d.sigma * z.e;
  if (es == 0.0) throw DomainError("var_es_ratio: ES is zero");
  return (d.mu + d.sigma * z.q) / es;
}

inline double var_es_ratio(const StudentDist& d, double theta) {
  const auto v = true_var_es_student(1.0, d.nu, theta, StudentScale::Raw);
  if (v.e == 0.0) throw DomainError("var_es_ratio: ES is zero");
  return v.q / v.e;
}

struct DgpSpec {
  std::string id;
  GarchParams params;
  /// Coefficients are representative stand-ins, not estimates from market data.
  bool stand_in = true;
};

/// Six processes: {Normal, Student(nu=5)} x coefficient sets I/II/III with
/// omega = 5e-6 * c, c in {1, 0.8, 1.2}, alpha = 0.08, beta = 0.90.
inline std::vector<DgpSpec> default_dgps() {
  std::vector<DgpSpec> out;
  const std::pair<const char*, double> sets[] = {{"I", 1.0}, {"II", 0.8}, {"III", 1.2}};
  for (Innovation inn : {Innovation::Normal, Innovation::Student}) {
    for (const auto& [name, c] : sets) {
      GarchParams p{5e-6 * c, 0.08, 0.90, inn, 5.0};
      out.push_back({std::string(inn == Innovation::Normal ? "N-" : "t-") + name, p, true});
    }
  }
  return out;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0x632BE59BD9B4E019ull));
}

struct TruthAtLevel {
  double theta = 0.05;
  std::vector<double> q;
  std::vector<double> e;
};

struct SimulatedSeries {
  std::string dgp_id;
  std::size_t dgp_index = 0;
  std::size_t series_index = 0;
  std::uint64_t seed = 0;
  std::vector<double> y;
  std::vector<double> sigma;
  std::vector<TruthAtLevel> truth;
};

struct DatasetBundle {
  std::vector<DgpSpec> dgps;
  std::vector<SimulatedSeries> series;
  std::vector<double> thetas;
  std::size_t length = 0;
  std::size_t split = 0;
  std::uint64_t seed = 0;
};

inline DatasetBundle run_dgp_suite(const std::vector<DgpSpec>& dgps, const std::vector<double>& thetas,
                                   std::size_t n_series = 20, std::size_t T = 1750, std::size_t split = 1500,
                                   std::uint64_t seed = 2024, bool parallel = true) {
  if (split >= T) throw InputError("run_dgp_suite: split must be below T");
  for (const auto& d : dgps) d.params.validate();
  for (double th : thetas) ProbabilityLevel{th};
  DatasetBundle b{dgps, {}, thetas, T, split, seed};
  b.series.resize(dgps.size() * n_series);
  parallel_for(
      b.series.size(),
      [&](std::size_t k) {
        const std::size_t d = k / n_series;
        const std::size_t s = k % n_series;
        SimulatedSeries& out = b.series[k];
        out.dgp_id = dgps[d].id;
        out.dgp_index = d;
        out.series_index = s;
        out.seed = mix_seed(seed, d, s);
        auto path = garch_simulate(dgps[d].params, T, out.seed);
        out.y = std::move(path.y);
        out.sigma = std::move(path.sigma);
        for (double th : thetas) {
          TruthAtLevel tr{th, std::vector<double>(T), std::vector<double>(T)};
          const auto unit = true_var_es(dgps[d].params, 1.0, th);
          for (std::size_t t = 0; t < T; ++t) {
            tr.q[t] = out.sigma[t] * unit.q;
            tr.e[t] = out.sigma[t] * unit.e;
          }
          out.truth.push_back(std::move(tr));
        }
      },
      parallel);
  return b;
}

inline nlohmann::json manifest_json(const DatasetBundle& b) {
  nlohmann::json dg = nlohmann::json::array();
  for (const auto& d : b.dgps) {
    dg.push_back({{"id", d.id},
                  {"omega", d.params.omega},
                  {"alpha", d.params.alpha},
                  {"beta", d.params.beta},
                  {"innovation", d.params.innovation == Innovation::Normal ? "normal" : "student"},
                  {"nu", d.params.innovation == Innovation::Student ? nlohmann::json(d.params.nu) : nlohmann::json()},
                  {"stand_in_coefficients", d.stand_in}});
  }
  nlohmann::json files = nlohmann::json::array();
  for (const auto& s : b.series) {
    files.push_back({{"dgp", s.dgp_id},
                     {"series", s.series_index},
                     {"seed", s.seed},
                     {"file", s.dgp_id + "_" + std::to_string(s.series_index) + ".csv"}});
  }
  return {{"dgps", dg},
          {"thetas", b.thetas},
          {"length", b.length},
          {"split", {{"train", b.split}, {"test", b.length - b.split}}},
          {"master_seed", b.seed},
          {"variance_recursion", "sigma_t^2 = omega + alpha*y_{t-1}^2 + beta*sigma_{t-1}^2 (standard GARCH(1,1) form)"},
          {"student_scale", to_string(StudentScale::UnitVariance)},
          {"series", files}};
}

/// One CSV per series (t, y, sigma, q_true@theta..., e_true@theta...) plus manifest.json.
inline void write_bundle(const DatasetBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : b.series) {
    std::ofstream out(dir / (s.dgp_id + "_" + std::to_string(s.series_index) + ".csv"));
    out << "t,y,sigma";
    for (const auto& tr : s.truth) out << ",q_true@" << tr.theta;
    for (const auto& tr : s.truth) out << ",e_true@" << tr.theta;
    out << '\n' << std::setprecision(17);
    for (std::size_t t = 0; t < s.y.size(); ++t) {
      out << t << ',' << s.y[t] << ',' << s.sigma[t];
      for (const auto& tr : s.truth) out << ',' << tr.q[t];
      for (const auto& tr : s.truth) out << ',' << tr.e[t];
      out << '\n';
    }
  }
  std::ofstream(dir / "manifest.json") << manifest_json(b).dump(2) << '\n';
}

}  // namespace tailrisk
