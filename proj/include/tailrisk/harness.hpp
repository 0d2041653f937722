#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tailrisk/backtest.hpp"
#include "tailrisk/caesar.hpp"
#include "tailrisk/caviar.hpp"
#include "tailrisk/config_json.hpp"
#include "tailrisk/core.hpp"
#include "tailrisk/error.hpp"
#include "tailrisk/gas.hpp"
#include "tailrisk/kquantile.hpp"
#include "tailrisk/losses.hpp"
#include "tailrisk/simulate.hpp"

namespace tailrisk {

enum class ModelKind { CAESAR, CAVIAR, KCAVIAR, GAS1, GAS2 };

inline const char* to_string(ModelKind m) {
  switch (m) {
    case ModelKind::CAESAR: return "CAESAR";
    case ModelKind::CAVIAR: return "CAVIAR";
    case ModelKind::KCAVIAR: return "KCAVIAR";
    case ModelKind::GAS1: return "GAS1";
    case ModelKind::GAS2: return "GAS2";
  }
  return "CAESAR";
}

inline ModelKind model_kind_from_string(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (s == "CAESAR") return ModelKind::CAESAR;
  if (s == "CAVIAR") return ModelKind::CAVIAR;
  if (s == "KCAVIAR" || s == "K-CAVIAR") return ModelKind::KCAVIAR;
  if (s == "GAS1") return ModelKind::GAS1;
  if (s == "GAS2") return ModelKind::GAS2;
  throw InputError("unknown model: " + s);
}

inline std::vector<ModelKind> all_models() {
  return {ModelKind::CAESAR, ModelKind::CAVIAR, ModelKind::KCAVIAR, ModelKind::GAS1, ModelKind::GAS2};
}

struct ExperimentConfig {
  std::vector<ModelKind> models = all_models();
  std::vector<double> thetas{0.05, 0.025, 0.01};
  CaviarSpec spec;
  EstimationConfig estimation;
  /// Tail partition size for K-CAViaR.
  int k_levels = 10;
  double instability_ratio = 10.0;
  std::size_t window = 1764;
  std::size_t train_len = 1512;
  std::size_t stride = 252;
  int n_boot = 10000;
  /// Run work items concurrently; fits inside a work item are always serial.
  bool parallel = true;

  void validate() const {
    if (models.empty()) throw InputError("experiment needs at least one model");
    if (thetas.empty()) throw InputError("experiment needs at least one theta");
    for (double t : thetas) ProbabilityLevel{t};
    spec.validate();
    estimation.validate();
    if (k_levels < 1) throw InputError("k_levels must be >= 1");
    if (!(instability_ratio > 0.0)) throw InputError("instability_ratio must be positive");
    if (n_boot < 1) throw InputError("n_boot must be >= 1");
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  std::vector<std::string> models;
  for (auto m : c.models) models.emplace_back(to_string(m));
  return {{"models", models},
          {"thetas", c.thetas},
          {"spec", to_json(c.spec)},
          {"estimation", to_json(c.estimation)},
          {"k_levels", c.k_levels},
          {"instability_ratio", c.instability_ratio},
          {"folds", {{"window", c.window}, {"train_len", c.train_len}, {"stride", c.stride}}},
          {"n_boot", c.n_boot}};
}

/// Reads an experiment config; missing keys keep their defaults. The estimation block
/// may be given under "estimation" or inline at top level.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("models")) {
    c.models.clear();
    for (const auto& m : j.at("models")) c.models.push_back(model_kind_from_string(m.get<std::string>()));
  }
  if (j.contains("thetas")) c.thetas = j.at("thetas").get<std::vector<double>>();
  if (j.contains("spec")) c.spec = spec_from_json(j.at("spec"));
  c.estimation = estimation_config_from_json(j.contains("estimation") ? j.at("estimation") : j);
  c.k_levels = j.value("k_levels", c.k_levels);
  c.instability_ratio = j.value("instability_ratio", c.instability_ratio);
  if (j.contains("folds")) {
    const auto& f = j.at("folds");
    c.window = f.value("window", c.window);
    c.train_len = f.value("train_len", c.train_len);
    c.stride = f.value("stride", c.stride);
  }
  c.n_boot = j.value("n_boot", c.n_boot);
  c.parallel = j.value("parallel", c.parallel);
  c.validate();
  return c;
}

/// Out-of-sample forecasts from one model fitted on the leading train_len points of a window.
struct ModelForecast {
  ModelKind model = ModelKind::CAESAR;
  ForecastPath test;
  /// CAESAR only: the step-1 CAViaR quantile on the test range.
  std::vector<double> step1_q;
  bool unstable = false;
  nlohmann::json model_json;
};

namespace detail {

inline std::vector<double> tail_of(const std::vector<double>& v, std::size_t from) {
  return {v.begin() + static_cast<std::ptrdiff_t>(from), v.end()};
}

}  // namespace detail

/// Fits `kind` on window[0, train_len) and filters the whole window; the returned
/// paths cover window[train_len, end). Parameters see only the train slice.
inline ModelForecast fit_and_forecast(ModelKind kind, std::span<const double> window, std::size_t train_len,
                                      double theta, const ExperimentConfig& cfg, std::uint64_t seed) {
  if (train_len < 1 || train_len >= window.size()) throw InputError("fit_and_forecast: bad train length");
  const auto train = window.first(train_len);
  EstimationConfig est = cfg.estimation;
  est.seed = seed;
  est.parallel = false;

  ModelForecast out;
  out.model = kind;
  out.test.theta = theta;
  switch (kind) {
    case ModelKind::CAESAR: {
      const auto m = caesar_fit(train, theta, cfg.spec, est);
      const auto path = m.filter(window);
      out.test.q = detail::tail_of(path.q, train_len);
      out.test.e = detail::tail_of(path.e, train_len);
      const auto step1 = caviar_filter(m.caviar_params, m.spec, window, m.q0);
      out.step1_q = detail::tail_of(step1.q, train_len);
      out.model_json = to_json(m);
      break;
    }
    case ModelKind::CAVIAR: {
      // VaR-only baseline: no ES recursion, so the VaR path fills the ES slot.
      const auto m = caviar_fit(train, theta, cfg.spec, est);
      const auto path = m.filter(window);
      out.test.q = detail::tail_of(path.q, train_len);
      out.test.e = out.test.q;
      out.model_json = to_json(m);
      out.model_json["es_proxy"] = "var";
      break;
    }
    case ModelKind::KCAVIAR: {
      const auto m = kcaviar_fit(train, theta, cfg.k_levels, cfg.spec, est);
      const auto path = kcaviar_estimate(m, window);
      out.test.q = detail::tail_of(path.q, train_len);
      out.test.e = detail::tail_of(path.e, train_len);
      out.model_json = to_json(m);
      break;
    }
    case ModelKind::GAS1:
    case ModelKind::GAS2: {
      const auto m = gas_fit(train, theta, kind == ModelKind::GAS1 ? GasVariant::One : GasVariant::Two, est,
                             cfg.instability_ratio);
      const auto path = m.filter(window);
      out.test.q = detail::tail_of(path.q, train_len);
      out.test.e = detail::tail_of(path.e, train_len);
      out.unstable = m.unstable;
      out.model_json = to_json(m);
      break;
    }
  }
  return out;
}

struct ErrorSummary {
  double mae = 0.0;
  double rmse = 0.0;
};

inline ErrorSummary mae_rmse(std::span<const double> pred, std::span<const double> truth) {
  detail::require_same_length(pred.size(), truth.size(), "mae_rmse");
  if (pred.empty()) throw InputError("mae_rmse: empty input");
  double a = 0.0, s = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const double d = pred[t] - truth[t];
    a += std::abs(d);
    s += d * d;
  }
  const double n = static_cast<double>(pred.size());
  return {a / n, std::sqrt(s / n)};
}

enum class CellStatus { Ok, Unstable, Failed };

inline const char* to_string(CellStatus s) {
  switch (s) {
    case CellStatus::Ok: return "ok";
    case CellStatus::Unstable: return "unstable";
    case CellStatus::Failed: return "failed";
  }
  return "ok";
}

struct EvaluationRow {
  ModelKind model = ModelKind::CAESAR;
  std::string id;
  std::size_t index = 0;
  double theta = 0.05;
  double mae = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double l_b = std::numeric_limits<double>::quiet_NaN();
  double l_p = std::numeric_limits<double>::quiet_NaN();
  double pinball = std::numeric_limits<double>::quiet_NaN();
  /// CAESAR only: pinball of the step-1 CAViaR quantile on the same range.
  double pinball_step1 = std::numeric_limits<double>::quiet_NaN();
  double violation_rate = std::numeric_limits<double>::quiet_NaN();
  double monotonicity_violation_rate = std::numeric_limits<double>::quiet_NaN();
  CellStatus status = CellStatus::Ok;
  std::string message;
  std::string model_hash;
  std::string config_hash;
  std::uint64_t seed = 0;
};

namespace detail {

/// Loss metrics of a test-range forecast. L_P is NaN (with a message) when an ES
/// forecast leaves the negative half-line.
inline void fill_metrics(EvaluationRow& row, const ForecastPath& f, std::span<const double> y) {
  std::vector<double> r(f.size());
  for (std::size_t t = 0; t < r.size(); ++t) r[t] = f.e[t] - f.q[t];
  row.pinball = pinball_loss(f.q, y, row.theta).value;
  row.l_b = barrera_loss(r, y, f.q, row.theta).value;
  bool negative = true;
  for (double v : f.e) negative = negative && v < 0.0;
  if (negative) {
    row.l_p = patton_loss(f.e, f.q, y, row.theta).value;
  } else {
    row.message = "ES forecast not negative; Patton loss undefined";
  }
  const double n = static_cast<double>(y.size());
  row.violation_rate = static_cast<double>(violation_set(y, f.q).size()) / n;
  row.monotonicity_violation_rate = static_cast<double>(f.crossings()) / n;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace detail

inline nlohmann::json to_json(const EvaluationRow& r) {
  return {{"model", to_string(r.model)},
          {"id", r.id},
          {"index", r.index},
          {"theta", r.theta},
          {"mae", detail::num(r.mae)},
          {"rmse", detail::num(r.rmse)},
          {"l_b", detail::num(r.l_b)},
          {"l_p", detail::num(r.l_p)},
          {"pinball", detail::num(r.pinball)},
          {"pinball_step1", detail::num(r.pinball_step1)},
          {"violation_rate", detail::num(r.violation_rate)},
          {"monotonicity_violation_rate", detail::num(r.monotonicity_violation_rate)},
          {"status", to_string(r.status)},
          {"message", r.message},
          {"provenance", {{"model_hash", r.model_hash}, {"config_hash", r.config_hash}, {"seed", r.seed}}}};
}

// ---------------------------------------------------------------------------
// Simulation study

struct SimulationCell {
  std::string dgp;
  ModelKind model = ModelKind::CAESAR;
  double theta = 0.05;
  double mae = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double l_b = std::numeric_limits<double>::quiet_NaN();
  double l_p = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_used = 0;
  std::size_t n_unstable = 0;
  std::size_t n_failed = 0;
};

struct SimulationReport {
  std::vector<EvaluationRow> rows;
  std::vector<SimulationCell> table;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t failures = 0;
};

/// Fits every model on the train part of each simulated series and scores the ES
/// forecasts on the test part against the closed-form truth. Unstable GAS fits are
/// excluded from the averages and counted.
inline SimulationReport run_simulation_study(const DatasetBundle& bundle, const ExperimentConfig& cfg) {
  cfg.validate();
  SimulationReport rep;
  rep.config_hash = json_hash(to_json(cfg));
  rep.seed = cfg.estimation.seed;

  std::vector<std::size_t> theta_idx;
  for (double th : cfg.thetas) {
    const auto it = std::find_if(bundle.thetas.begin(), bundle.thetas.end(),
                                 [&](double b) { return std::abs(b - th) < 1e-12; });
    if (it == bundle.thetas.end()) throw InputError("simulation bundle lacks ground truth at theta " + detail::fmt(th));
    theta_idx.push_back(static_cast<std::size_t>(it - bundle.thetas.begin()));
  }

  const std::size_t nt = cfg.thetas.size();
  const std::size_t nm = cfg.models.size();
  rep.rows.resize(bundle.series.size() * nt * nm);
  parallel_for(
      rep.rows.size(),
      [&](std::size_t k) {
        const std::size_t si = k / (nt * nm);
        const std::size_t ti = (k / nm) % nt;
        const std::size_t mi = k % nm;
        const auto& s = bundle.series[si];
        EvaluationRow& row = rep.rows[k];
        row.model = cfg.models[mi];
        row.id = s.dgp_id;
        row.index = s.series_index;
        row.theta = cfg.thetas[ti];
        row.config_hash = rep.config_hash;
        row.seed = mix_seed(cfg.estimation.seed, si, ti);
        try {
          const auto f = fit_and_forecast(row.model, s.y, bundle.split, row.theta, cfg, row.seed);
          const auto y_test = std::span<const double>(s.y).subspan(bundle.split);
          const auto& tr = s.truth[theta_idx[ti]];
          const auto truth_e = std::span<const double>(tr.e).subspan(bundle.split);
          const auto err = mae_rmse(f.test.e, truth_e);
          row.mae = err.mae;
          row.rmse = err.rmse;
          detail::fill_metrics(row, f.test, y_test);
          if (!f.step1_q.empty()) row.pinball_step1 = pinball_loss(f.step1_q, y_test, row.theta).value;
          row.model_hash = json_hash(f.model_json);
          if (f.unstable) row.status = CellStatus::Unstable;
        } catch (const std::exception& ex) {
          row.status = CellStatus::Failed;
          row.message = ex.what();
        }
      },
      cfg.parallel);

  for (std::size_t d = 0; d < bundle.dgps.size(); ++d) {
    for (ModelKind m : cfg.models) {
      for (double th : cfg.thetas) {
        SimulationCell cell{bundle.dgps[d].id, m, th};
        std::vector<double> mae, rmse, lb, lp;
        for (const auto& r : rep.rows) {
          if (r.id != cell.dgp || r.model != m || r.theta != th) continue;
          if (r.status == CellStatus::Failed) {
            ++cell.n_failed;
            continue;
          }
          if (r.status == CellStatus::Unstable) {
            ++cell.n_unstable;
            continue;
          }
          ++cell.n_used;
          mae.push_back(r.mae);
          rmse.push_back(r.rmse);
          lb.push_back(r.l_b);
          if (std::isfinite(r.l_p)) lp.push_back(r.l_p);
        }
        cell.mae = detail::mean_of(mae);
        cell.rmse = detail::mean_of(rmse);
        cell.l_b = detail::mean_of(lb);
        cell.l_p = detail::mean_of(lp);
        rep.failures += cell.n_failed;
        rep.table.push_back(cell);
      }
    }
  }
  return rep;
}

inline nlohmann::json to_json(const SimulationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& x : r.rows) rows.push_back(to_json(x));
  nlohmann::json table = nlohmann::json::array();
  for (const auto& c : r.table) {
    table.push_back({{"dgp", c.dgp},
                     {"model", to_string(c.model)},
                     {"theta", c.theta},
                     {"mae", detail::num(c.mae)},
                     {"rmse", detail::num(c.rmse)},
                     {"l_b", detail::num(c.l_b)},
                     {"l_p", detail::num(c.l_p)},
                     {"n_used", c.n_used},
                     {"n_unstable_excluded", c.n_unstable},
                     {"n_failed", c.n_failed}});
  }
  return {{"config_hash", r.config_hash}, {"seed", r.seed}, {"failures", r.failures}, {"table", table}, {"rows", rows}};
}

// ---------------------------------------------------------------------------
// Empirical evaluation

struct NamedSeries {
  std::string id;
  ReturnSeries series;
};

struct TestRow {
  std::string asset;
  std::size_t fold = 0;
  double theta = 0.05;
  /// Model under test, or "CAESAR_vs_<competitor>" for comparison tests.
  std::string subject;
  TestReport report;
};

struct AggregateRow {
  std::string asset;
  ModelKind model = ModelKind::CAESAR;
  double theta = 0.05;
  std::string metric;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_folds = 0;
  /// Mean lies outside CAESAR's mean +/- one across-fold sd.
  bool outside_caesar_band = false;
};

struct PinballDifference {
  std::string asset;
  std::size_t fold = 0;
  double theta = 0.05;
  ModelKind competitor = ModelKind::CAVIAR;
  double difference = 0.0;
};

struct RejectionRatio {
  ModelKind model = ModelKind::CAESAR;
  double theta = 0.05;
  std::string test;
  std::size_t rejections = 0;
  std::size_t valid = 0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
};

struct DmCount {
  ModelKind competitor = ModelKind::CAVIAR;
  double theta = 0.05;
  /// CAESAR significantly better / worse.
  std::size_t good = 0;
  std::size_t bad = 0;
  std::size_t total = 0;
};

struct EmpiricalReport {
  std::vector<EvaluationRow> rows;
  std::vector<TestRow> tests;
  std::vector<AggregateRow> aggregate;
  std::vector<PinballDifference> pinball_differences;
  std::vector<RejectionRatio> rejection_ratios;
  std::vector<DmCount> dm_counts;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t failures = 0;
};

namespace detail {

struct FoldCell {
  EvaluationRow row;
  ForecastPath forecast;
  std::vector<double> y_test;
  bool ok = false;
};

inline std::string pair_name(ModelKind a, ModelKind b) { return std::string(to_string(a)) + "_vs_" + to_string(b); }

}  // namespace detail

/// Block-fold out-of-sample evaluation. Every (asset, fold, theta, model) cell is
/// fitted independently; direct backtests run per cell and comparison tests pit
/// CAESAR against each competitor on the same fold.
inline EmpiricalReport run_empirical_evaluation(const std::vector<NamedSeries>& data, const ExperimentConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw InputError("evaluation needs at least one series");
  EmpiricalReport rep;
  rep.config_hash = json_hash(to_json(cfg));
  rep.seed = cfg.estimation.seed;

  struct Unit {
    std::size_t asset, fold, theta, model;
    IndexRange train, test;
  };
  std::vector<FoldPlan> plans;
  std::vector<Unit> units;
  for (std::size_t a = 0; a < data.size(); ++a) {
    plans.push_back(make_block_folds(data[a].series.size(), cfg.window, cfg.train_len, cfg.stride));
    for (std::size_t f = 0; f < plans[a].folds.size(); ++f) {
      for (std::size_t t = 0; t < cfg.thetas.size(); ++t) {
        for (std::size_t m = 0; m < cfg.models.size(); ++m) {
          units.push_back({a, f, t, m, plans[a].folds[f].train, plans[a].folds[f].test});
        }
      }
    }
  }

  std::vector<detail::FoldCell> cells(units.size());
  parallel_for(
      units.size(),
      [&](std::size_t k) {
        const Unit& u = units[k];
        auto& c = cells[k];
        c.row.model = cfg.models[u.model];
        c.row.id = data[u.asset].id;
        c.row.index = u.fold;
        c.row.theta = cfg.thetas[u.theta];
        c.row.config_hash = rep.config_hash;
        c.row.seed = mix_seed(cfg.estimation.seed, u.asset * 100003 + u.fold, u.theta);
        try {
          const auto window = data[u.asset].series.slice(u.train.begin, u.test.end);
          auto f = fit_and_forecast(c.row.model, window, u.train.size(), c.row.theta, cfg, c.row.seed);
          const auto y_test = data[u.asset].series.slice(u.test.begin, u.test.end);
          c.y_test.assign(y_test.begin(), y_test.end());
          detail::fill_metrics(c.row, f.test, y_test);
          c.row.model_hash = json_hash(f.model_json);
          if (f.unstable) c.row.status = CellStatus::Unstable;
          c.forecast = std::move(f.test);
          c.ok = true;
        } catch (const std::exception& ex) {
          c.row.status = CellStatus::Failed;
          c.row.message = ex.what();
        }
      },
      cfg.parallel);

  for (const auto& c : cells) {
    rep.rows.push_back(c.row);
    if (c.row.status == CellStatus::Failed) ++rep.failures;
  }

  auto cell_at = [&](std::size_t a, std::size_t f, std::size_t t, std::size_t m) -> const detail::FoldCell& {
    std::size_t base = 0;
    for (std::size_t i = 0; i < a; ++i) base += plans[i].folds.size() * cfg.thetas.size() * cfg.models.size();
    return cells[base + (f * cfg.thetas.size() + t) * cfg.models.size() + m];
  };
  const auto caesar_it = std::find(cfg.models.begin(), cfg.models.end(), ModelKind::CAESAR);
  const bool have_caesar = caesar_it != cfg.models.end();
  const std::size_t ci = static_cast<std::size_t>(caesar_it - cfg.models.begin());

  // Test jobs in a fixed order, then run concurrently.
  struct TestJob {
    std::size_t a, f, t, m;
    std::string kind;
  };
  std::vector<TestJob> jobs;
  for (std::size_t a = 0; a < data.size(); ++a) {
    for (std::size_t f = 0; f < plans[a].folds.size(); ++f) {
      for (std::size_t t = 0; t < cfg.thetas.size(); ++t) {
        for (std::size_t m = 0; m < cfg.models.size(); ++m) {
          for (const char* k : {"MNF", "Z1", "Z2"}) jobs.push_back({a, f, t, m, k});
          if (have_caesar && m != ci) {
            for (const char* k : {"DM", "LD", "ENC"}) jobs.push_back({a, f, t, m, k});
          }
        }
      }
    }
  }
  std::vector<std::optional<TestRow>> results(jobs.size());
  std::vector<std::string> job_errors(jobs.size());
  parallel_for(
      jobs.size(),
      [&](std::size_t k) {
        const auto& j = jobs[k];
        const auto& c = cell_at(j.a, j.f, j.t, j.m);
        const double theta = cfg.thetas[j.t];
        const std::uint64_t seed = mix_seed(cfg.estimation.seed ^ 0xB007u, k, 0);
        TestRow row{data[j.a].id, j.f, theta, to_string(cfg.models[j.m]), {}};
        try {
          if (!c.ok) return;
          if (j.kind == "MNF") {
            row.report = mnf_test(c.y_test, c.forecast.q, c.forecast.e, cfg.n_boot, seed);
          } else if (j.kind == "Z1" || j.kind == "Z2") {
            row.report = acerbi_szekely_test(c.y_test, c.forecast.q, c.forecast.e,
                                             j.kind == "Z1" ? AsVariant::Z1 : AsVariant::Z2, theta, cfg.n_boot, seed);
          } else {
            const auto& base = cell_at(j.a, j.f, j.t, ci);
            if (!base.ok) return;
            row.subject = detail::pair_name(ModelKind::CAESAR, cfg.models[j.m]);
            if (j.kind == "ENC") {
              row.report = encompassing_test(base.forecast, c.forecast, c.y_test, theta, cfg.n_boot, seed);
            } else {
              const auto la = patton_loss(base.forecast.e, base.forecast.q, c.y_test, theta);
              const auto lb = patton_loss(c.forecast.e, c.forecast.q, c.y_test, theta);
              row.report = j.kind == "DM" ? dm_test(la.per_time, lb.per_time)
                                          : loss_difference_test(la.per_time, lb.per_time, cfg.n_boot, seed);
            }
          }
          results[k] = std::move(row);
        } catch (const std::exception& ex) {
          job_errors[k] = ex.what();
        }
      },
      cfg.parallel);
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (results[k]) {
      rep.tests.push_back(std::move(*results[k]));
    } else if (!job_errors[k].empty()) {
      ++rep.failures;
      TestRow row{data[jobs[k].a].id, jobs[k].f, cfg.thetas[jobs[k].t], to_string(cfg.models[jobs[k].m]), {}};
      row.report.name = jobs[k].kind;
      row.report.status = TestStatus::Inconclusive;
      row.report.diagnostics["failed"] = 1.0;
      rep.tests.push_back(std::move(row));
    }
  }

  // Nadeau-Bengio on per-fold mean Patton losses, one per asset/theta/competitor.
  for (std::size_t a = 0; a < data.size() && have_caesar; ++a) {
    for (std::size_t t = 0; t < cfg.thetas.size(); ++t) {
      for (std::size_t m = 0; m < cfg.models.size(); ++m) {
        if (m == ci) continue;
        std::vector<double> la, lb;
        for (std::size_t f = 0; f < plans[a].folds.size(); ++f) {
          const auto& x = cell_at(a, f, t, ci);
          const auto& z = cell_at(a, f, t, m);
          if (x.ok && z.ok && std::isfinite(x.row.l_p) && std::isfinite(z.row.l_p)) {
            la.push_back(x.row.l_p);
            lb.push_back(z.row.l_p);
          }
        }
        if (la.size() < 2) continue;
        TestRow row{data[a].id, 0, cfg.thetas[t], detail::pair_name(ModelKind::CAESAR, cfg.models[m]),
                    nadeau_bengio_test(la, lb, cfg.train_len, cfg.window - cfg.train_len)};
        row.report.diagnostics["n_folds"] = static_cast<double>(la.size());
        rep.tests.push_back(std::move(row));
      }
    }
  }

  // Fold aggregates with the CAESAR one-sd band flag.
  for (std::size_t a = 0; a < data.size(); ++a) {
    for (std::size_t t = 0; t < cfg.thetas.size(); ++t) {
      std::map<std::string, std::pair<double, double>> band;
      std::vector<AggregateRow> block;
      for (std::size_t m = 0; m < cfg.models.size(); ++m) {
        for (const char* metric : {"L_B", "L_P", "pinball"}) {
          std::vector<double> v;
          for (std::size_t f = 0; f < plans[a].folds.size(); ++f) {
            const auto& c = cell_at(a, f, t, m);
            if (!c.ok || c.row.status != CellStatus::Ok) continue;
            const double x = std::string(metric) == "L_B" ? c.row.l_b
                             : std::string(metric) == "L_P" ? c.row.l_p
                                                             : c.row.pinball;
            if (std::isfinite(x)) v.push_back(x);
          }
          AggregateRow row{data[a].id, cfg.models[m], cfg.thetas[t], metric,
                           detail::mean_of(v), detail::sd_of(v), v.size(), false};
          if (m == ci && have_caesar) band[metric] = {row.mean, row.sd};
          block.push_back(row);
        }
      }
      for (auto& row : block) {
        if (row.model == ModelKind::CAESAR || !band.count(row.metric)) continue;
        const auto [mu, sd] = band[row.metric];
        if (std::isfinite(mu) && std::isfinite(sd) && std::isfinite(row.mean)) {
          row.outside_caesar_band = std::abs(row.mean - mu) > sd;
        }
      }
      rep.aggregate.insert(rep.aggregate.end(), block.begin(), block.end());
    }
  }

  // Pinball differences (competitor - CAESAR).
  for (std::size_t a = 0; a < data.size() && have_caesar; ++a) {
    for (std::size_t f = 0; f < plans[a].folds.size(); ++f) {
      for (std::size_t t = 0; t < cfg.thetas.size(); ++t) {
        const auto& base = cell_at(a, f, t, ci);
        for (std::size_t m = 0; m < cfg.models.size(); ++m) {
          const auto& c = cell_at(a, f, t, m);
          if (m == ci || !base.ok || !c.ok) continue;
          rep.pinball_differences.push_back(
              {data[a].id, f, cfg.thetas[t], cfg.models[m], c.row.pinball - base.row.pinball});
        }
      }
    }
  }

  // Direct-test rejection ratios and DM good/bad counts.
  for (ModelKind m : cfg.models) {
    for (double th : cfg.thetas) {
      for (const char* name : {"MNF", "Z1", "Z2"}) {
        RejectionRatio rr{m, th, name};
        for (const auto& tr : rep.tests) {
          if (tr.subject != to_string(m) || tr.theta != th || tr.report.name != name) continue;
          if (tr.report.status != TestStatus::Ok) continue;
          ++rr.valid;
          rr.rejections += tr.report.reject_at_5pct ? 1 : 0;
        }
        if (rr.valid > 0) rr.ratio = static_cast<double>(rr.rejections) / static_cast<double>(rr.valid);
        rep.rejection_ratios.push_back(rr);
      }
      if (m == ModelKind::CAESAR || !have_caesar) continue;
      DmCount dc{m, th};
      const std::string subject = detail::pair_name(ModelKind::CAESAR, m);
      for (const auto& tr : rep.tests) {
        if (tr.subject != subject || tr.theta != th || tr.report.name != "DM") continue;
        ++dc.total;
        if (tr.report.reject_at_5pct) (tr.report.statistic < 0.0 ? dc.good : dc.bad)++;
      }
      rep.dm_counts.push_back(dc);
    }
  }
  return rep;
}

inline nlohmann::json to_json(const TestRow& r) {
  auto j = to_json(r.report);
  j["asset"] = r.asset;
  j["fold"] = r.fold;
  j["theta"] = r.theta;
  j["subject"] = r.subject;
  return j;
}

inline nlohmann::json to_json(const EmpiricalReport& r) {
  nlohmann::json rows = nlohmann::json::array(), tests = nlohmann::json::array(), agg = nlohmann::json::array(),
                 rr = nlohmann::json::array(), dm = nlohmann::json::array();
  for (const auto& x : r.rows) rows.push_back(to_json(x));
  for (const auto& x : r.tests) tests.push_back(to_json(x));
  for (const auto& x : r.aggregate) {
    agg.push_back({{"asset", x.asset},
                   {"model", to_string(x.model)},
                   {"theta", x.theta},
                   {"metric", x.metric},
                   {"mean", detail::num(x.mean)},
                   {"sd_across_folds", detail::num(x.sd)},
                   {"n_folds", x.n_folds},
                   {"outside_caesar_band", x.outside_caesar_band}});
  }
  for (const auto& x : r.rejection_ratios) {
    rr.push_back({{"model", to_string(x.model)},
                  {"theta", x.theta},
                  {"test", x.test},
                  {"rejections", x.rejections},
                  {"valid", x.valid},
                  {"ratio", detail::num(x.ratio)}});
  }
  for (const auto& x : r.dm_counts) {
    dm.push_back({{"competitor", to_string(x.competitor)},
                  {"theta", x.theta},
                  {"good", x.good},
                  {"bad", x.bad},
                  {"total", x.total},
                  {"cell", std::to_string(x.good) + "/" + std::to_string(x.bad)}});
  }
  return {{"config_hash", r.config_hash}, {"seed", r.seed},          {"failures", r.failures},
          {"aggregate", agg},             {"rejection_ratios", rr}, {"dm_counts", dm},
          {"tests", tests},               {"rows", rows}};
}

// ---------------------------------------------------------------------------
// Writers

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

inline std::string rows_csv(const std::vector<EvaluationRow>& rows) {
  using detail::fmt;
  std::ostringstream os;
  os << "model,id,index,theta,mae,rmse,l_b,l_p,pinball,pinball_step1,violation_rate,"
        "monotonicity_violation_rate,status,model_hash,config_hash,seed\n";
  for (const auto& r : rows) {
    os << to_string(r.model) << ',' << r.id << ',' << r.index << ',' << fmt(r.theta) << ',' << fmt(r.mae) << ','
       << fmt(r.rmse) << ',' << fmt(r.l_b) << ',' << fmt(r.l_p) << ',' << fmt(r.pinball) << ','
       << fmt(r.pinball_step1) << ',' << fmt(r.violation_rate) << ',' << fmt(r.monotonicity_violation_rate) << ','
       << to_string(r.status) << ',' << r.model_hash << ',' << r.config_hash << ',' << r.seed << '\n';
  }
  return os.str();
}

/// Batch test results as (asset, fold, theta, test, statistic, p, reject) rows.
inline std::string tests_csv(const std::vector<TestRow>& tests) {
  using detail::fmt;
  std::ostringstream os;
  os << "asset,fold,theta,subject,test,statistic,p,reject,status\n";
  for (const auto& t : tests) {
    os << t.asset << ',' << t.fold << ',' << fmt(t.theta) << ',' << t.subject << ',' << t.report.name << ','
       << fmt(t.report.statistic) << ',' << fmt(t.report.p_value) << ',' << (t.report.reject_at_5pct ? 1 : 0) << ','
       << to_string(t.report.status) << '\n';
  }
  return os.str();
}

inline void write_report(const SimulationReport& r, const std::filesystem::path& dir) {
  using detail::fmt;
  std::filesystem::create_directories(dir);
  write_text(dir / "simulation_report.json", to_json(r).dump(2) + "\n");
  write_text(dir / "simulation_rows.csv", rows_csv(r.rows));
  std::ostringstream os;
  os << "dgp,model,theta,mae,rmse,l_b,l_p,n_used,n_unstable_excluded,n_failed\n";
  for (const auto& c : r.table) {
    os << c.dgp << ',' << to_string(c.model) << ',' << fmt(c.theta) << ',' << fmt(c.mae) << ',' << fmt(c.rmse) << ','
       << fmt(c.l_b) << ',' << fmt(c.l_p) << ',' << c.n_used << ',' << c.n_unstable << ',' << c.n_failed << '\n';
  }
  write_text(dir / "simulation_table.csv", os.str());
}

inline void write_report(const EmpiricalReport& r, const std::filesystem::path& dir) {
  using detail::fmt;
  std::filesystem::create_directories(dir);
  write_text(dir / "evaluation_report.json", to_json(r).dump(2) + "\n");
  write_text(dir / "evaluation_rows.csv", rows_csv(r.rows));
  write_text(dir / "tests.csv", tests_csv(r.tests));

  std::ostringstream agg;
  agg << "asset,model,theta,metric,mean,sd_across_folds,n_folds,outside_caesar_band\n";
  for (const auto& x : r.aggregate) {
    agg << x.asset << ',' << to_string(x.model) << ',' << fmt(x.theta) << ',' << x.metric << ',' << fmt(x.mean) << ','
        << fmt(x.sd) << ',' << x.n_folds << ',' << (x.outside_caesar_band ? "*" : "") << '\n';
  }
  write_text(dir / "aggregate.csv", agg.str());

  std::ostringstream pd;
  pd << "asset,fold,theta,competitor,pinball_minus_caesar\n";
  for (const auto& x : r.pinball_differences) {
    pd << x.asset << ',' << x.fold << ',' << fmt(x.theta) << ',' << to_string(x.competitor) << ','
       << fmt(x.difference) << '\n';
  }
  write_text(dir / "pinball_difference.csv", pd.str());

  std::ostringstream rr;
  rr << "model,theta,test,rejections,valid,ratio\n";
  for (const auto& x : r.rejection_ratios) {
    rr << to_string(x.model) << ',' << fmt(x.theta) << ',' << x.test << ',' << x.rejections << ',' << x.valid << ','
       << fmt(x.ratio) << '\n';
  }
  write_text(dir / "rejection_ratios.csv", rr.str());

  std::ostringstream dm;
  dm << "competitor,theta,good,bad,total\n";
  for (const auto& x : r.dm_counts) {
    dm << to_string(x.competitor) << ',' << fmt(x.theta) << ',' << x.good << ',' << x.bad << ',' << x.total << '\n';
  }
  write_text(dir / "dm_counts.csv", dm.str());
}

}  // namespace tailrisk
