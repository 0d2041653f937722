#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tailrisk/backtest.hpp"
#include "tailrisk/caesar.hpp"
#include "tailrisk/caviar.hpp"
#include "tailrisk/config_json.hpp"
#include "tailrisk/core.hpp"
#include "tailrisk/gas.hpp"
#include "tailrisk/harness.hpp"
#include "tailrisk/kquantile.hpp"
#include "tailrisk/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tailrisk;

namespace {

constexpr int kOk = 0;
constexpr int kFatal = 1;
constexpr int kCellFailures = 2;

struct Options {
  std::vector<std::string> data;
  std::string config;
  double theta = 0.05;
  std::string model = "CAESAR";
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string model_file;
  std::string study = "empirical";
  std::string returns = "log";
  std::vector<std::string> eval_models;
};

json load_json(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  return json::parse(in);
}

ExperimentConfig experiment_config(const Options& o, const json& j) {
  ExperimentConfig c = experiment_config_from_json(j);
  if (o.seed) c.estimation.seed = *o.seed;
  return c;
}

ReturnMode return_mode(const Options& o) {
  if (o.returns == "log") return ReturnMode::Log;
  if (o.returns == "pct") return ReturnMode::Pct;
  throw InputError("--returns must be log or pct");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

/// Header-named numeric columns; date/index columns are kept as text labels.
struct Table {
  std::vector<std::string> labels;
  std::map<std::string, std::vector<double>> cols;

  const std::vector<double>& at(const std::string& name) const {
    auto it = cols.find(name);
    if (it == cols.end()) throw InputError("csv: missing column '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return cols.count(name) > 0; }
};

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(detail::trim(cell));
  return out;
}

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw InputError("csv: empty file " + path);
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
  const auto header = split_row(detail::trim(line));
  Table t;
  auto is_label = [](const std::string& h) { return h == "date" || h == "t" || h == "index"; };
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto row = split_row(line);
    if (row.size() != header.size()) throw InputError("csv: ragged row at line " + std::to_string(lineno));
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (is_label(header[k])) {
        if (header[k] == "date") t.labels.push_back(row[k]);
      } else {
        t.cols[header[k]].push_back(detail::parse_double(row[k], lineno));
      }
    }
  }
  return t;
}

// ---------------------------------------------------------------------------

int cmd_fit(const Options& o) {
  if (o.data.empty()) throw InputError("fit needs --data");
  const auto cfg = experiment_config(o, load_json(o.config));
  const auto series = read_series_csv(o.data.front(), return_mode(o));
  const auto y = series.values();
  const ModelKind kind = model_kind_from_string(o.model);
  EstimationConfig est = cfg.estimation;

  json model;
  JointPath path;
  switch (kind) {
    case ModelKind::CAESAR: {
      const auto m = caesar_fit(y, o.theta, cfg.spec, est);
      model = to_json(m);
      path = m.filter(y);
      break;
    }
    case ModelKind::CAVIAR: {
      const auto m = caviar_fit(y, o.theta, cfg.spec, est);
      model = to_json(m);
      auto p = m.filter(y);
      path.q = p.q;
      path.e = p.q;
      break;
    }
    case ModelKind::KCAVIAR: {
      const auto m = kcaviar_fit(y, o.theta, cfg.k_levels, cfg.spec, est);
      model = to_json(m);
      path = kcaviar_estimate(m, y);
      break;
    }
    case ModelKind::GAS1:
    case ModelKind::GAS2: {
      const auto m = gas_fit(y, o.theta, kind == ModelKind::GAS1 ? GasVariant::One : GasVariant::Two, est,
                             cfg.instability_ratio);
      model = to_json(m);
      path = m.filter(y);
      break;
    }
  }

  EvaluationRow row;
  row.model = kind;
  row.id = stem_of(o.data.front());
  row.theta = o.theta;
  detail::fill_metrics(row, path.forecast_path(o.theta), y);
  row.model_hash = json_hash(model);
  row.config_hash = json_hash(to_json(cfg));
  row.seed = est.seed;

  fs::create_directories(o.out);
  write_json(fs::path(o.out) / "model.json", model);
  write_json(fs::path(o.out) / "fit_report.json",
             {{"in_sample", to_json(row)}, {"config", to_json(cfg)}, {"observations", y.size()}});
  std::cout << "fit " << to_string(kind) << " theta=" << o.theta << " on " << y.size() << " observations -> "
            << (fs::path(o.out) / "model.json").string() << "\n";
  return kOk;
}

int cmd_forecast(const Options& o) {
  if (o.model_file.empty()) throw InputError("forecast needs --model-file");
  if (o.data.empty()) throw InputError("forecast needs --data");
  const json model = load_json(o.model_file);
  const auto series = read_series_csv(o.data.front(), return_mode(o));
  const auto y = series.values();
  const std::string name = model.at("model").get<std::string>();

  JointPath path;
  double theta = model.at("theta").get<double>();
  if (name == "CAESAR") {
    path = caesar_model_from_json(model).filter(y);
  } else if (name == "CAVIAR") {
    const auto p = caviar_model_from_json(model).filter(y);
    path.q = p.q;
    path.e = p.q;
    path.next_q = path.next_e = p.next;
  } else if (name == "KCAVIAR") {
    path = kcaviar_estimate(kcaviar_model_from_json(model), y);
  } else {
    path = gas_model_from_json(model).filter(y);
  }

  fs::create_directories(o.out);
  std::ostringstream csv;
  csv << std::setprecision(17) << "index,date,y,q,e\n";
  for (std::size_t t = 0; t < y.size(); ++t) {
    csv << t << ',' << (series.dates().empty() ? "" : series.dates()[t]) << ',' << y[t] << ',' << path.q[t] << ','
        << path.e[t] << '\n';
  }
  write_text(fs::path(o.out) / "forecast.csv", csv.str());
  write_json(fs::path(o.out) / "forecast.json", {{"model", name},
                                                 {"theta", theta},
                                                 {"next_q", path.next_q},
                                                 {"next_e", path.next_e},
                                                 {"monotonicity_violations", path.monotonicity_violations},
                                                 {"model_hash", json_hash(model)}});
  std::cout << "next q=" << path.next_q << " e=" << path.next_e << "\n";
  return kOk;
}

int cmd_simulate(const Options& o) {
  const json j = load_json(o.config);
  const json sim = j.value("simulation", json::object());
  std::vector<double> thetas = j.value("thetas", std::vector<double>{0.05, 0.025, 0.01});
  auto dgps = default_dgps();
  if (sim.contains("dgps")) {
    const auto wanted = sim.at("dgps").get<std::vector<std::string>>();
    std::vector<DgpSpec> keep;
    for (const auto& d : dgps) {
      if (std::find(wanted.begin(), wanted.end(), d.id) != wanted.end()) keep.push_back(d);
    }
    if (keep.empty()) throw InputError("simulation.dgps matched no process");
    dgps = keep;
  }
  const std::uint64_t seed = o.seed.value_or(sim.value("seed", std::uint64_t{2024}));
  const auto bundle = run_dgp_suite(dgps, thetas, sim.value("n_series", std::size_t{20}),
                                    sim.value("length", std::size_t{1750}), sim.value("split", std::size_t{1500}),
                                    seed, j.value("parallel", true));
  write_bundle(bundle, o.out);
  std::cout << "wrote " << bundle.series.size() << " series to " << o.out << "\n";
  return kOk;
}

int cmd_backtest(const Options& o) {
  if (o.data.empty()) throw InputError("backtest needs --data (csv with y,q,e columns)");
  const json j = load_json(o.config);
  const int n_boot = j.value("n_boot", 10000);
  const std::uint64_t seed = o.seed.value_or(j.value("seed", std::uint64_t{42}));
  const Table t = read_table(o.data.front());
  const auto& y = t.at("y");
  const auto& q = t.at("q");
  const auto& e = t.at("e");

  std::vector<TestRow> rows;
  std::size_t failures = 0;
  const std::string asset = stem_of(o.data.front());
  auto run = [&](const std::string& subject, const std::string& name, auto&& fn) {
    TestRow r{asset, 0, o.theta, subject, {}};
    try {
      r.report = fn();
    } catch (const std::exception& ex) {
      ++failures;
      r.report.name = name;
      r.report.status = TestStatus::Inconclusive;
      r.report.diagnostics["failed"] = 1.0;
      std::cerr << name << ": " << ex.what() << "\n";
    }
    rows.push_back(std::move(r));
  };
  run("A", "MNF", [&] { return mnf_test(y, q, e, n_boot, seed); });
  run("A", "Z1", [&] { return acerbi_szekely_test(y, q, e, AsVariant::Z1, o.theta, n_boot, seed + 1); });
  run("A", "Z2", [&] { return acerbi_szekely_test(y, q, e, AsVariant::Z2, o.theta, n_boot, seed + 2); });
  if (t.has("q_b") && t.has("e_b")) {
    const auto& qb = t.at("q_b");
    const auto& eb = t.at("e_b");
    run("A_vs_B", "DM", [&] {
      return dm_test(patton_loss(e, q, y, o.theta).per_time, patton_loss(eb, qb, y, o.theta).per_time);
    });
    run("A_vs_B", "LD", [&] {
      return loss_difference_test(patton_loss(e, q, y, o.theta).per_time, patton_loss(eb, qb, y, o.theta).per_time,
                                  n_boot, seed + 3);
    });
    run("A_vs_B", "ENC", [&] {
      return encompassing_test(ForecastPath{q, e, o.theta}, ForecastPath{qb, eb, o.theta}, y, o.theta, n_boot,
                               seed + 4);
    });
  }

  fs::create_directories(o.out);
  json reports = json::array();
  for (const auto& r : rows) reports.push_back(to_json(r));
  write_json(fs::path(o.out) / "backtest_report.json",
             {{"theta", o.theta}, {"n_boot", n_boot}, {"seed", seed}, {"failures", failures}, {"tests", reports}});
  write_text(fs::path(o.out) / "tests.csv", tests_csv(rows));
  for (const auto& r : rows) {
    std::cout << r.report.name << " stat=" << r.report.statistic << " p=" << r.report.p_value
              << (r.report.reject_at_5pct ? " reject" : "") << " [" << to_string(r.report.status) << "]\n";
  }
  return failures > 0 ? kCellFailures : kOk;
}

int cmd_evaluate(const Options& o) {
  const json j = load_json(o.config);
  auto cfg = experiment_config(o, j);
  if (!o.eval_models.empty()) {
    cfg.models.clear();
    for (const auto& m : o.eval_models) cfg.models.push_back(model_kind_from_string(m));
  }
  if (o.study == "simulation") {
    const json sim = j.value("simulation", json::object());
    auto dgps = default_dgps();
    if (sim.contains("dgps")) {
      const auto wanted = sim.at("dgps").get<std::vector<std::string>>();
      std::vector<DgpSpec> keep;
      for (const auto& d : dgps) {
        if (std::find(wanted.begin(), wanted.end(), d.id) != wanted.end()) keep.push_back(d);
      }
      dgps = keep;
    }
    const auto bundle =
        run_dgp_suite(dgps, cfg.thetas, sim.value("n_series", std::size_t{20}), sim.value("length", std::size_t{1750}),
                      sim.value("split", std::size_t{1500}), sim.value("seed", std::uint64_t{2024}), cfg.parallel);
    const auto rep = run_simulation_study(bundle, cfg);
    write_report(rep, o.out);
    write_json(fs::path(o.out) / "manifest.json", manifest_json(bundle));
    std::cout << "simulation study: " << rep.rows.size() << " cells, " << rep.failures << " failed\n";
    return rep.failures > 0 ? kCellFailures : kOk;
  }
  if (o.study != "empirical") throw InputError("--study must be empirical or simulation");
  if (o.data.empty()) throw InputError("evaluate needs at least one --data file");
  std::vector<NamedSeries> data;
  for (const auto& path : o.data) data.push_back({stem_of(path), read_series_csv(path, return_mode(o))});
  const auto rep = run_empirical_evaluation(data, cfg);
  write_report(rep, o.out);
  std::cout << "evaluation: " << rep.rows.size() << " cells, " << rep.tests.size() << " tests, " << rep.failures
            << " failed\n";
  return rep.failures > 0 ? kCellFailures : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tailrisk: joint VaR / ES estimation, simulation and backtesting"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON configuration file");
    sub->add_option("--seed", o.seed, "master seed (overrides the config)");
    sub->add_option("--out", o.out, "output directory");
  };

  auto* fit = app.add_subcommand("fit", "fit a model on a return series");
  fit->add_option("--data", o.data, "csv with date,return or date,price")->required();
  fit->add_option("--theta", o.theta, "tail probability level");
  fit->add_option("--model", o.model, "CAESAR, CAVIAR, KCAVIAR, GAS1 or GAS2");
  fit->add_option("--returns", o.returns, "log or pct, used when the csv holds prices");
  add_common(fit);

  auto* fc = app.add_subcommand("forecast", "filter a fitted model over a series");
  fc->add_option("--model-file", o.model_file, "model.json written by fit")->required();
  fc->add_option("--data", o.data, "csv with date,return or date,price")->required();
  fc->add_option("--returns", o.returns, "log or pct, used when the csv holds prices");
  add_common(fc);

  auto* sim = app.add_subcommand("simulate", "generate GARCH series with ground-truth VaR/ES");
  add_common(sim);

  auto* bt = app.add_subcommand("backtest", "run ES backtests on a csv with y,q,e (and optional q_b,e_b) columns");
  bt->add_option("--data", o.data, "forecast csv")->required();
  bt->add_option("--theta", o.theta, "tail probability level");
  add_common(bt);

  auto* ev = app.add_subcommand("evaluate", "block-fold evaluation or simulation study");
  ev->add_option("--data", o.data, "return/price csv files (repeatable)");
  ev->add_option("--study", o.study, "empirical or simulation");
  ev->add_option("--returns", o.returns, "log or pct, used when the csv holds prices");
  ev->add_option("--model", o.eval_models, "restrict to these models (repeatable)");
  add_common(ev);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kFatal;
  }

  try {
    if (*fit) return cmd_fit(o);
    if (*fc) return cmd_forecast(o);
    if (*sim) return cmd_simulate(o);
    if (*bt) return cmd_backtest(o);
    if (*ev) return cmd_evaluate(o);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kFatal;
  }
  return kFatal;
}
