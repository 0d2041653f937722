#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "tailrisk/config_json.hpp"
#include "tailrisk/core.hpp"

using namespace tailrisk;

TEST(ProbabilityLevel, AcceptsOpenUnitInterval) {
  EXPECT_DOUBLE_EQ(ProbabilityLevel(0.05).value(), 0.05);
  EXPECT_THROW(ProbabilityLevel(0.0), InputError);
  EXPECT_THROW(ProbabilityLevel(1.0), InputError);
  EXPECT_THROW(ProbabilityLevel(-0.1), InputError);
  EXPECT_THROW(ProbabilityLevel(std::nan("")), InputError);
}

TEST(ReturnSeries, ValidatesContents) {
  EXPECT_THROW(ReturnSeries(std::vector<double>{}), InputError);
  EXPECT_EQ(ReturnSeries({1.0}).size(), 1u);
  EXPECT_THROW(ReturnSeries({1.0, std::nan("")}), InputError);
  EXPECT_THROW(ReturnSeries({1.0, INFINITY}), InputError);
  EXPECT_THROW(ReturnSeries({1.0, 2.0}, {"2020-01-02", "2020-01-01"}), InputError);
  EXPECT_THROW(ReturnSeries({1.0, 2.0}, {"2020-01-01", "2020-01-01"}), InputError);
  EXPECT_THROW(ReturnSeries({1.0, 2.0}, {"2020-01-01"}), InputError);
  ReturnSeries s({1.0, 2.0, 3.0}, {"2020-01-01", "2020-01-02", "2020-01-03"});
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.slice(1, 3).size(), 2u);
  EXPECT_DOUBLE_EQ(s.slice(1, 3)[0], 2.0);
  EXPECT_THROW(s.slice(2, 4), InputError);
}

TEST(ReturnsFromPrices, Examples) {
  const std::vector<double> flat{1, 1, 1};
  auto r = returns_from_prices(flat, ReturnMode::Log);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 0.0);

  const std::vector<double> p{100, 110};
  EXPECT_NEAR(returns_from_prices(p, ReturnMode::Pct)[0], 0.10, 1e-15);

  const std::vector<double> g{1.0, std::exp(1.0), std::exp(2.0)};
  auto lg = returns_from_prices(g, ReturnMode::Log);
  EXPECT_NEAR(lg[0], 1.0, 1e-15);
  EXPECT_NEAR(lg[1], 1.0, 1e-15);
}

TEST(ReturnsFromPrices, Errors) {
  const std::vector<double> bad{1.0, 0.0, 2.0};
  EXPECT_THROW(returns_from_prices(bad, ReturnMode::Log), DomainError);
  const std::vector<double> neg{1.0, -1.0};
  EXPECT_THROW(returns_from_prices(neg, ReturnMode::Pct), DomainError);
  const std::vector<double> one{1.0};
  EXPECT_THROW(returns_from_prices(one, ReturnMode::Log), InputError);
}

TEST(ReturnsFromPrices, LogRoundTrip) {
  std::mt19937_64 rng(11);
  std::lognormal_distribution<double> step(0.0, 0.02);
  std::vector<double> prices{50.0};
  for (int i = 0; i < 500; ++i) prices.push_back(prices.back() * step(rng));
  auto r = returns_from_prices(prices, ReturnMode::Log);
  double p = prices[0];
  for (std::size_t t = 0; t < r.size(); ++t) {
    p *= std::exp(r[t]);
    EXPECT_NEAR(p / prices[t + 1], 1.0, 1e-12);
  }
}

TEST(ReturnsFromPrices, DropsFirstDate) {
  const std::vector<double> p{1, 2, 4};
  auto r = returns_from_prices(p, ReturnMode::Pct, {"a", "b", "c"});
  ASSERT_EQ(r.dates().size(), 2u);
  EXPECT_EQ(r.dates()[0], "b");
}

TEST(BlockFolds, SmallExample) {
  auto plan = make_block_folds(10, 5, 4, 1);
  ASSERT_EQ(plan.folds.size(), 6u);
  EXPECT_EQ(plan.folds[0].train, (IndexRange{0, 4}));
  EXPECT_EQ(plan.folds[0].test, (IndexRange{4, 5}));
  EXPECT_EQ(plan.folds[5].test, (IndexRange{9, 10}));
}

TEST(BlockFolds, ThirtyYearsGiveTwentyFourFolds) {
  auto plan = make_block_folds(7560, 1764, 1512, 252);
  EXPECT_EQ(plan.folds.size(), 24u);
  EXPECT_EQ(plan.folds.back().test.end, 23 * 252 + 1764u);
}

TEST(BlockFolds, WindowEqualsLength) {
  EXPECT_EQ(make_block_folds(30, 30, 20, 7).folds.size(), 1u);
}

TEST(BlockFolds, Errors) {
  EXPECT_THROW(make_block_folds(10, 11, 4, 1), InputError);
  EXPECT_THROW(make_block_folds(10, 5, 5, 1), InputError);
  EXPECT_THROW(make_block_folds(10, 5, 0, 1), InputError);
  EXPECT_THROW(make_block_folds(10, 5, 4, 0), InputError);
}

TEST(BlockFolds, ExhaustiveBoundsUpToFifty) {
  for (std::size_t T = 2; T <= 50; ++T) {
    for (std::size_t w = 2; w <= T; ++w) {
      for (std::size_t tr = 1; tr < w; ++tr) {
        for (std::size_t s = 1; s <= T; ++s) {
          const auto plan = make_block_folds(T, w, tr, s);
          ASSERT_EQ(plan.folds.size(), (T - w) / s + 1);
          for (std::size_t k = 0; k < plan.folds.size(); ++k) {
            const auto& f = plan.folds[k];
            ASSERT_EQ(f.train.begin, k * s);
            ASSERT_EQ(f.train.end, f.test.begin);
            ASSERT_GT(f.train.size(), 0u);
            ASSERT_GT(f.test.size(), 0u);
            ASSERT_LE(f.test.end, T);
            ASSERT_EQ(f.test.end - f.train.begin, w);
          }
        }
      }
    }
  }
}

TEST(EmpiricalVarEs, OrderStatisticExample) {
  std::vector<double> x{-3, -2, -1, 0, 1, 2, 3, 4, 5, 6};
  auto t = empirical_var_es(x, 0.1);
  EXPECT_EQ(t.q0, -3.0);
  EXPECT_EQ(t.e0, -3.0);
  EXPECT_FALSE(t.fallback);
}

TEST(EmpiricalVarEs, ConstantAndTwoPoint) {
  std::vector<double> c(7, 0.25);
  auto t = empirical_var_es(c, 0.05);
  EXPECT_EQ(t.q0, 0.25);
  EXPECT_EQ(t.e0, 0.25);
  std::vector<double> two{1.0, -1.0};
  auto u = empirical_var_es(two, 0.5);
  EXPECT_EQ(u.q0, -1.0);
  EXPECT_EQ(u.e0, -1.0);
}

TEST(EmpiricalVarEs, EmptyPrefixThrows) {
  std::vector<double> none;
  EXPECT_THROW(empirical_var_es(none, 0.05), InputError);
}

TEST(EmpiricalVarEs, TranslationEquivariant) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> shift(-10.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(37);
    for (double& v : x) v = n(rng);
    const double c = shift(rng);
    std::vector<double> xs = x;
    for (double& v : xs) v += c;
    const auto a = empirical_var_es(x, 0.1);
    const auto b = empirical_var_es(xs, 0.1);
    EXPECT_NEAR(b.q0, a.q0 + c, 1e-12);
    EXPECT_NEAR(b.e0, a.e0 + c, 1e-12);
    EXPECT_LE(a.e0, a.q0);
  }
}

TEST(PrefixLength, TenPercentClamped) {
  EXPECT_EQ(prefix_length(1500, 0.10), 150u);
  EXPECT_EQ(prefix_length(5, 0.10), 1u);
  EXPECT_EQ(prefix_length(10, 1.0), 10u);
}

TEST(EstimationConfig, DefaultsAndValidation) {
  EstimationConfig c;
  EXPECT_EQ(c.n_starts, 100);
  EXPECT_EQ(c.n_keep, 3);
  EXPECT_EQ(c.n_chained, 6);
  EXPECT_DOUBLE_EQ(c.resolved_lambda(c.lambda_r, 1500), 10.0 / 1500);
  c.lambda_r = 0.5;
  EXPECT_DOUBLE_EQ(c.resolved_lambda(c.lambda_r, 1500), 0.5);
  EXPECT_NO_THROW(c.validate());
  c.n_keep = 101;
  EXPECT_THROW(c.validate(), InputError);
  c = EstimationConfig{};
  c.lambda_q = -1.0;
  EXPECT_THROW(c.validate(), InputError);
  c = EstimationConfig{};
  c.tol = 0.0;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(EstimationConfig, JsonRoundTrip) {
  EstimationConfig c;
  c.n_starts = 20;
  c.lambda_e = 0.25;
  c.loss_variant = LossVariant::PattonOnly;
  c.seed = 99;
  const auto j = to_json(c);
  EXPECT_EQ(j.at("lambda_r"), "10/T");
  const auto back = estimation_config_from_json(j);
  EXPECT_EQ(back.n_starts, 20);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_FALSE(back.lambda_r.has_value());
  ASSERT_TRUE(back.lambda_e.has_value());
  EXPECT_DOUBLE_EQ(*back.lambda_e, 0.25);
  EXPECT_EQ(back.loss_variant, LossVariant::PattonOnly);
  EXPECT_EQ(json_hash(j), json_hash(to_json(back)));
}

TEST(LossVariant, StringRoundTrip) {
  for (auto v : {LossVariant::Both, LossVariant::BarreraOnly, LossVariant::PattonOnly}) {
    EXPECT_EQ(loss_variant_from_string(to_string(v)), v);
  }
  EXPECT_THROW(loss_variant_from_string("NEITHER"), InputError);
}

TEST(Csv, ReturnColumn) {
  std::istringstream in("\xEF\xBB\xBF" "date,return\n2020-01-01,0.01\n2020-01-02,-0.02\n\n");
  auto c = read_csv_columns(in);
  EXPECT_EQ(c.column, CsvColumn::Return);
  ASSERT_EQ(c.values.size(), 2u);
  EXPECT_DOUBLE_EQ(c.values[1], -0.02);
  EXPECT_EQ(c.dates[0], "2020-01-01");
}

TEST(Csv, SimulatedBundleLayout) {
  std::istringstream in("t,y,sigma,q_true@0.05\n9,0.5,1,-1.6\n10,-0.25,1,-1.6\n");
  auto c = read_csv_columns(in);
  EXPECT_EQ(c.values, (std::vector<double>{0.5, -0.25}));
  EXPECT_TRUE(c.dates.empty());
}

TEST(Csv, PriceColumnAndErrors) {
  std::istringstream in("Date,Close\nd1,100\nd2,101.5\n");
  EXPECT_EQ(read_csv_columns(in).column, CsvColumn::Price);
  std::istringstream bad_header("date,volume\nd1,1\n");
  EXPECT_THROW(read_csv_columns(bad_header), InputError);
  std::istringstream bad_value("date,return\nd1,abc\n");
  EXPECT_THROW(read_csv_columns(bad_value), InputError);
  std::istringstream empty("");
  EXPECT_THROW(read_csv_columns(empty), InputError);
}

TEST(ParallelFor, MatchesSerialAndPropagatesErrors) {
  std::vector<double> a(1000), b(1000);
  parallel_for(a.size(), [&](std::size_t i) { a[i] = std::sin(static_cast<double>(i)); }, false);
  parallel_for(b.size(), [&](std::size_t i) { b[i] = std::sin(static_cast<double>(i)); }, true);
  EXPECT_EQ(a, b);
  EXPECT_THROW(parallel_for(
                   10,
                   [](std::size_t i) {
                     if (i == 7) throw DomainError("seven");
                   },
                   true),
               DomainError);
}

TEST(ForecastPath, Crossings) {
  ForecastPath f{{-1, -1, -1}, {-2, -0.5, -1}, 0.05};
  EXPECT_EQ(f.crossings(), 1u);
}
