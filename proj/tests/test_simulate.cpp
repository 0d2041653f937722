#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "tailrisk/simulate.hpp"

using namespace tailrisk;

namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

// Composite Simpson rule for int_{lo}^{hi} x phi(x) dx.
double truncated_first_moment(double lo, double hi, int n = 200000) {
  const double h = (hi - lo) / n;
  double s = lo * normal_pdf(lo) + hi * normal_pdf(hi);
  for (int i = 1; i < n; ++i) {
    const double x = lo + i * h;
    s += (i % 2 ? 4.0 : 2.0) * x * normal_pdf(x);
  }
  return s * h / 3.0;
}

double lower_tail_mean(std::vector<double> x, double theta) {
  const auto k = static_cast<std::size_t>(theta * static_cast<double>(x.size()));
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k), x.end());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += x[i];
  return s / static_cast<double>(k);
}

}  // namespace

TEST(GarchSimulate, Homoskedastic) {
  GarchParams p{0.04, 0.0, 0.0};
  const auto path = garch_simulate(p, 200, 1);
  for (double s : path.sigma) EXPECT_DOUBLE_EQ(s, 0.2);
}

TEST(GarchSimulate, UnconditionalVariance) {
  GarchParams p{1e-5, 0.10, 0.80};
  const auto path = garch_simulate(p, 100000, 2);
  double v = 0.0;
  for (double y : path.y) v += y * y;
  v /= static_cast<double>(path.y.size());
  EXPECT_NEAR(v / p.unconditional_variance(), 1.0, 0.03);
}

TEST(GarchSimulate, RecursionAndDeterminism) {
  GarchParams p;
  const auto a = garch_simulate(p, 500, 3);
  const auto b = garch_simulate(p, 500, 3);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NEAR(a.sigma[0] * a.sigma[0], p.unconditional_variance(), 1e-18);
  for (std::size_t t = 1; t < a.y.size(); ++t) {
    const double v = p.omega + p.alpha * a.y[t - 1] * a.y[t - 1] + p.beta * a.sigma[t - 1] * a.sigma[t - 1];
    ASSERT_NEAR(a.sigma[t] * a.sigma[t], v, 1e-15);
  }
  EXPECT_NE(garch_simulate(p, 500, 4).y, a.y);
}

TEST(GarchSimulate, Errors) {
  EXPECT_THROW(garch_simulate({0.0, 0.1, 0.8}, 10, 1), InputError);
  EXPECT_THROW(garch_simulate({1e-5, 0.3, 0.8}, 10, 1), InputError);
  EXPECT_THROW(garch_simulate({1e-5, 0.1, 0.8, Innovation::Student, 2.0}, 10, 1), InputError);
  EXPECT_THROW(garch_simulate({1e-5, 0.1, 0.8}, 0, 1), InputError);
}

TEST(TrueNormal, Examples) {
  const auto z = true_var_es_normal(0.0, 0.05);
  EXPECT_EQ(z.q, 0.0);
  EXPECT_EQ(z.e, 0.0 * z.e);
  const auto u = true_var_es_normal(1.0, 0.05);
  EXPECT_NEAR(u.q, -1.6449, 1e-4);
  EXPECT_NEAR(u.e, -2.0627, 1e-4);
  const auto d = true_var_es_normal(2.0, 0.05);
  EXPECT_EQ(d.q, 2.0 * u.q);
  EXPECT_EQ(d.e, 2.0 * u.e);
  EXPECT_THROW(true_var_es_normal(-1.0, 0.05), DomainError);
}

TEST(TrueNormal, MatchesNumericIntegration) {
  for (double theta : {0.01, 0.025, 0.05, 0.1}) {
    const auto u = true_var_es_normal(1.0, theta);
    EXPECT_NEAR(u.e, truncated_first_moment(-40.0, u.q) / theta, 1e-9);
  }
}

TEST(TrueStudent, Examples) {
  const auto z = true_var_es_student(0.0, 5.0, 0.05);
  EXPECT_EQ(z.q, 0.0);
  EXPECT_EQ(z.e, 0.0 * z.e);
  const auto big = true_var_es_student(1.0, 1e6, 0.05);
  EXPECT_NEAR(big.e, -2.0627, 1e-3);
  EXPECT_THROW(true_var_es_student(1.0, 2.0, 0.05), DomainError);
}

TEST(TrueStudent, MonteCarloOracle) {
  std::mt19937_64 rng(5);
  std::student_t_distribution<double> t5(5.0);
  std::vector<double> x(10000000);
  for (double& v : x) v = t5(rng);
  const auto raw = true_var_es_student(1.0, 5.0, 0.05, StudentScale::Raw);
  EXPECT_NEAR(lower_tail_mean(x, 0.05) / raw.e, 1.0, 0.005);
}

TEST(TrueStudent, UnitVarianceScaling) {
  const auto raw = true_var_es_student(1.0, 5.0, 0.025, StudentScale::Raw);
  const auto unit = true_var_es_student(1.0, 5.0, 0.025);
  EXPECT_NEAR(unit.q, raw.q * std::sqrt(3.0 / 5.0), 1e-14);
  EXPECT_NEAR(unit.e, raw.e * std::sqrt(3.0 / 5.0), 1e-14);
}

TEST(TrueVarEs, OrderingAndHomogeneityGrid) {
  for (double theta = 0.005; theta < 0.5; theta += 0.01) {
    for (double sigma : {1e-4, 0.01, 0.3, 1.0, 7.0}) {
      for (const GarchParams& p : {GarchParams{}, GarchParams{5e-6, 0.08, 0.9, Innovation::Student, 5.0}}) {
        const auto v = true_var_es(p, sigma, theta);
        ASSERT_LT(v.e, v.q);
        ASSERT_LT(v.q, 0.0);
        const auto one = true_var_es(p, 1.0, theta);
        ASSERT_NEAR(v.q, sigma * one.q, 1e-12 * std::abs(v.q));
        ASSERT_NEAR(v.e, sigma * one.e, 1e-12 * std::abs(v.e));
      }
    }
  }
}

TEST(TrueVarEs, SimulatedTailMeanConverges) {
  GarchParams p{5e-6, 0.08, 0.9, Innovation::Student, 5.0};
  const auto path = garch_simulate(p, 10000000, 6);
  std::vector<double> eps(path.y.size());
  for (std::size_t t = 0; t < eps.size(); ++t) eps[t] = path.y[t] / path.sigma[t];
  const auto truth = true_var_es(p, 1.0, 0.05);
  EXPECT_NEAR(lower_tail_mean(std::move(eps), 0.05) / truth.e, 1.0, 0.01);
}

TEST(Ratio, CenteredNormalIsScaleFree) {
  for (double s : {0.01, 1.0, 3.0}) EXPECT_NEAR(var_es_ratio(NormalDist{0.0, s}, 0.05), 0.7975, 1e-4);
  EXPECT_NEAR(var_es_ratio(NormalDist{-1.0, 1e-9}, 0.05), 1.0, 1e-6);
  EXPECT_THROW(var_es_ratio(NormalDist{0.0, 0.0}, 0.05), DomainError);
}

TEST(Ratio, NonCenteredNormalVariesWithScale) {
  EXPECT_GT(std::abs(var_es_ratio(NormalDist{-0.5, 0.5}, 0.05) - var_es_ratio(NormalDist{-0.5, 2.0}, 0.05)), 0.01);
}

TEST(Ratio, StudentMonotoneInNu) {
  double prev = var_es_ratio(StudentDist{3.0}, 0.05);
  for (double nu = 3.5; nu <= 100.0; nu += 0.5) {
    const double r = var_es_ratio(StudentDist{nu}, 0.05);
    EXPECT_GT(r, prev);
    prev = r;
  }
  EXPECT_LT(prev, var_es_ratio(NormalDist{}, 0.05));
}

TEST(DgpSuite, DefaultBundle) {
  const auto b = run_dgp_suite(default_dgps(), {0.05, 0.025, 0.01});
  EXPECT_EQ(b.dgps.size(), 6u);
  EXPECT_EQ(b.series.size(), 120u);
  EXPECT_EQ(b.length, 1750u);
  EXPECT_EQ(b.split, 1500u);
  const auto& s = b.series[25];
  EXPECT_EQ(s.dgp_id, "N-II");
  EXPECT_EQ(s.series_index, 5u);
  ASSERT_EQ(s.truth.size(), 3u);
  const auto unit = true_var_es_normal(1.0, 0.025);
  EXPECT_NEAR(s.truth[1].e[100], s.sigma[100] * unit.e, 1e-15);
  const auto j = manifest_json(b);
  EXPECT_EQ(j.at("split").at("test"), 250);
  EXPECT_TRUE(j.at("dgps")[0].at("stand_in_coefficients").get<bool>());
}

TEST(DgpSuite, SeededDeterminismAndParallelAgnostic) {
  const auto a = run_dgp_suite(default_dgps(), {0.05}, 3, 300, 250, 9, true);
  const auto b = run_dgp_suite(default_dgps(), {0.05}, 3, 300, 250, 9, false);
  for (std::size_t k = 0; k < a.series.size(); ++k) EXPECT_EQ(a.series[k].y, b.series[k].y);
  EXPECT_THROW(run_dgp_suite(default_dgps(), {0.05}, 3, 300, 300), InputError);
}

TEST(DgpSuite, WritesCsvAndManifest) {
  const auto b = run_dgp_suite({default_dgps()[3]}, {0.05, 0.01}, 2, 40, 30, 1, false);
  const auto dir = std::filesystem::temp_directory_path() / "tailrisk_bundle_test";
  std::filesystem::remove_all(dir);
  write_bundle(b, dir);
  std::ifstream in(dir / "t-I_1.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,y,sigma,q_true@0.05,q_true@0.01,e_true@0.05,e_true@0.01");
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  std::filesystem::remove_all(dir);
}

TEST(MixSeed, SpreadsNeighbours) {
  EXPECT_NE(mix_seed(1, 0, 0), mix_seed(1, 0, 1));
  EXPECT_NE(mix_seed(1, 0, 1), mix_seed(1, 1, 0));
  EXPECT_EQ(mix_seed(7, 3, 4), mix_seed(7, 3, 4));
}
