#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "tailrisk/caesar.hpp"
#include "tailrisk/simulate.hpp"

using namespace tailrisk;

namespace {

EstimationConfig quick_config(std::uint64_t seed = 42) {
  EstimationConfig c;
  c.seed = seed;
  c.parallel = false;
  return c;
}

std::vector<double> iid_normal(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(CaesarFilter, ZeroMap) {
  const std::vector<double> y{0.3, -0.4, 1.0};
  const auto p = caesar_filter({std::vector<double>(5, 0.0), std::vector<double>(5, 0.0)}, {}, y, -1.0, -2.0);
  for (std::size_t t = 1; t < y.size(); ++t) {
    EXPECT_EQ(p.q[t], 0.0);
    EXPECT_EQ(p.e[t], 0.0);
  }
}

TEST(CaesarFilter, PurePersistence) {
  const auto y = iid_normal(40, 1);
  const auto p = caesar_filter({{0, 0, 0, 1, 0}, {0, 0, 0, 0, 1}}, {}, y, -1.0, -2.0);
  for (std::size_t t = 0; t < y.size(); ++t) {
    EXPECT_EQ(p.q[t], -1.0);
    EXPECT_EQ(p.e[t], -2.0);
  }
  EXPECT_EQ(p.monotonicity_violations, 0u);
}

TEST(CaesarFilter, OneStepHandRecursion) {
  const std::vector<double> y{-1.0};
  const auto p = caesar_filter({{-0.1, 0, 0.5, 0, 0}, {-0.2, 0, 0.6, 0, 0}}, {}, y, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(p.next_q, 0.4);
  EXPECT_DOUBLE_EQ(p.next_e, 0.4);
  EXPECT_EQ(p.monotonicity_violations, 1u);
  const std::vector<double> y2{-1.0, 0.0};
  EXPECT_EQ(caesar_filter({{-0.1, 0, 0.5, 0, 0}, {-0.2, 0, 0.6, 0, 0}}, {}, y2, 0.0, 0.0).monotonicity_violations, 1u);
}

TEST(CaesarFilter, Errors) {
  const std::vector<double> y{1.0, 2.0};
  const CaesarParams ok{{0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}};
  EXPECT_THROW(caesar_filter({{0, 0, 0, 0}, {0, 0, 0, 0, 0}}, {}, y, -1, -2), InputError);
  EXPECT_THROW(caesar_filter(ok, {}, y, -2, -1), InputError);
  EXPECT_THROW(caesar_filter(ok, {}, y, NAN, -1), InputError);
  const auto big = iid_normal(3000, 2);
  EXPECT_THROW(caesar_filter({{0, 0, 0, 1.5, 0.3}, {0, 0, 0, 0, 1}}, {}, big, -1, -2), DivergenceError);
}

TEST(ResidualFilter, TrivialCases) {
  const auto y = iid_normal(30, 3);
  const std::vector<double> q(30, -1.5);
  const auto z = residual_filter({std::vector<double>(5, 0.0)}, {}, y, q, -0.5);
  EXPECT_EQ(z[0], -0.5);
  for (std::size_t t = 1; t < z.size(); ++t) EXPECT_EQ(z[t], 0.0);
  const auto r = residual_filter({{0, 0, 0, 0, 1}}, {}, y, q, -0.5);
  for (double v : r) EXPECT_EQ(v, -0.5);
  EXPECT_THROW(residual_filter({{0, 0, 0, 0, 1}}, {}, y, std::vector<double>(3, -1.0), -0.5), InputError);
}

TEST(ResidualFilter, MatchesDirectRecursion) {
  std::mt19937_64 rng(4);
  const auto y = random_vec(3, rng, -2, 2);
  const auto q = random_vec(3, rng, -3, -1);
  const auto g = random_vec(5, rng, -0.5, 0.5);
  const double r0 = -0.3;
  const auto r = residual_filter({g}, {}, y, q, r0);
  std::vector<double> want(3);
  want[0] = r0;
  for (std::size_t t = 1; t < 3; ++t) {
    want[t] = g[0] + g[1] * std::max(y[t - 1], 0.0) + g[2] * std::max(-y[t - 1], 0.0) + g[3] * q[t - 1] +
              g[4] * want[t - 1];
  }
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(r[t], want[t], 1e-12);
}

TEST(Lift, ZeroResidualModel) {
  const CaviarParams b{{0.1, 0.2, 0.3, 0.4}};
  const auto out = lift_residual_params({std::vector<double>(5, 0.0)}, b, {});
  EXPECT_EQ(out.beta, (std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.0}));
  EXPECT_EQ(out.gamma, (std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.0}));
}

TEST(Lift, RowByRow) {
  const double g = 0.7;
  const auto out = lift_residual_params({{0, 0, 0, 0, g}}, {{0, 0, 0, 0}}, {});
  EXPECT_EQ(out.gamma, (std::vector<double>{0, 0, 0, -g, g}));
  EXPECT_THROW(lift_residual_params({{0, 0, 0, 0}}, {{0, 0, 0, 0}}, {}), InputError);
  EXPECT_THROW(lift_residual_params({{0, 0, 0, 0, 0}}, {{0, 0, 0}}, {}), InputError);
}

TEST(Lift, FilterEquivalenceAcrossSpecs) {
  std::mt19937_64 rng(8);
  const auto y = iid_normal(400, 9);
  for (SpecKind kind : {SpecKind::AS, SpecKind::SAV}) {
    for (int p = 1; p <= 2; ++p) {
      for (int u = 1; u <= 3; ++u) {
        const CaviarSpec spec{kind, p, u};
        // Keep both recursions contractive so paths stay bounded.
        auto b = random_vec(spec.caviar_dim(), rng, -0.1, 0.1);
        auto g = random_vec(spec.joint_dim(), rng, -0.1, 0.1);
        const double q0 = -1.4, r0 = -0.6;
        const auto q = caviar_filter({b}, spec, y, q0);
        const auto r = residual_filter({g}, spec, y, q.q, r0);
        const auto lifted = lift_residual_params({g}, {b}, spec);
        const auto joint = caesar_filter(lifted, spec, y, q0, q0 + r0);
        for (std::size_t t = 0; t < y.size(); ++t) {
          ASSERT_NEAR(joint.q[t], q.q[t], 1e-10);
          ASSERT_NEAR(joint.e[t] - joint.q[t], r[t], 1e-10);
        }
      }
    }
  }
}

TEST(Forecast, TrivialModels) {
  const RecentState st{{0.5}, {-1.0}, {-2.0}};
  const auto z = caesar_forecast(CaesarParams{std::vector<double>(5, 0.0), std::vector<double>(5, 0.0)}, {}, st);
  EXPECT_EQ(z.first, 0.0);
  EXPECT_EQ(z.second, 0.0);
  const auto echo = caesar_forecast(CaesarParams{{0, 0, 0, 1, 0}, {0, 0, 0, 0, 1}}, {}, st);
  EXPECT_EQ(echo.first, -1.0);
  EXPECT_EQ(echo.second, -2.0);
  EXPECT_THROW(caesar_forecast(CaesarParams{{0, 0, 0, 1, 0}, {0, 0, 0, 0, 1}}, {SpecKind::AS, 2, 1}, st), InputError);
}

TEST(Forecast, EqualsNextFilterElement) {
  std::mt19937_64 rng(10);
  const auto y = iid_normal(120, 11);
  for (int trial = 0; trial < 20; ++trial) {
    const CaviarSpec spec{SpecKind::AS, 1 + trial % 3, 1 + trial % 2};
    CaesarParams prm{random_vec(spec.joint_dim(), rng, -0.2, 0.2), random_vec(spec.joint_dim(), rng, -0.2, 0.2)};
    const auto path = caesar_filter(prm, spec, y, -1.0, -1.5);
    RecentState st;
    st.y.assign(y.end() - spec.p, y.end());
    st.q.assign(path.q.end() - spec.u, path.q.end());
    st.e.assign(path.e.end() - spec.u, path.e.end());
    const auto f = caesar_forecast(prm, spec, st);
    EXPECT_NEAR(f.first, path.next_q, 1e-12);
    EXPECT_NEAR(f.second, path.next_e, 1e-12);
  }
}

TEST(Stability, CompanionChecks) {
  EXPECT_TRUE(detail::companion_stable({0.9}, 1));
  EXPECT_FALSE(detail::companion_stable({1.01}, 1));
  // Rotation-like block with modulus 0.95 and a real pair with root 1.02.
  EXPECT_TRUE(detail::companion_stable({0.95 * std::cos(0.3), -0.95 * std::sin(0.3), 0.95 * std::sin(0.3),
                                        0.95 * std::cos(0.3)},
                                       2));
  EXPECT_FALSE(detail::companion_stable({1.02, 5.0, 0.0, 0.3}, 2));
  // Triangular 3x3 with a large off-diagonal but small eigenvalues.
  EXPECT_TRUE(detail::companion_stable({0.5, 30.0, 0.0, 0.0, 0.6, 10.0, 0.0, 0.0, 0.7}, 3));
  EXPECT_FALSE(detail::companion_stable({0.5, 0.0, 0.0, 0.0, 0.6, 0.0, 0.0, 0.0, 1.05}, 3));
}

TEST(CaesarFit, StepThreeNeverWorsensAndJsonRoundTrip) {
  const auto path = garch_simulate(GarchParams{}, 1500, 31);
  const auto m = caesar_fit(path.y, 0.05, {}, quick_config());
  ASSERT_FALSE(m.step3_skipped);
  EXPECT_LE(m.step_losses.step3_penalized_joint, m.step_losses.step3_start);
  for (const auto& tr : m.step2_audit.audit) EXPECT_LE(m.step_losses.step2_penalized_r, tr.start_f);
  EXPECT_DOUBLE_EQ(m.lambda_r, 10.0 / 1500);

  const auto back = caesar_model_from_json(to_json(m));
  EXPECT_EQ(back.params.beta, m.params.beta);
  EXPECT_EQ(back.params.gamma, m.params.gamma);
  const auto a = m.filter(path.y);
  const auto b = back.filter(path.y);
  EXPECT_EQ(a.q, b.q);
  EXPECT_EQ(a.e, b.e);
}

TEST(CaesarFit, StepOneMatchesStandaloneCaviar) {
  const auto path = garch_simulate(GarchParams{}, 800, 32);
  const auto m = caesar_fit(path.y, 0.025, {}, quick_config(5));
  const auto c = caviar_fit(path.y, 0.025, {}, quick_config(5));
  EXPECT_EQ(m.caviar_params.beta, c.params.beta);
}

TEST(CaesarFit, BarreraOnlySkipsJointStep) {
  auto cfg = quick_config();
  cfg.loss_variant = LossVariant::BarreraOnly;
  const auto path = garch_simulate(GarchParams{}, 800, 33);
  const auto m = caesar_fit(path.y, 0.05, {}, cfg);
  EXPECT_TRUE(m.step3_audit.audit.empty());
  EXPECT_EQ(m.step_losses.step3_penalized_joint, m.step_losses.step3_start);
  const auto lifted = lift_residual_params({m.step2_audit.x}, {m.caviar_params.beta}, m.spec);
  EXPECT_NEAR(m.params.gamma[3], lifted.gamma[3], 1e-15);
}

TEST(CaesarFit, NoCrossPinsCrossTerms) {
  auto cfg = quick_config();
  cfg.no_cross = true;
  cfg.n_starts = 30;
  const auto path = garch_simulate(GarchParams{}, 800, 34);
  const auto m = caesar_fit(path.y, 0.05, {}, cfg);
  EXPECT_EQ(m.params.beta[4], 0.0);
  EXPECT_EQ(m.params.gamma[3], 0.0);
  EXPECT_TRUE(std::isfinite(m.step_losses.step3_penalized_joint));
}

TEST(CaesarFit, ConstantSeriesIsDegenerate) {
  const std::vector<double> y(100, 0.0);
  const auto m = caesar_fit(y, 0.05, {}, quick_config());
  EXPECT_TRUE(m.degenerate);
}

TEST(CaesarFit, OutOfSampleMonotonicity) {
  std::vector<double> rates;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto path = garch_simulate(GarchParams{}, 1750, 700 + s);
    const std::span<const double> y(path.y);
    const auto m = caesar_fit(y.first(1500), 0.05, {}, quick_config(s));
    const auto f = m.filter(y);
    std::size_t ok = 0;
    for (std::size_t t = 1500; t < 1750; ++t) ok += f.e[t] <= f.q[t] ? 1 : 0;
    rates.push_back(static_cast<double>(ok) / 250.0);
  }
  std::sort(rates.begin(), rates.end());
  EXPECT_GE(0.5 * (rates[4] + rates[5]), 0.99);
}
