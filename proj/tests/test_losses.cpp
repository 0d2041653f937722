#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <random>
#include <vector>

#include "tailrisk/losses.hpp"

using namespace tailrisk;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

struct NormalTail {
  double var;
  double es;
};

NormalTail normal_tail(double theta) {
  boost::math::normal n;
  const double z = boost::math::quantile(n, theta);
  return {z, -boost::math::pdf(n, z) / theta};
}

}  // namespace

TEST(Pinball, Examples) {
  std::vector<double> y{0.3, -1.2, 2.0};
  EXPECT_EQ(pinball_loss(y, y, 0.05).value, 0.0);
  std::vector<double> one{1.0}, zero{0.0};
  EXPECT_DOUBLE_EQ(pinball_loss(zero, one, 0.05).value, 0.05);
  std::vector<double> short_q{0.0, 0.0};
  EXPECT_THROW(pinball_loss(short_q, y, 0.05), InputError);
}

TEST(Pinball, MatchesDirectOracle) {
  auto y = normals(20, 1);
  auto q = normals(20, 2);
  const double theta = 0.07;
  double s = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double u = y[t] - q[t];
    s += u >= 0 ? theta * u : (theta - 1.0) * u;
  }
  const auto l = pinball_loss(q, y, theta);
  EXPECT_NEAR(l.value, s / 20.0, 1e-12);
  ASSERT_EQ(l.per_time.size(), 20u);
}

TEST(Pinball, NonnegativeAndZeroOnlyAtEquality) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> th(0.01, 0.99);
  for (int trial = 0; trial < 200; ++trial) {
    auto y = normals(15, 100 + trial);
    auto q = normals(15, 900 + trial);
    const double theta = th(rng);
    const auto l = pinball_loss(q, y, theta);
    EXPECT_GT(l.value, 0.0);
    for (double v : l.per_time) EXPECT_GE(v, 0.0);
    EXPECT_EQ(pinball_loss(y, y, theta).value, 0.0);
  }
}

TEST(Barrera, Examples) {
  std::vector<double> r0(4, 0.0), y{1, 2, 3, 4}, q{0, 0, 0, 0};
  EXPECT_EQ(barrera_loss(r0, y, q, 0.05).value, 0.0);
  std::vector<double> r{-1.0}, z{0.0}, one{1.0}, half{-0.5};
  EXPECT_DOUBLE_EQ(barrera_loss(r, one, z, 0.05).value, 1.0);
  EXPECT_DOUBLE_EQ(barrera_loss(r, half, z, 0.5).value, 0.0);
  EXPECT_THROW(barrera_loss(r, y, q, 0.05), InputError);
}

TEST(Barrera, MinimizedAtTrueGap) {
  const double theta = 0.05;
  const auto tail = normal_tail(theta);
  const auto y = normals(200000, 17);
  const std::vector<double> q(y.size(), tail.var);
  double best_r = 0.0;
  double best = INFINITY;
  for (double r = -1.5; r <= 0.0; r += 0.005) {
    const std::vector<double> rr(y.size(), r);
    const double l = barrera_loss(rr, y, q, theta).value;
    if (l < best) {
      best = l;
      best_r = r;
    }
  }
  EXPECT_NEAR(best_r, tail.es - tail.var, 0.05);
}

TEST(Patton, Examples) {
  std::vector<double> m1{-1.0}, z{0.0};
  EXPECT_DOUBLE_EQ(patton_loss(m1, m1, z, 0.05).value, 1.0);
  std::vector<double> e{-2.0}, y{-2.0};
  EXPECT_NEAR(patton_loss(e, m1, y, 0.5).value, 1.5 + std::log(2.0), 1e-12);
  EXPECT_NEAR(patton_loss(e, m1, y, 0.5).value, 2.1931, 1e-4);
  std::vector<double> ez{-1.0, 0.0}, q2{-1.0, -1.0}, y2{0.0, 0.0};
  EXPECT_THROW(patton_loss(ez, q2, y2, 0.05), DomainError);
  EXPECT_THROW(patton_loss(m1, q2, y2, 0.05), InputError);
}

TEST(Patton, MatchesDirectOracle) {
  auto y = normals(25, 4);
  auto q = normals(25, 5);
  std::vector<double> e(25);
  for (std::size_t t = 0; t < 25; ++t) {
    q[t] = -std::fabs(q[t]) - 0.1;
    e[t] = q[t] - 0.3 - 0.1 * static_cast<double>(t % 3);
  }
  const double theta = 0.025;
  double s = 0.0;
  for (std::size_t t = 0; t < 25; ++t) {
    const double ind = y[t] <= q[t] ? 1.0 : 0.0;
    s += q[t] / e[t] - ind * (q[t] - y[t]) / (theta * e[t]) + std::log(-e[t]);
  }
  EXPECT_NEAR(patton_loss(e, q, y, theta).value, s / 25.0, 1e-12);
  EXPECT_EQ(penalized_joint_mean(e, q, y, theta, 0.0, 0.0), patton_loss(e, q, y, theta).value);
}

TEST(Patton, TrueConstantsBeatPerturbations) {
  const double theta = 0.05;
  const auto tail = normal_tail(theta);
  std::mt19937_64 rng(2024);
  // Below ~0.2 the sampling noise at T=10000 rivals the curvature of the loss.
  std::uniform_real_distribution<double> radius(0.2, 0.6);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto y = normals(10000, 5000 + trial);
    auto loss_at = [&](double q, double e) {
      const std::vector<double> qq(y.size(), q), ee(y.size(), e);
      return patton_loss(ee, qq, y, theta).value;
    };
    const double truth = loss_at(tail.var, tail.es);
    bool ok = true;
    for (int k = 0; k < 50;) {
      const double rad = radius(rng);
      const double a = angle(rng);
      const double q = tail.var + rad * std::cos(a);
      const double e = tail.es + rad * std::sin(a);
      if (!(e < q && q < 0.0)) continue;
      ++k;
      if (loss_at(q, e) < truth) ok = false;
    }
    wins += ok ? 1 : 0;
  }
  EXPECT_GE(wins, 95);
}

TEST(PenalizedR, Examples) {
  std::vector<double> r{2.0}, q{0.0}, y{1.0};
  EXPECT_DOUBLE_EQ(penalized_r_loss(r, y, q, 0.05, 10.0).value, 24.0);
  EXPECT_THROW(penalized_r_loss(r, y, q, 0.05, -1.0), InputError);
}

TEST(PenalizedR, ReducesToBase) {
  auto y = normals(30, 8);
  auto q = normals(30, 9);
  auto r = normals(30, 10);
  const auto base = barrera_loss(r, y, q, 0.05);
  EXPECT_EQ(penalized_r_loss(r, y, q, 0.05, 0.0).value, base.value);
  for (double& v : r) v = -std::fabs(v);
  EXPECT_EQ(penalized_r_loss(r, y, q, 0.05, 3.0).value, barrera_loss(r, y, q, 0.05).value);
}

TEST(PenalizedR, PerTimeSumsToValue) {
  auto y = normals(40, 11);
  auto q = normals(40, 12);
  auto r = normals(40, 13);
  const auto l = penalized_r_loss(r, y, q, 0.05, 0.25);
  double s = 0.0;
  for (double v : l.per_time) s += v;
  EXPECT_NEAR(s / 40.0, l.value, 1e-12);
  EXPECT_NEAR(penalized_r_mean(r, y, q, 0.05, 0.25), l.value, 1e-12);
}

TEST(PenalizedJoint, Examples) {
  std::vector<double> e{-1.0}, q{0.5}, y{1.0};
  const double base = patton_loss(e, q, y, 0.05).value;
  EXPECT_DOUBLE_EQ(penalized_joint_loss(e, q, y, 0.05, 0.0, 10.0).value, base + 5.0);
  std::vector<double> e2{-2.0, -1.5}, q2{-1.0, -0.5}, y2{0.3, -3.0};
  EXPECT_EQ(penalized_joint_loss(e2, q2, y2, 0.05, 4.0, 4.0).value, patton_loss(e2, q2, y2, 0.05).value);
}

TEST(PenalizedJoint, ReducesToBaseAndCrossingPenalty) {
  auto y = normals(30, 14);
  std::vector<double> q(30), e(30);
  for (std::size_t t = 0; t < 30; ++t) {
    q[t] = -1.0 - 0.01 * static_cast<double>(t);
    e[t] = t % 4 == 0 ? q[t] + 0.2 : q[t] - 0.5;
  }
  const double base = patton_loss(e, q, y, 0.05).value;
  EXPECT_EQ(penalized_joint_loss(e, q, y, 0.05, 0.0, 0.0).value, base);
  // 8 crossings of 0.2 each
  EXPECT_NEAR(penalized_joint_loss(e, q, y, 0.05, 1.0, 0.0).value, base + 8 * 0.2, 1e-12);
  EXPECT_NEAR(penalized_joint_mean(e, q, y, 0.05, 1.0, 0.0), base + 8 * 0.2, 1e-12);
}

TEST(Kernels, PattonMeanIsInfiniteOutsideDomain) {
  std::vector<double> e{-1.0, 0.0}, q{-1.0, -1.0}, y{0.0, 0.0};
  EXPECT_TRUE(std::isinf(penalized_joint_mean(e, q, y, 0.05, 0.0, 0.0)));
  EXPECT_NEAR(pinball_mean(q, y, 0.05), pinball_loss(q, y, 0.05).value, 1e-15);
}
