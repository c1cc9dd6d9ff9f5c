#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rankreg/gehan_ranks.hpp"

using namespace rankreg;

namespace {

Vector x0() { return Vector::Zero(1); }
IntervalObservation exact(double t) { return from_pic_record(true, t, 0, 0, x0()); }
IntervalObservation left(double t) { return from_dc_record(t, false, false, true, x0()); }
IntervalObservation right(double t) { return from_dc_record(t, false, true, false, x0()); }
IntervalObservation interval(double u, double v) { return from_pic_record(false, 0, u, v, x0()); }

// {1, 2-, 3, 4+, 5}
std::vector<IntervalObservation> toy() { return {exact(1), left(2), exact(3), right(4), exact(5)}; }

// Brute-force score straight from the sign table: x_i definitely greater than
// x_j when lower_i >= upper_j, ties between equal exact values excluded.
std::vector<double> brute_scores(const std::vector<IntervalObservation>& s) {
  std::vector<double> g(s.size(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (i == j) continue;
      const bool tie = s[i].delta && s[j].delta && s[i].lower == s[j].lower;
      if (tie) continue;
      if (s[j].upper <= s[i].lower) g[i] += 1;
      if (s[i].upper <= s[j].lower) g[i] -= 1;
    }
  return g;
}

}  // namespace

TEST(DefiniteOrdering, ToyPairs) {
  EXPECT_EQ(definite_ordering(left(2), exact(3)), Ordering::DefinitelyLess);
  EXPECT_EQ(definite_ordering(exact(1), left(2)), Ordering::Indeterminate);
  EXPECT_EQ(definite_ordering(right(4), exact(5)), Ordering::Indeterminate);
  EXPECT_EQ(definite_ordering(exact(2), exact(2)), Ordering::Indeterminate);
  EXPECT_EQ(definite_ordering(interval(1, 2), exact(2)), Ordering::DefinitelyLess);
}

TEST(DefiniteOrdering, Antisymmetric) {
  auto s = toy();
  s.push_back(interval(1.5, 3.5));
  s.push_back(interval(3.5, 6));
  for (const auto& a : s)
    for (const auto& b : s) {
      const auto ab = definite_ordering(a, b), ba = definite_ordering(b, a);
      EXPECT_EQ(ab == Ordering::DefinitelyLess, ba == Ordering::DefinitelyGreater);
      EXPECT_EQ(ab == Ordering::Indeterminate, ba == Ordering::Indeterminate);
    }
}

TEST(GehanScores, ToyExample) {
  const auto g = gehan_scores(toy());
  EXPECT_EQ(g, (std::vector<double>{-3, -3, 0, 3, 3}));
  EXPECT_EQ(gehan_scores({exact(2), exact(2)}), (std::vector<double>{0, 0}));
  EXPECT_EQ(gehan_scores({exact(1), exact(2)}), (std::vector<double>{-1, 1}));
}

TEST(GehanScores, MatchesBruteForceAndSumsToZero) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ud(0.5, 5.0);
  std::uniform_int_distribution<int> kind(0, 3);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<IntervalObservation> s;
    for (int k = 0; k < 25; ++k) {
      const double a = std::round(ud(rng) * 2) / 2, b = a + std::round(ud(rng) * 2) / 2;
      switch (kind(rng)) {
        case 0: s.push_back(exact(a)); break;
        case 1: s.push_back(left(a)); break;
        case 2: s.push_back(right(a)); break;
        default: s.push_back(interval(a, b)); break;
      }
    }
    const auto g = gehan_scores(s);
    EXPECT_EQ(g, brute_scores(s));
    double sum = 0;
    for (double v : g) sum += v;
    EXPECT_EQ(sum, 0.0);
  }
}

TEST(TwoSampleTest, ToySplit) {
  auto r = two_sample_test({exact(1), left(2)}, {exact(3), right(4), exact(5)});
  EXPECT_EQ(r.statistic, -6.0);
  EXPECT_NEAR(r.variance, 10.8, 1e-12);
  EXPECT_NEAR(r.z, -6.0 / std::sqrt(10.8), 1e-12);
  EXPECT_NEAR(r.z, -1.8257, 1e-4);
  EXPECT_NEAR(r.p_value, 0.0679, 1e-3);
}

TEST(TwoSampleTest, SingletonGroups) {
  auto r = two_sample_test({exact(1)}, {exact(2)});
  EXPECT_EQ(r.statistic, -1.0);
  EXPECT_DOUBLE_EQ(r.variance, 1.0);
  EXPECT_DOUBLE_EQ(r.z, -1.0);
  auto same = two_sample_test({exact(2)}, {exact(2)});
  EXPECT_EQ(same.statistic, 0.0);
  EXPECT_TRUE(same.degenerate);
  EXPECT_EQ(same.p_value, 1.0);
}

TEST(TwoSampleTest, EmptyGroupRejected) { EXPECT_THROW(two_sample_test({}, {exact(1)}), DataError); }

TEST(TwoSampleTest, SwapAndTimeScaleInvariance) {
  auto g1 = std::vector<IntervalObservation>{exact(1), left(2), interval(2, 4)};
  auto g2 = std::vector<IntervalObservation>{exact(3), right(4), exact(5), interval(0.5, 1.5)};
  auto a = two_sample_test(g1, g2);
  auto b = two_sample_test(g2, g1);
  EXPECT_EQ(a.statistic, -b.statistic);
  EXPECT_DOUBLE_EQ(a.variance, b.variance);
  EXPECT_DOUBLE_EQ(std::abs(a.z), std::abs(b.z));
  auto scale = [](std::vector<IntervalObservation> v) {
    for (auto& o : v) {
      o.lower *= 3.7;
      o.upper *= 3.7;
    }
    return v;
  };
  auto c = two_sample_test(scale(g1), scale(g2));
  EXPECT_EQ(c.statistic, a.statistic);
  EXPECT_EQ(c.variance, a.variance);
}
