#include <gtest/gtest.h>

#include <cmath>

#include "rankreg/simgen.hpp"

using namespace rankreg;

namespace {

ScenarioConfig pic(int n, double cens, std::uint64_t seed = 1) {
  ScenarioConfig c;
  c.kind = ScenarioKind::Pic1;
  c.n = n;
  c.censoring = cens;
  c.seed = seed;
  return c;
}

ScenarioConfig dc(int n, double l, double r, std::uint64_t seed = 1) {
  ScenarioConfig c;
  c.kind = ScenarioKind::Dc1;
  c.n = n;
  c.left_rate = l;
  c.right_rate = r;
  c.seed = seed;
  return c;
}

bool same(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].lower != b[i].lower || a[i].upper != b[i].upper || a[i].delta != b[i].delta ||
        a[i].covariates != b[i].covariates || a[i].cluster != b[i].cluster)
      return false;
  return true;
}

}  // namespace

TEST(GenPic, SeedReproducible) {
  EXPECT_TRUE(same(gen_pic(pic(100, 0.3, 5)), gen_pic(pic(100, 0.3, 5))));
  EXPECT_FALSE(same(gen_pic(pic(100, 0.3, 5)), gen_pic(pic(100, 0.3, 6))));
  EXPECT_FALSE(same(gen_pic(pic(100, 0.3, 5), 0), gen_pic(pic(100, 0.3, 5), 1)));
}

TEST(GenPic, CalibratedCensoringAtLargeN) {
  for (double target : {0.3, 0.6}) {
    const auto d = gen_pic(pic(10000, target, 21));
    EXPECT_NEAR(d.censored_fraction(), target, 0.03) << target;
  }
}

TEST(GenPic, BracketsFollowTheExaminationScheme) {
  const auto d = gen_pic(pic(2000, 0.5, 3));
  for (const auto& o : d.observations()) {
    if (o.delta) continue;
    if (o.upper == kInf) {
      EXPECT_GT(o.lower, kFollowUp - 1.0);
      EXPECT_LT(o.lower, kFollowUp);
    } else {
      EXPECT_LT(o.lower, o.upper);
      EXPECT_GE(o.upper - o.lower, 0.1 - 1e-12);
      EXPECT_LE(o.upper - o.lower, 1.0 + 1e-12);
    }
  }
  const auto c = composition(d);
  EXPECT_NEAR(c.exact + c.left + c.right + c.interval, 1.0, 1e-12);
  EXPECT_GT(c.interval, 0.0);
}

TEST(GenPic, RejectsDegenerateRequests) {
  EXPECT_THROW(gen_pic(pic(100, 1.0)), std::invalid_argument);
  EXPECT_THROW(gen_pic(pic(100, 0.0)), std::invalid_argument);
  EXPECT_THROW(gen_pic(pic(10, 0.3)), std::invalid_argument);
  // p0 is confined to (0.1, 1]: 97% censoring is out of reach
  EXPECT_THROW(gen_pic(pic(100, 0.97)), CalibrationError);
}

TEST(GenDc, CalibratedRatesAtLargeN) {
  const auto d = gen_dc(dc(10000, 0.15, 0.15, 8));
  const auto c = composition(d);
  EXPECT_NEAR(c.left, 0.15, 0.03);
  EXPECT_NEAR(c.right, 0.15, 0.03);
  EXPECT_EQ(c.interval, 0.0);
  const auto d2 = gen_dc(dc(10000, 0.3, 0.3, 8));
  EXPECT_NEAR(composition(d2).left, 0.3, 0.03);
  EXPECT_NEAR(composition(d2).right, 0.3, 0.03);
}

TEST(GenDc, SeedReproducible) { EXPECT_TRUE(same(gen_dc(dc(80, 0.2, 0.1, 4)), gen_dc(dc(80, 0.2, 0.1, 4)))); }

TEST(GenDc, CensoringBoundsIgnoreCovariatesAtZero) {
  // With X1 = X2 = 0 both scale factors are 1.
  simgen_detail::Latent l{0.0, 0.0, 1.0, -1};
  const auto a = simgen_detail::dc_outcome(l, 3.0, 9.0, 0.25, 0.5);
  simgen_detail::Latent l2{0.0, 0.0, 100.0, -1};
  const auto b = simgen_detail::dc_outcome(l2, 3.0, 9.0, 0.25, 0.5);
  EXPECT_EQ(b.type, 2);
  EXPECT_DOUBLE_EQ(std::log(b.t_tilde), (-6.0 + 9.0 * 0.25) + (6.0 + 3.0 * 0.5));
  EXPECT_EQ(a.type, 1);
}

TEST(GenDc, RejectsInfeasibleRates) {
  EXPECT_THROW(gen_dc(dc(100, 0.6, 0.5)), std::invalid_argument);
  EXPECT_THROW(gen_dc(dc(100, 0.0, 0.5)), std::invalid_argument);
}

TEST(GenClustered, SizesAndFrailtyMean) {
  ScenarioConfig c;
  c.kind = ScenarioKind::PicClustered;
  c.n = 3000;
  c.theta = 1.0;
  c.seed = 2;
  const auto d = gen_clustered(c);
  EXPECT_EQ(d.n_clusters(), 3000u);
  std::vector<int> hist(12, 0);
  for (std::size_t k = 0; k < d.n_clusters(); ++k) {
    const auto m = d.cluster_size(k);
    ASSERT_GE(m, 2u);
    ASSERT_LE(m, 11u);
    ++hist[m];
  }
  // deciles of nu give roughly equal counts per size
  for (int m = 2; m <= 11; ++m) EXPECT_NEAR(hist[m] / 3000.0, 0.1, 0.03);

  Engine eng = make_stream(99, 0, StreamTag::Data);
  double s = 0;
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) s += simgen_detail::draw_cluster(1.0, eng).nu;
  EXPECT_NEAR(s / draws, 1.0, 0.03);
}

TEST(GenClustered, DcOverlay) {
  ScenarioConfig c;
  c.kind = ScenarioKind::DcClustered;
  c.n = 1000;
  c.seed = 4;
  const auto d = gen_clustered(c);
  const auto comp = composition(d);
  EXPECT_NEAR(comp.left, 0.15, 0.03);
  EXPECT_NEAR(comp.right, 0.15, 0.03);
}

TEST(ClusterSize, DecileMapping) {
  EXPECT_EQ(simgen_detail::cluster_size_for(1e-9, 1.0), 2);
  EXPECT_EQ(simgen_detail::cluster_size_for(50.0, 1.0), 11);
  // median of the unit exponential sits at the 5th decile boundary
  EXPECT_EQ(simgen_detail::cluster_size_for(std::log(2.0) * 1.0001, 1.0), 7);
}

TEST(RunMcStudy, DeterministicAcrossThreadsAndReportsComposition) {
  StudyConfig sc;
  sc.scenario = pic(60, 0.3, 12);
  sc.replicates = 8;
  sc.resample.R = 30;
  sc.resample.seed = 5;
  sc.fits = {FitOption{}, FitOption{{WeightKind::LogRank, ClusterWeight::unit()}}};
  sc.threads = 1;
  const auto a = run_mc_study(sc);
  sc.threads = 3;
  const auto b = run_mc_study(sc);
  ASSERT_EQ(a.methods.size(), 2u);
  EXPECT_EQ(a.replicates + a.failures, 8);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(a.methods[m].rows[j].bias, b.methods[m].rows[j].bias);
      EXPECT_EQ(a.methods[m].rows[j].ase, b.methods[m].rows[j].ase);
      EXPECT_GE(a.methods[m].rows[j].cp, 0.0);
      EXPECT_LE(a.methods[m].rows[j].cp, 1.0);
      EXPECT_GE(a.methods[m].rows[j].ese, 0.0);
    }
  EXPECT_NEAR(a.composition.exact + a.composition.left + a.composition.right + a.composition.interval, 1.0, 1e-12);
  EXPECT_EQ(a.methods[0].option.label(), "gehan");
  EXPECT_EQ(a.methods[1].option.label(), "logrank");
}

TEST(RunMcStudy, RelativeEfficiencyPairsAdjustedWithUnadjusted) {
  StudyConfig sc;
  sc.scenario.kind = ScenarioKind::PicClustered;
  sc.scenario.n = 25;
  sc.scenario.seed = 3;
  sc.replicates = 4;
  sc.estimate_variance = false;
  sc.fits = {FitOption{{WeightKind::Gehan, ClusterWeight::unit()}},
             FitOption{{WeightKind::Gehan, ClusterWeight::inverse_size()}}};
  const auto r = run_mc_study(sc);
  ASSERT_EQ(r.efficiencies.size(), 1u);
  EXPECT_EQ(r.efficiencies[0].numerator, "gehan");
  EXPECT_EQ(r.efficiencies[0].denominator, "gehan/inverse");
  EXPECT_DOUBLE_EQ(r.efficiencies[0].values[0], r.methods[0].rows[0].mse / r.methods[1].rows[0].mse);
  EXPECT_TRUE(std::isnan(r.methods[0].rows[0].ase));
}
