#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "ibnn/metrics.hpp"
#include "ibnn/regions.hpp"
#include "ibnn/rng.hpp"

namespace ibnn {
namespace {

TEST(Region1D, MergesOverlapsOnConstruction) {
  Region1D r(0.1, {{1.0, 3.0}, {0.0, 2.0}, {5.0, 6.0}});
  ASSERT_EQ(r.intervals.size(), 2u);
  EXPECT_EQ(r.intervals[0].lo, 0.0);
  EXPECT_EQ(r.intervals[0].hi, 3.0);
  EXPECT_EQ(r.intervals[1].lo, 5.0);
  EXPECT_NEAR(r.total_width(), 4.0, 1e-15);
}

TEST(Region1D, TouchingIntervalsMerge) {
  Region1D r(0.1, {{0.0, 1.0}, {1.0, 2.0}});
  ASSERT_EQ(r.intervals.size(), 1u);
  EXPECT_EQ(r.intervals[0].hi, 2.0);
}

TEST(Region1D, Validation) {
  EXPECT_THROW(Region1D(0.0, {{0.0, 1.0}}), std::invalid_argument);
  EXPECT_THROW(Region1D(1.0, {{0.0, 1.0}}), std::invalid_argument);
  EXPECT_THROW(Region1D(0.1, {}), std::invalid_argument);
  EXPECT_THROW(Region1D(0.1, {{2.0, 1.0}}), std::invalid_argument);
}

TEST(Region1D, ContainsClosedEndpoints) {
  Region1D r(0.1, {{0.0, 1.0}, {2.0, 3.0}});
  EXPECT_TRUE(r.contains(0.0));
  EXPECT_TRUE(r.contains(1.0));
  EXPECT_TRUE(r.contains(2.5));
  EXPECT_FALSE(r.contains(1.5));
  EXPECT_FALSE(r.contains(-0.1));
}

TEST(Region1D, ContainsRegion) {
  Region1D big(0.1, {{0.0, 10.0}});
  Region1D small(0.1, {{1.0, 2.0}, {3.0, 4.0}});
  EXPECT_TRUE(big.contains(small));
  EXPECT_FALSE(small.contains(big));
  Region1D split(0.1, {{0.0, 2.0}, {3.0, 10.0}});
  Region1D spanning(0.1, {{1.0, 4.0}});
  EXPECT_FALSE(split.contains(spanning));
}

// z(0.975) = 1.959963984540054 from the normal quantile reference values.
TEST(HdrGaussian, QuantileOracle) {
  Region1D r = hdr_gaussian(0.0, 1.0, 0.05);
  ASSERT_EQ(r.intervals.size(), 1u);
  EXPECT_NEAR(r.intervals[0].lo, -1.959963984540054, 1e-9);
  EXPECT_NEAR(r.intervals[0].hi, 1.959963984540054, 1e-9);
  Region1D r2 = hdr_gaussian(2.0, 4.0, 0.2);
  EXPECT_NEAR(r2.intervals[0].lo, 2.0 - 1.2815515655446004 * 2.0, 1e-9);
  EXPECT_NEAR(r2.intervals[0].hi, 2.0 + 1.2815515655446004 * 2.0, 1e-9);
  EXPECT_TRUE(r.contains(0.0));
}

TEST(HdrGaussian, Validation) {
  // Zero variance degenerates to a point interval.
  Region1D point = hdr_gaussian(3.0, 0.0, 0.1);
  EXPECT_EQ(point.intervals[0].lo, 3.0);
  EXPECT_EQ(point.intervals[0].hi, 3.0);
  EXPECT_THROW(hdr_gaussian(0.0, -1.0, 0.1), std::invalid_argument);
  EXPECT_THROW(hdr_gaussian(0.0, 1.0, 0.0), std::invalid_argument);
}

TEST(HdrEmpiricalShortest, PicksDensestWindow) {
  // Ten tight values and ten spread ones; the half window is the cluster.
  std::vector<double> v;
  for (int i = 0; i < 10; ++i) v.push_back(0.1 * i);
  for (int i = 0; i < 10; ++i) v.push_back(5.0 + i);
  Region1D r = hdr_empirical_shortest(EmpiricalSample1D(v), 0.5);
  ASSERT_EQ(r.intervals.size(), 1u);
  EXPECT_DOUBLE_EQ(r.intervals[0].lo, 0.0);
  EXPECT_DOUBLE_EQ(r.intervals[0].hi, 0.9);
}

TEST(HdrEmpiricalShortest, TiesKeepFirstWindow) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(static_cast<double>(i));
  Region1D r = hdr_empirical_shortest(EmpiricalSample1D(v), 0.2);
  ASSERT_EQ(r.intervals.size(), 1u);
  EXPECT_DOUBLE_EQ(r.intervals[0].lo, 1.0);
  EXPECT_DOUBLE_EQ(r.intervals[0].hi, 80.0);
}

TEST(HdrEmpiricalShortest, RequiresTwentySamples) {
  std::vector<double> v(19, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  EXPECT_THROW(hdr_empirical_shortest(EmpiricalSample1D(v), 0.1),
               std::invalid_argument);
}

TEST(HdrGridDensity, SplitsBimodalSample) {
  RngStream rng(3, 0);
  std::vector<double> v;
  for (int i = 0; i < 250; ++i) v.push_back(rng.normal(0.0, 0.5));
  for (int i = 0; i < 250; ++i) v.push_back(rng.normal(8.0, 0.5));
  EmpiricalSample1D s(v);
  Region1D r = hdr_grid_density(s, 0.2);
  EXPECT_GE(r.intervals.size(), 2u);
  EXPECT_FALSE(r.contains(4.0));  // the density valley
  std::size_t inside = 0;
  for (double x : s.values)
    if (r.contains(x)) ++inside;
  EXPECT_GE(inside / static_cast<double>(s.size()), 0.75);
}

TEST(HdrGridDensity, CoversUnimodalSample) {
  RngStream rng(4, 0);
  std::vector<double> v;
  for (int i = 0; i < 500; ++i) v.push_back(rng.normal(1.0, 1.0));
  EmpiricalSample1D s(v);
  Region1D r = hdr_grid_density(s, 0.1);
  std::size_t inside = 0;
  for (double x : s.values)
    if (r.contains(x)) ++inside;
  EXPECT_GE(inside / static_cast<double>(s.size()), 0.85);
  EXPECT_TRUE(r.contains(1.0));
}

TEST(Hdr1d, DispatchesOnMethod) {
  RngStream rng(5, 0);
  std::vector<double> far;
  for (int i = 0; i < 200; ++i) far.push_back(rng.normal(10.0, 1.0));
  PredictiveSummary1D summary{0.0, 1.0, EmpiricalSample1D(far)};
  Region1D g = hdr_1d(summary, 0.1, HdrMethod::gaussian);
  Region1D e = hdr_1d(summary, 0.1, HdrMethod::empirical_shortest);
  EXPECT_TRUE(g.contains(0.0));
  EXPECT_FALSE(g.contains(10.0));
  EXPECT_TRUE(e.contains(10.0));
  EXPECT_FALSE(e.contains(0.0));
}

TEST(RegionUnion, MergesAcrossMembers) {
  Region1D a(0.1, {{0.0, 1.0}});
  Region1D b(0.1, {{1.0, 2.0}});
  Region1D c(0.1, {{4.0, 5.0}});
  Region1D u = region_union({a, b, c});
  ASSERT_EQ(u.intervals.size(), 2u);
  EXPECT_EQ(u.intervals[0].hi, 2.0);
  EXPECT_TRUE(u.contains(a));
  EXPECT_TRUE(u.contains(b));
  EXPECT_TRUE(u.contains(c));
}

TEST(RegionUnion, MixedLevelsRejected) {
  Region1D a(0.1, {{0.0, 1.0}});
  Region1D b(0.2, {{1.0, 2.0}});
  EXPECT_THROW(region_union({a, b}), std::invalid_argument);
  EXPECT_THROW(region_union({}), std::invalid_argument);
}

// Two well separated Gaussian members produce a two-piece region with the
// member quantile endpoints.
TEST(Ihdr, UnionOfMemberIntervals) {
  const double z = 1.6448536269514722;  // z(0.95)
  std::vector<PredictiveSummary1D> members{
      {0.0, 1.0, EmpiricalSample1D({0.0})},
      {30.0, 4.0, EmpiricalSample1D({30.0})}};
  Region1D r = ihdr(members, 0.1, HdrMethod::gaussian);
  ASSERT_EQ(r.intervals.size(), 2u);
  EXPECT_NEAR(r.intervals[0].lo, -z, 1e-9);
  EXPECT_NEAR(r.intervals[0].hi, z, 1e-9);
  EXPECT_NEAR(r.intervals[1].lo, 30.0 - 2.0 * z, 1e-9);
  EXPECT_NEAR(r.intervals[1].hi, 30.0 + 2.0 * z, 1e-9);
  for (const auto& m : members)
    EXPECT_TRUE(r.contains(hdr_gaussian(m.mean, m.var, 0.1)));
}

TEST(CredibleSet, PrefixMassOracle) {
  const CategoricalDist p({0.6, 0.3, 0.1});
  auto s1 = credible_set(p, 0.5);
  EXPECT_EQ(s1.labels, (std::vector<int>{0}));
  EXPECT_DOUBLE_EQ(s1.achieved_mass, 0.6);
  auto s2 = credible_set(p, 0.3);
  EXPECT_EQ(s2.labels, (std::vector<int>{0, 1}));
  EXPECT_NEAR(s2.achieved_mass, 0.9, 1e-15);
  auto s3 = credible_set(p, 0.05);
  EXPECT_EQ(s3.labels, (std::vector<int>{0, 1, 2}));
  EXPECT_NEAR(s3.achieved_mass, 1.0, 1e-12);
}

TEST(CredibleSet, TiesBreakByAscendingLabel) {
  const CategoricalDist p({0.4, 0.4, 0.2});
  auto s = credible_set(p, 0.5);
  EXPECT_EQ(s.labels, (std::vector<int>{0, 1}));
  EXPECT_NEAR(s.achieved_mass, 0.8, 1e-15);
}

TEST(CredibleSet, ExactBoundaryStops) {
  const CategoricalDist p({0.8, 0.2});
  auto s = credible_set(p, 0.2);
  EXPECT_EQ(s.labels, (std::vector<int>{0}));
  EXPECT_DOUBLE_EQ(s.achieved_mass, 0.8);
  EXPECT_THROW(credible_set(p, 0.0), std::invalid_argument);
}

TEST(ImpreciseCredibleSet, UnionWithMinMass) {
  const std::vector<CategoricalDist> members{CategoricalDist({0.7, 0.2, 0.1}),
                                             CategoricalDist({0.6, 0.3, 0.1})};
  auto s = imprecise_credible_set(members, 0.25);
  EXPECT_EQ(s.labels, (std::vector<int>{0, 1}));
  EXPECT_NEAR(s.achieved_mass, 0.9, 1e-15);
}

// Every member keeps at least 1 - alpha mass on the union, so the reported
// minimum does too.
TEST(ImpreciseCredibleSet, MinMassNeverBelowTarget) {
  RngStream rng(6, 0);
  for (int it = 0; it < 200; ++it) {
    std::vector<CategoricalDist> members;
    const std::size_t k = 1 + rng.next_u64() % 4;
    for (std::size_t m = 0; m < k; ++m) {
      std::vector<double> p(4);
      double sum = 0.0;
      for (auto& x : p) {
        x = rng.uniform(0.01, 1.0);
        sum += x;
      }
      for (auto& x : p) x /= sum;
      members.emplace_back(p);
    }
    const double alpha = rng.uniform(0.02, 0.5);
    auto s = imprecise_credible_set(members, alpha);
    EXPECT_GE(s.achieved_mass, 1.0 - alpha - 1e-12);
    for (const auto& m : members) {
      double mass = 0.0;
      for (int j : s.labels) mass += m.probs[static_cast<std::size_t>(j)];
      EXPECT_GE(mass, 1.0 - alpha - 1e-12);
    }
  }
}

StepBoxes make_boxes(const std::vector<std::vector<std::pair<double, double>>>&
                         step_dims) {
  StepBoxes boxes;
  for (const auto& step : step_dims) {
    std::vector<Region1D> dims;
    for (const auto& [lo, hi] : step) dims.push_back(Region1D(0.1, {{lo, hi}}));
    boxes.push_back(std::move(dims));
  }
  return boxes;
}

TEST(Coverage, OneStepCountsPairs) {
  // Instance 0 hits both steps, instance 1 hits one of two.
  std::vector<StepBoxes> regions{
      make_boxes({{{0.0, 1.0}}, {{0.0, 1.0}}}),
      make_boxes({{{0.0, 1.0}}, {{0.0, 1.0}}})};
  std::vector<StepTruth> truths{{{0.5}, {0.5}}, {{0.5}, {2.0}}};
  EXPECT_DOUBLE_EQ(one_step_coverage(regions, truths), 0.75);
  EXPECT_DOUBLE_EQ(multi_step_coverage(regions, truths), 0.5);
}

TEST(Coverage, MultiStepRequiresAllSteps) {
  std::vector<StepBoxes> regions{make_boxes({{{0.0, 1.0}}, {{0.0, 1.0}}})};
  std::vector<StepTruth> truths{{{0.5}, {1.5}}};
  EXPECT_DOUBLE_EQ(one_step_coverage(regions, truths), 0.5);
  EXPECT_DOUBLE_EQ(multi_step_coverage(regions, truths), 0.0);
}

TEST(Coverage, MultiDimBoxNeedsEveryDimension) {
  std::vector<StepBoxes> regions{
      make_boxes({{{0.0, 1.0}, {0.0, 1.0}}})};
  std::vector<StepTruth> hit{{{0.5, 0.5}}};
  std::vector<StepTruth> miss{{{0.5, 1.5}}};
  EXPECT_DOUBLE_EQ(one_step_coverage(regions, hit), 1.0);
  EXPECT_DOUBLE_EQ(one_step_coverage(regions, miss), 0.0);
}

TEST(Coverage, ReportAggregates) {
  std::vector<StepBoxes> regions{
      make_boxes({{{0.0, 1.0}}, {{0.0, 3.0}}})};
  std::vector<StepTruth> truths{{{0.5}, {0.5}}};
  CoverageReport r = coverage_report(regions, truths, 0.1);
  EXPECT_DOUBLE_EQ(r.one_step, 1.0);
  EXPECT_DOUBLE_EQ(r.multi_step, 1.0);
  EXPECT_DOUBLE_EQ(r.mean_region_width, 2.0);
  EXPECT_DOUBLE_EQ(r.alpha, 0.1);
  EXPECT_LE(r.multi_step, r.one_step + 1e-12);
}

TEST(Coverage, MismatchedShapesThrow) {
  std::vector<StepBoxes> regions{make_boxes({{{0.0, 1.0}}})};
  std::vector<StepTruth> truths{{{0.5}}, {{0.5}}};
  EXPECT_THROW(one_step_coverage(regions, truths), std::invalid_argument);
}

TEST(TUnsafe, StrictOutsideOpenBand) {
  EXPECT_DOUBLE_EQ(t_unsafe({80.0, 60.0, 310.0, 100.0}), 0.5);
  // Boundary values count as safe.
  EXPECT_DOUBLE_EQ(t_unsafe({70.0, 300.0}), 0.0);
  EXPECT_DOUBLE_EQ(t_unsafe({50.0}, 70.0, 300.0), 1.0);
  EXPECT_THROW(t_unsafe({}), std::invalid_argument);
}

TEST(PerfDiff, RelativeImprovement) {
  EXPECT_DOUBLE_EQ(perf_diff(10.0, 5.0).value(), 0.5);
  EXPECT_DOUBLE_EQ(perf_diff(5.0, 0.0).value(), 1.0);
  EXPECT_FALSE(perf_diff(0.0, 5.0).has_value());
  EXPECT_FALSE(perf_diff(0.0, 0.0).has_value());
  EXPECT_THROW(perf_diff(-1.0, 0.0), std::invalid_argument);
}

TEST(Spearman, PerfectAndReversed) {
  EXPECT_DOUBLE_EQ(spearman({1.0, 2.0, 3.0}, {10.0, 20.0, 30.0}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1.0, 2.0, 3.0}, {30.0, 20.0, 10.0}), -1.0);
}

// Midrank oracle: ranks of (1,1,2) are (1.5,1.5,3); Pearson against (1,2,3)
// gives 1.5/sqrt(1.5*2).
TEST(Spearman, MidranksOnTies) {
  EXPECT_NEAR(spearman({1.0, 1.0, 2.0}, {1.0, 2.0, 3.0}),
              0.8660254037844387, 1e-12);
}

TEST(Spearman, ConstantSequenceRejected) {
  EXPECT_THROW(spearman({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}),
               std::invalid_argument);
  EXPECT_THROW(spearman({1.0}, {1.0}), std::invalid_argument);
}

TEST(MonotoneTrend, FlagsAndCorrelation) {
  TrendReport up = monotone_trend({1.0, 1.0, 2.0});
  EXPECT_TRUE(up.is_nondecreasing);
  EXPECT_NEAR(up.spearman, 0.8660254037844387, 1e-12);
  TrendReport dip = monotone_trend({2.0, 1.0, 3.0});
  EXPECT_FALSE(dip.is_nondecreasing);
  TrendReport flat = monotone_trend({1.0, 1.0, 1.0});
  EXPECT_TRUE(flat.is_nondecreasing);
  EXPECT_DOUBLE_EQ(flat.spearman, 0.0);
  EXPECT_THROW(monotone_trend({1.0, 2.0}), std::invalid_argument);
}

}  // namespace
}  // namespace ibnn
