#include "avsep/metrics.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace avsep;
using avsep::testing::brute_force_bss;
using avsep::testing::orthogonal_noise;

namespace {

Eigen::ArrayXd gaussian(std::mt19937_64& rng, Eigen::Index n, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Eigen::ArrayXd x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

Eigen::ArrayXd delayed(const Eigen::ArrayXd& x, int d) {
  Eigen::ArrayXd y = Eigen::ArrayXd::Zero(x.size());
  y.tail(x.size() - d) = x.head(x.size() - d);
  return y;
}

}  // namespace

TEST(CappedRatio, Limits) {
  EXPECT_EQ(capped_ratio_db(0.0, 1.0), -60.0);
  EXPECT_EQ(capped_ratio_db(1.0, 0.0), 60.0);
  EXPECT_EQ(capped_ratio_db(1e-20, 1.0), -60.0);
  EXPECT_NEAR(capped_ratio_db(10.0, 1.0), 10.0, 1e-12);
}

TEST(BssEval, MatchesNormalEquationOracle) {
  std::mt19937_64 rng(1);
  const int n = 700, taps = 16;
  for (int trial = 0; trial < 4; ++trial) {
    const std::vector<Eigen::ArrayXd> refs{gaussian(rng, n), gaussian(rng, n)};
    const BssEvaluator eval(refs, taps);
    // Filtered target, leaked interferer, and white noise.
    const Eigen::ArrayXd est = 0.8 * refs[0] + 0.3 * delayed(refs[0], 5) + 0.2 * delayed(refs[1], 2) +
                               gaussian(rng, n, 0.1 + 0.1 * trial);
    for (int target : {0, 1}) {
      const auto d = eval.decompose(est, target);
      const auto o = brute_force_bss(refs, est, target, taps);
      EXPECT_LT((d.target.matrix() - o.target).norm(), 1e-9);
      EXPECT_LT((d.interference.matrix() - o.interference).norm(), 1e-9);
      EXPECT_LT((d.artifacts.matrix() - o.artifacts).norm(), 1e-9);
      const BssScores s = scores_from(d);
      EXPECT_NEAR(s.sdr, o.sdr, 1e-6);
      EXPECT_NEAR(s.sir, o.sir, 1e-6);
      EXPECT_NEAR(s.sar, o.sar, 1e-6);
    }
  }
}

TEST(BssEval, OrthogonalNoiseGivesTenDecibels) {
  std::mt19937_64 rng(2);
  const int n = 2000, taps = 32;
  const std::vector<Eigen::ArrayXd> refs{gaussian(rng, n), gaussian(rng, n)};
  const double e = refs[0].matrix().squaredNorm();
  const Eigen::ArrayXd est = refs[0] + orthogonal_noise(refs, taps, 0.1 * e, rng);
  const auto r = BssEvaluator(refs, taps).evaluate({est, refs[1] + 0.0 * est});
  EXPECT_NEAR(r.scores[0].sdr, 10.0, 1e-6);
  EXPECT_NEAR(r.scores[0].sar, 10.0, 1e-6);
  EXPECT_EQ(r.scores[0].sir, 60.0);
}

TEST(BssEval, FilteredCopyIsNearlyPerfect) {
  std::mt19937_64 rng(3);
  std::vector<Eigen::ArrayXd> refs{gaussian(rng, 1500), gaussian(rng, 1500)};
  for (auto& r : refs) r.tail(50).setZero();  // so the delay loses nothing
  const auto r = BssEvaluator(refs, 32).evaluate({0.5 * delayed(refs[0], 7), refs[1]});
  EXPECT_GT(r.scores[0].sdr, 55.0);
  EXPECT_GT(r.scores[1].sdr, 55.0);
}

TEST(BssEval, ChoosesBestPermutation) {
  std::mt19937_64 rng(4);
  const std::vector<Eigen::ArrayXd> refs{gaussian(rng, 1000), gaussian(rng, 1000)};
  const Eigen::ArrayXd e0 = refs[0] + gaussian(rng, 1000, 0.3);
  const Eigen::ArrayXd e1 = refs[1] + gaussian(rng, 1000, 0.1);
  const auto swapped = BssEvaluator(refs, 8).evaluate({e1, e0});
  EXPECT_EQ(swapped.estimate_for, (std::vector<int>{1, 0}));
  const auto straight = BssEvaluator(refs, 8).evaluate({e0, e1});
  EXPECT_EQ(straight.estimate_for, (std::vector<int>{0, 1}));
  EXPECT_NEAR(swapped.scores[0].sdr, straight.scores[0].sdr, 1e-9);
  EXPECT_GT(straight.scores[1].sdr, straight.scores[0].sdr);
}

TEST(BssEval, SilentEstimateScoresFloor) {
  std::mt19937_64 rng(5);
  const std::vector<Eigen::ArrayXd> refs{gaussian(rng, 500), gaussian(rng, 500)};
  const auto r = BssEvaluator(refs, 8).evaluate({Eigen::ArrayXd::Zero(500), refs[1]});
  EXPECT_EQ(r.scores[0].sdr, -60.0);
  EXPECT_EQ(r.scores[0].sir, -60.0);
  EXPECT_EQ(r.scores[0].sar, -60.0);
}

TEST(BssEval, RejectsBadInput) {
  std::mt19937_64 rng(6);
  const Eigen::ArrayXd a = gaussian(rng, 300);
  EXPECT_THROW(BssEvaluator({a, Eigen::ArrayXd::Zero(300)}, 8), InvalidInput);
  EXPECT_THROW(BssEvaluator({a, gaussian(rng, 200)}, 8), InvalidInput);
  EXPECT_THROW(BssEvaluator({}, 8), InvalidInput);
  EXPECT_THROW(BssEvaluator({a}, 0), InvalidInput);
  const BssEvaluator e({a}, 4);
  EXPECT_THROW(e.evaluate({gaussian(rng, 299)}), InvalidInput);
  EXPECT_THROW(e.evaluate({a, a}), InvalidInput);
  EXPECT_THROW(e.decompose(a, 1), InvalidInput);
}

TEST(BssEval, ClipWrapperAgreesWithEvaluator) {
  std::mt19937_64 rng(7);
  AudioClip r0{gaussian(rng, 400)}, r1{gaussian(rng, 400)};
  AudioClip e0{r0.samples + 0.2 * r1.samples}, e1{r1.samples + gaussian(rng, 400, 0.2)};
  const auto a = bss_eval({r0, r1}, {e0, e1}, 8);
  const auto b = BssEvaluator({r0.samples, r1.samples}, 8).evaluate({e0.samples, e1.samples});
  EXPECT_EQ(a.scores[0].sdr, b.scores[0].sdr);
  EXPECT_EQ(a.scores[1].sar, b.scores[1].sar);
}

TEST(MetricsCsv, RowsAndMean) {
  std::vector<MetricRow> rows{{"a", 0, {1, 2, 3}}, {"a", 1, {3, 4, 5}}};
  std::ostringstream out;
  write_metrics_csv(out, rows);
  EXPECT_EQ(out.str(), "sample_id,source_idx,sdr,sir,sar\na,0,1,2,3\na,1,3,4,5\nmean,,2,3,4\n");
  const BssScores m = mean_scores({});
  EXPECT_EQ(m.sdr, 0.0);
}
