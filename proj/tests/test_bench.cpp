#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "metavrft/bench.hpp"
#include "oracles.hpp"

using namespace metavrft;

namespace {

BenchConfig small_config() {
  BenchConfig c;
  c.seed = 3;
  c.n_meta = 4;
  c.n_new = 3;
  c.eval_runs = 3;
  return c;
}

void expect_simplex(const std::vector<double>& alpha) {
  if (alpha.empty()) return;
  double sum = 0.0;
  for (double a : alpha) {
    EXPECT_GE(a, -1e-8);
    sum += a;
  }
  EXPECT_NEAR(sum, 1.0, 1e-8);
}

}  // namespace

TEST(Family, ExtremeMemberAndStability) {
  const MotorFamily f;
  const TransferFunction g = f.member(1.0, 0.0);
  EXPECT_TRUE(g.approx_equal(TransferFunction({0.0, 0.0, 1.0}, {1.0, -0.9975}, 0.02), 1e-15));
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Motor m = sample_motor(s, f);
    EXPECT_TRUE(is_stable(m.g));
    EXPECT_GE(m.kappa, 1.0);
    EXPECT_LE(m.kappa, 5.75);
    EXPECT_GE(m.p2, 0.0);
    EXPECT_LE(m.p2, 0.9);
  }
}

TEST(Family, UniformSampleMeans) {
  double kappa = 0.0;
  double p2 = 0.0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    const Motor m = sample_motor(derive_seed(1, "family-test", s));
    kappa += m.kappa;
    p2 += m.p2;
  }
  EXPECT_NEAR(kappa / n, 3.375, 0.02 * 3.375);
  EXPECT_NEAR(p2 / n, 0.45, 0.02 * 0.45);
}

TEST(Family, SimilarityLevelFromCorners) {
  // Independent: long impulse-response sums over the four corners.
  const MotorFamily f;
  std::vector<TransferFunction> corners;
  for (double k : {1.0, 5.75}) {
    for (double p : {0.0, 0.9}) corners.push_back(f.member(k, p));
  }
  double best = 0.0;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    for (std::size_t j = i + 1; j < corners.size(); ++j) {
      best = std::max(best, oracle::h2(corners[i] - corners[j], 40000));
    }
  }
  EXPECT_NEAR(family_similarity(f), best, 1e-6 * best);
  EXPECT_NEAR(best, 784.55, 0.05 * 784.55);
}

TEST(Matching, PerfectAndDivergedRuns) {
  const TransferFunction m = reference_model();
  const Signal r(150, 1000.0);
  Dataset cl;
  cl.y = simulate(m, r);
  cl.u = r;
  cl.reference = r;
  cl.kind = DatasetKind::kClosedLoop;
  EXPECT_NEAR(matching_error(cl, m, r), 0.0, 1e-12);
  cl.y[10] += 3.0;
  cl.y[20] -= 4.0;
  EXPECT_NEAR(matching_error(cl, m, r), 5.0, 1e-9);
  cl.unstable = true;
  EXPECT_TRUE(std::isinf(matching_error(cl, m, r)));
}

TEST(Evaluate, UnstableLoopIsCappedAndFlagged) {
  const BenchConfig c = small_config();
  const TransferFunction g = c.family.member(5.0, 0.9);
  const Evaluation bad = evaluate_controller(g, TransferFunction::gain(-1.0, 0.02), c, 1);
  EXPECT_TRUE(bad.unstable);
  EXPECT_EQ(bad.error, c.cap);
  EXPECT_TRUE(std::isinf(bad.raw));
  EXPECT_EQ(bad.runs.size(), static_cast<std::size_t>(c.eval_runs));

  const TransferFunction pi = combine(pi_basis(0.02), {0.005, 0.005});
  ASSERT_TRUE(is_stable(feedback(pi, g)));
  const Evaluation ok = evaluate_controller(g, pi, c, 1);
  EXPECT_FALSE(ok.unstable);
  EXPECT_EQ(ok.error, ok.raw);
  EXPECT_EQ(ok.raw, median(ok.runs));
  const Evaluation again = evaluate_controller(g, pi, c, 1);
  EXPECT_EQ(ok.runs, again.runs);
}

TEST(Helpers, MedianAndOutliers) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_EQ(count_outliers({1.0, 1.0, 1.0, 1.6, 10.0}), 2);
  EXPECT_EQ(count_outliers({1.0, std::numeric_limits<double>::infinity(), 1.0}), 1);
}

TEST(MetaBuild, NestedAndParallelInvariant) {
  BenchConfig c = small_config();
  const MetaBuild small = build_meta_dataset(c, 2);
  c.jobs = 4;
  const MetaBuild big = build_meta_dataset(c, 4);
  ASSERT_EQ(small.meta.size(), 2u);
  ASSERT_EQ(big.meta.size(), 4u);
  EXPECT_EQ(small.input, big.input);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(small.meta.entries[k].controller.theta, big.meta.entries[k].controller.theta);
    EXPECT_EQ(small.meta.entries[k].open_loop.y, big.meta.entries[k].open_loop.y);
    EXPECT_EQ(small.motors[k].kappa, big.motors[k].kappa);
  }
  for (const auto& e : big.meta.entries) EXPECT_EQ(e.open_loop.u, big.input);
  EXPECT_NO_THROW(big.meta.validate());
}

TEST(Comparison, DeterministicAccountingAndFeasibility) {
  BenchConfig c = small_config();
  const ComparisonResult a = run_comparison(c);
  c.jobs = 3;
  const ComparisonResult b = run_comparison(c);
  ASSERT_EQ(a.motors.size(), 3u);
  const ReportFiles ra = report_comparison(a, c);
  const ReportFiles rb = report_comparison(b, c);
  EXPECT_EQ(ra.csv, rb.csv);
  EXPECT_EQ(ra.summary.dump(), rb.summary.dump());
  for (const MotorResult& m : a.motors) {
    ASSERT_EQ(m.methods.size(), 4u);
    EXPECT_EQ(m.method("meta").experiments, 2);
    EXPECT_EQ(m.method("cvrft").experiments, 2);
    EXPECT_EQ(m.method("vrft").experiments, 2);
    EXPECT_EQ(m.method("trivial").experiments, 0);
    for (const MethodResult& r : m.methods) {
      EXPECT_NEAR(r.tuning_ms, r.solver_ms + r.experiments * c.experiment_seconds * 1000.0, 1e-6);
      expect_simplex(r.alpha);
      // Only unstable loops are saturated at the cap.
      if (r.eval.unstable) {
        EXPECT_EQ(r.eval.error, c.cap);
      }
    }
    const auto& trivial = m.method("trivial").alpha;
    for (double x : trivial) EXPECT_DOUBLE_EQ(x, 1.0 / trivial.size());
    expect_simplex(m.lambda0.alpha);
  }
  EXPECT_NE(ra.summary.dump().find("not implemented (out of scope)"), std::string::npos);
}

TEST(NonDeteriorating, NoiseFreeObjectiveNeverWorse) {
  BenchConfig c = small_config();
  const NonDetResult r = run_non_deteriorating(c, {300.0});
  EXPECT_EQ(r.noise_free_total, static_cast<int>(c.n_meta));
  EXPECT_EQ(r.noise_free_ok, r.noise_free_total);
  EXPECT_EQ(r.runs.size(), c.n_meta);
  for (const auto& run : r.runs) expect_simplex(run.alpha);
}

TEST(SizeSweep, NestedSizes) {
  BenchConfig c = small_config();
  const SizeSweepResult r = run_size_sweep(c, 2, 4);
  EXPECT_EQ(r.sizes, (std::vector<std::size_t>{2, 3, 4}));
  ASSERT_EQ(r.errors.size(), 3u);
  for (const auto& row : r.errors) EXPECT_EQ(row.size(), c.n_new);
}

TEST(Sensitivity, GridShape) {
  BenchConfig c = small_config();
  const SensitivityResult r = run_sensitivity(c, {0.0, 300.0}, {30.0});
  ASSERT_EQ(r.mean_error.size(), 1u);
  ASSERT_EQ(r.mean_error[0].size(), 2u);
  const ReportFiles files = report_sensitivity(r, c);
  EXPECT_EQ(files.csv.rfind("lambda_j,lambda_s,mean_error,display_error,unstable", 0), 0u);
}

TEST(Snr, DeskScaleMatchesPaperLevel) {
  BenchConfig c;
  EXPECT_NEAR(snr_study(c, 200), 21.01, 1.0);
}
