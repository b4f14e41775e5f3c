#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "metavrft/errors.hpp"
#include "metavrft/signals.hpp"
#include "oracles.hpp"

using namespace metavrft;

namespace {

const TransferFunction kM({0.0, 0.0609}, {1.0, -0.9391}, 0.02);

TransferFunction family(double kappa, double p2) {
  return TransferFunction({0.0, 0.0, kappa}, oracle::multiply({1.0, -0.9975}, {1.0, -p2}), 0.02);
}

}  // namespace

TEST(Seeds, DerivedStreamsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(1, "input"), derive_seed(1, "input"));
  EXPECT_NE(derive_seed(1, "input"), derive_seed(2, "input"));
  EXPECT_NE(derive_seed(1, "input"), derive_seed(1, "noise"));
  EXPECT_NE(derive_seed(1, "noise", 0), derive_seed(1, "noise", 1));
}

TEST(WhiteNoise, ZeroStdGivesZeros) {
  const Signal s = white_noise(10, 0.0, 3);
  EXPECT_TRUE(std::all_of(s.begin(), s.end(), [](double x) { return x == 0.0; }));
  EXPECT_THROW(white_noise(10, -1.0, 3), UsageError);
}

TEST(WhiteNoise, SampleStatisticsConverge) {
  const Signal s = white_noise(100000, 10.0, 42);
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / s.size();
  EXPECT_NEAR(mean, 0.0, 0.02 * 10.0);
  EXPECT_NEAR(sample_std(s) / 10.0, 1.0, 0.02);
}

TEST(OpenLoop, NoiseFreeEqualsSimulation) {
  const auto g = family(2.0, 0.4);
  const Signal u = white_noise(550, 2.0, 1);
  const Dataset d = generate_open_loop(g, u, 0.0, 9);
  const Signal ref = oracle::filter(g, u);
  ASSERT_EQ(d.size(), 550u);
  for (std::size_t t = 0; t < d.size(); ++t) EXPECT_NEAR(d.y[t], ref[t], 1e-9);
  EXPECT_EQ(d.noise_std, 0.0);
  EXPECT_EQ(d.kind, DatasetKind::kOpenLoop);
  EXPECT_DOUBLE_EQ(d.ts, 0.02);
}

TEST(OpenLoop, ProtocolLengthAndReproducibility) {
  const auto g = family(4.0, 0.1);
  const Signal u = white_noise(static_cast<std::size_t>(11.0 / 0.02), 2.0, 5);
  const Dataset a = generate_open_loop(g, u, 10.0, 77);
  const Dataset b = generate_open_loop(g, u, 10.0, 77);
  const Dataset c = generate_open_loop(g, u, 10.0, 78);
  EXPECT_EQ(a.size(), 550u);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(a.y, c.y);
}

TEST(OpenLoop, RejectsUnstablePlant) {
  EXPECT_THROW(generate_open_loop(TransferFunction({0.0, 1.0}, {1.0, -1.0}), Signal(10, 1.0), 0.0, 1),
               NumericalError);
}

TEST(ClosedLoop, ZeroControllerRecordsNoiseOnly) {
  const Signal r(150, 1000.0);
  const Dataset d = simulate_closed_loop(family(2.0, 0.5), TransferFunction(), r, 10.0, 5);
  const Signal v = white_noise(150, 10.0, 5);
  ASSERT_EQ(d.size(), 150u);
  for (std::size_t t = 0; t < 150; ++t) {
    EXPECT_DOUBLE_EQ(d.u[t], 0.0);
    EXPECT_NEAR(d.y[t], v[t], 1e-12);
  }
  EXPECT_EQ(d.kind, DatasetKind::kClosedLoop);
  EXPECT_EQ(d.reference, r);
}

TEST(ClosedLoop, NoiseFreeMatchesFeedbackSimulation) {
  const auto g = family(3.0, 0.5);
  const auto c = combine(pi_basis(0.02), {0.01, 0.002});
  const Signal r(150, 1000.0);
  const Dataset d = simulate_closed_loop(g, c, r, 0.0, 1);
  const Signal ref = oracle::loop(c, g, r);
  const Signal tf = simulate(feedback(c, g), r);
  for (std::size_t t = 0; t < r.size(); ++t) {
    EXPECT_NEAR(d.y[t], ref[t], 1e-8);
    EXPECT_NEAR(d.y[t], tf[t], 1e-8);
  }
  EXPECT_FALSE(d.unstable);
}

TEST(ClosedLoop, SettlesAtClosedLoopDcGain) {
  const auto g = TransferFunction({0.0, 0.5}, {1.0, -0.5});
  const auto c = TransferFunction::gain(0.8);
  const Dataset d = simulate_closed_loop(g, c, Signal(400, 1000.0), 0.0, 1);
  const double dc = feedback(c, g).dc_gain();
  EXPECT_NEAR(d.y.back(), 1000.0 * dc, 1e-6);
}

TEST(ClosedLoop, DirectFeedthroughLoopIsSolved) {
  // Static loop y = 2u, u = 0.5 (r - y): y = r / 2.
  const Dataset d = simulate_closed_loop(TransferFunction::gain(2.0), TransferFunction::gain(0.5),
                                         Signal(5, 4.0), 0.0, 1);
  for (double y : d.y) EXPECT_NEAR(y, 2.0, 1e-12);
  EXPECT_THROW(simulate_closed_loop(TransferFunction::gain(1.0), TransferFunction::gain(-1.0),
                                    Signal(5, 1.0), 0.0, 1),
               NumericalError);
}

TEST(ClosedLoop, DivergenceIsFlaggedAndTruncated) {
  const auto g = family(5.0, 0.9);
  const auto c = TransferFunction::gain(-5.0);
  const Dataset d = simulate_closed_loop(g, c, Signal(5000, 1000.0), 0.0, 1);
  EXPECT_TRUE(d.unstable);
  EXPECT_LT(d.size(), 5000u);
  EXPECT_EQ(d.u.size(), d.size());
  EXPECT_EQ(d.reference.size(), d.size());
  for (double y : d.y) EXPECT_TRUE(std::isfinite(y));
}

TEST(VirtualReference, InvertsReferenceModel) {
  const Signal r = white_noise(550, 100.0, 3);
  const Signal y = simulate(kM, r);
  const VirtualReference vr = virtual_reference(kM, y);
  EXPECT_EQ(vr.delay, 1u);
  EXPECT_EQ(vr.valid_range.first, 1u);
  EXPECT_EQ(vr.valid_range.second, 550u);
  EXPECT_EQ(vr.valid_range.second - vr.valid_range.first, 549u);
  ASSERT_EQ(vr.r.size(), 549u);
  for (std::size_t s = 0; s < vr.r.size(); ++s) EXPECT_NEAR(vr.r[s], r[s], 1e-8);
}

TEST(VirtualReference, ReconstructsArbitraryOutput) {
  const Signal y = white_noise(300, 5.0, 8);
  const VirtualReference vr = virtual_reference(kM, y);
  Signal padded = vr.r;
  const Signal back = simulate(kM, padded);
  // M r_v(t) reproduces y(t + d) for t in the valid range.
  for (std::size_t s = 0; s + 1 < back.size(); ++s) {
    EXPECT_NEAR(back[s + 1], y[s + 1], 1e-8);
  }
}

TEST(VirtualReference, RejectsInvalidModels) {
  const Signal y(20, 1.0);
  EXPECT_THROW(virtual_reference(TransferFunction::gain(1.0), y), NumericalError);
  EXPECT_THROW(virtual_reference(TransferFunction(), y), NumericalError);
  EXPECT_THROW(virtual_reference(TransferFunction({0.0, 1.0}, {1.0, -1.2}), y), NumericalError);
  // Zero at z = 2.
  EXPECT_THROW(virtual_reference(TransferFunction({0.0, 1.0, -2.0}, {1.0, -0.5}), y), NumericalError);
}

TEST(Prefilter, WhiteModeIsScaledReferenceShape) {
  const Signal u = white_noise(550, 2.0, 4);
  const Prefilter l = design_prefilter(kM, TransferFunction::gain(1.0, 0.02), u, true);
  const TransferFunction xi = TransferFunction::gain(1.0, 0.02) - kM;
  EXPECT_NEAR(l.gain, 1.0 / sample_std(u), 1e-15);
  EXPECT_NEAR(sample_std(u), 2.0, 0.15);
  const TransferFunction expected = (1.0 / sample_std(u)) * (kM * xi);
  for (double w : {0.0, 0.1, 1.0, 3.0}) {
    EXPECT_NEAR(std::abs(l.combined().eval(w) - expected.eval(w)), 0.0, 1e-12);
  }
  EXPECT_THROW(design_prefilter(kM, TransferFunction::gain(1.0), Signal(20, 1.0), true),
               NumericalError);
}

TEST(Prefilter, SpectralModeWhitensColoredInput) {
  const Signal w = white_noise(20000, 1.0, 6);
  const TransferFunction color({1.0}, {1.0, -0.8});
  const Signal u = simulate(color, w);
  const TransferFunction one = TransferFunction::gain(1.0);
  const Prefilter spec = design_prefilter(kM, one, u, false);
  const Prefilter flat = design_prefilter(kM, one, u, true);
  const TransferFunction xi = one - kM;
  bool differs = false;
  for (int i = 0; i <= 40; ++i) {
    const double om = M_PI * (0.05 + 0.9 * i / 40.0);
    // |L|^2 Phi_u should equal |M Xi|^2 when L absorbs the spectral factor.
    const double phi = 1.0 / std::norm(1.0 - 0.8 * std::polar(1.0, -om));
    const double ratio = std::norm(spec.combined().eval(om)) * phi / std::norm((kM * xi).eval(om));
    EXPECT_LT(std::abs(10.0 * std::log10(ratio)), 3.0) << "omega " << om;
    if (std::abs(spec.combined().eval(om)) > 1.5 * std::abs(flat.combined().eval(om)) ||
        std::abs(spec.combined().eval(om)) < std::abs(flat.combined().eval(om)) / 1.5) {
      differs = true;
    }
  }
  EXPECT_TRUE(differs);
}

TEST(Snr, DecibelRatio) {
  EXPECT_NEAR(snr_db({10.0, -10.0}, {1.0, 1.0}), 20.0, 1e-12);
  EXPECT_THROW(snr_db({1.0}, {0.0}), NumericalError);
}

TEST(DatasetValidate, Invariants) {
  Dataset d;
  d.u = {1.0, 2.0};
  d.y = {1.0};
  EXPECT_THROW(d.validate(), UsageError);
  d.y = {1.0, 2.0};
  EXPECT_NO_THROW(d.validate());
  d.noise_std = -1.0;
  EXPECT_THROW(d.validate(), UsageError);
  d.noise_std = 0.0;
  d.kind = DatasetKind::kClosedLoop;
  EXPECT_THROW(d.validate(), UsageError);
  d.reference = {1.0, 1.0};
  EXPECT_NO_THROW(d.validate());
}
