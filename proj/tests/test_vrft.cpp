#include <gtest/gtest.h>

#include <random>

#include "metavrft/errors.hpp"
#include "metavrft/spectral.hpp"
#include "metavrft/vrft.hpp"
#include "oracles.hpp"

using namespace metavrft;

namespace {

constexpr double kTs = 0.02;
const TransferFunction kM({0.0, 0.0609}, {1.0, -0.9391}, kTs);

TransferFunction plant(double kappa, double a) {
  return TransferFunction({0.0, kappa}, {1.0, -a}, kTs);
}

// PI gains of M / (G (1 - M)) for the first-order plant above.
std::vector<double> ideal_theta(double kappa, double a) {
  const double c0 = 0.0609 / kappa;
  return {c0 * (1.0 + a) / 2.0, c0 * (1.0 - a) / kTs};
}

VrftProblem problem_for(const Dataset& d) {
  VrftProblem p;
  p.dataset = d;
  p.m = kM;
  p.w = TransferFunction::gain(1.0, kTs);
  p.basis = pi_basis(kTs);
  return p;
}

Dataset record(const TransferFunction& g, double noise, std::uint64_t seed, std::size_t n = 550) {
  return generate_open_loop(g, oracle::gaussian(n, 2.0, 1), noise, seed);
}

}  // namespace

TEST(Vrft, RecoversIdealController) {
  for (auto [kappa, a] : {std::pair{0.5, 0.6}, std::pair{2.0, 0.9}, std::pair{4.0, 0.1}}) {
    const auto theta = vrft_tune(problem_for(record(plant(kappa, a), 0.0, 0))).theta;
    const auto ref = ideal_theta(kappa, a);
    ASSERT_EQ(theta.size(), 2u);
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(theta[j] / ref[j], 1.0, 1e-6);
  }
}

TEST(Vrft, IdealControllerMatchesReferenceModel) {
  const auto theta = ideal_theta(1.5, 0.7);
  const TransferFunction t = minreal(feedback(combine(pi_basis(kTs), theta), plant(1.5, 0.7)));
  EXPECT_TRUE(t.approx_equal(kM, 1e-9));
}

TEST(Vrft, HomogeneousInDataScale) {
  const Dataset d = record(plant(2.0, 0.5), 10.0, 3);
  Dataset s = d;
  for (double& x : s.u) x *= 3.7;
  for (double& x : s.y) x *= 3.7;
  const auto a = vrft_tune(problem_for(d)).theta;
  const auto b = vrft_tune(problem_for(s)).theta;
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(a[j], b[j], 1e-10 * std::abs(a[j]));
}

TEST(Vrft, InstrumentalVariableMatchesLeastSquaresWithoutNoise) {
  const Dataset d = record(plant(2.0, 0.5), 0.0, 0);
  VrftProblem ls = problem_for(d);
  VrftProblem iv = ls;
  iv.dataset_iv = d;
  const auto a = vrft_tune(ls).theta;
  const auto b = vrft_tune(iv).theta;
  for (int j = 0; j < 2; ++j) EXPECT_NEAR(a[j], b[j], 1e-8 * std::abs(a[j]));
}

TEST(Vrft, InstrumentalVariableReducesNoiseBias) {
  // Averaged over seeds the IV estimate lands closer to the ideal gains.
  const auto g = plant(2.0, 0.8);
  const auto ref = ideal_theta(2.0, 0.8);
  double err_ls = 0.0;
  double err_iv = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    VrftProblem p = problem_for(record(g, 5.0, 100 + s, 2000));
    const auto a = vrft_tune(p).theta;
    p.dataset_iv = record(g, 5.0, 200 + s, 2000);
    const auto b = vrft_tune(p).theta;
    err_ls += std::abs(a[1] / ref[1] - 1.0);
    err_iv += std::abs(b[1] / ref[1] - 1.0);
  }
  EXPECT_LT(err_iv, err_ls);
}

TEST(Vrft, NormalEquationResidual) {
  const Dataset d = record(plant(3.0, 0.3), 10.0, 4);
  const VrftProblem p = problem_for(d);
  const auto theta = vrft_tune(p).theta;
  const Prefilter pf = design_prefilter(kM, p.w, d.u, true);
  const VrftRegression reg = vrft_regression(d, kM, pf, p.basis.elements);
  double scale = 0.0;
  std::vector<double> res(2, 0.0);
  for (std::size_t s = 0; s < reg.u_l.size(); ++s) {
    const double r = reg.u_l[s] - theta[0] * reg.phi[0][s] - theta[1] * reg.phi[1][s];
    for (int j = 0; j < 2; ++j) res[j] += reg.phi[j][s] * r;
    for (int j = 0; j < 2; ++j) scale = std::max(scale, std::abs(reg.phi[j][s]) * std::abs(reg.u_l[s]));
  }
  for (int j = 0; j < 2; ++j) EXPECT_LT(std::abs(res[j]), 1e-8 * scale * reg.u_l.size());
}

TEST(Vrft, LocallyOptimal) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (bool iv : {false, true}) {
    VrftProblem p = problem_for(record(plant(2.5, 0.4), 10.0, 6));
    if (iv) p.dataset_iv = record(plant(2.5, 0.4), 10.0, 7);
    const auto theta = vrft_tune(p).theta;
    const double best = vrft_objective(p, theta);
    EXPECT_NEAR(best, vrft_tune_detailed(p).objective, 1e-14);
    for (int k = 0; k < 100; ++k) {
      double x = g(rng);
      double y = g(rng);
      const double n = std::hypot(x, y);
      const std::vector<double> moved{theta[0] + 1e-3 * x / n, theta[1] + 1e-3 * y / n};
      EXPECT_LE(best, vrft_objective(p, moved));
    }
  }
}

TEST(Vrft, RankDeficientBasisNamesDirection) {
  VrftProblem p = problem_for(record(plant(2.0, 0.5), 1.0, 8));
  p.basis.elements.push_back(p.basis.elements[0]);
  try {
    vrft_tune(p);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("theta[0]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("theta[2]"), std::string::npos) << e.what();
  }
}

TEST(Vrft, ConstrainedRespectsBoundOrFails) {
  VrftProblem p = problem_for(record(plant(2.0, 0.5), 10.0, 9));
  p.stability = StabilitySpec{0.5, 200};
  const VrftResult r = vrft_tune_detailed(p);
  ASSERT_GT(r.ell, 0);
  const double dh = delta_hat(p.dataset, kM, p.basis.elements, r.params.theta, SpectralGrid(r.ell));
  EXPECT_LE(dh, 0.5 + 1e-6);
  EXPECT_NEAR(dh, r.delta_hat, 1e-9);
  // Unconstrained optimum is never worse in the criterion.
  VrftProblem free = p;
  free.stability.reset();
  EXPECT_LE(vrft_tune_detailed(free).objective, r.objective + 1e-12);

  p.stability = StabilitySpec{1e-4, 200};
  try {
    vrft_tune(p);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("larger delta"), std::string::npos);
  }
}

TEST(Vrft, IvDatasetMustRepeatInput) {
  VrftProblem p = problem_for(record(plant(2.0, 0.5), 1.0, 10));
  p.dataset_iv = generate_open_loop(plant(2.0, 0.5), oracle::gaussian(550, 2.0, 99), 1.0, 11);
  EXPECT_THROW(vrft_tune(p), UsageError);
}

TEST(Vrft, InverseComplementaryWeight) {
  const TransferFunction w = inverse_complementary_weight(kM);
  const TransferFunction xi = TransferFunction::gain(1.0, kTs) - kM;
  for (double om : {0.1, 1.0, 3.0}) EXPECT_NEAR(std::abs(w.eval(om) * xi.eval(om) - 1.0), 0.0, 1e-12);
}

TEST(MetaEntry, IdealPlantGivesModelResponse) {
  const auto g = plant(2.0, 0.6);
  const Dataset d = record(g, 0.0, 0);
  EntryConfig cfg;
  cfg.m = kM;
  cfg.w = TransferFunction::gain(1.0, kTs);
  cfg.noise_std = 0.0;
  const auto entry = build_meta_controller_entry(d, d, g, cfg);
  ASSERT_TRUE(entry.has_value());
  const Signal target = simulate(kM, Signal(150, 1000.0));
  ASSERT_EQ(entry->closed_loop.size(), 150u);
  // Relative to the 1000 rpm step.
  for (std::size_t t = 0; t < 150; ++t) EXPECT_NEAR(entry->closed_loop.y[t], target[t], 1e-6 * 1000.0);
  EXPECT_EQ(entry->closed_loop.reference, Signal(150, 1000.0));
}

TEST(MetaEntry, DestabilizingControllerIsRejected) {
  // Unconstrained tuning on a plant far from the first-order class.
  const TransferFunction g({0.0, 0.0, 5.0}, oracle::multiply({1.0, -0.9975}, {1.0, -0.9}), kTs);
  const Dataset d = generate_open_loop(g, oracle::gaussian(550, 2.0, 12), 10.0, 13);
  const Dataset iv = generate_open_loop(g, oracle::gaussian(550, 2.0, 12), 10.0, 14);
  EntryConfig cfg;
  cfg.m = kM;
  cfg.w = TransferFunction::gain(1.0, kTs);
  cfg.stability.reset();
  VrftProblem p = problem_for(d);
  p.dataset_iv = iv;
  const TransferFunction c = materialize(vrft_tune(p));
  const auto entry = build_meta_controller_entry(d, iv, g, cfg);
  EXPECT_EQ(entry.has_value(), is_stable(feedback(c, g)));
}
