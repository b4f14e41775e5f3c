#ifndef METAVRFT_VRFT_HPP_
#define METAVRFT_VRFT_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "metavrft/lti.hpp"
#include "metavrft/signals.hpp"

namespace metavrft {

struct StabilitySpec {
  double delta = 0.5;
  int ell = 200;
};

struct VrftProblem {
  Dataset dataset;
  std::optional<Dataset> dataset_iv;
  TransferFunction m;
  TransferFunction w = TransferFunction::gain(1.0);
  ControllerBasis basis;
  std::optional<StabilitySpec> stability;
  bool white_input = true;
};

// Filtered virtual-reference regression: u_l(s) ~ sum_j theta_j phi[j](s),
// with phi[j] = beta_j L e_v, for s = 0 .. T - d - 1.
struct VrftRegression {
  Signal u_l;
  std::vector<Signal> phi;
};

VrftRegression vrft_regression(const Dataset& dataset,
                               const TransferFunction& m,
                               const Prefilter& prefilter,
                               const std::vector<TransferFunction>& regressors);

struct VrftResult {
  ControllerParams params;
  // Normalized value of the minimized criterion.
  double objective = 0.0;
  // Window actually used by the stability constraint, 0 when unconstrained.
  int ell = 0;
  double delta_hat = 0.0;
};

ControllerParams vrft_tune(const VrftProblem& problem);
VrftResult vrft_tune_detailed(const VrftProblem& problem);

// Value of the (IV or plain) VRFT criterion at theta, same normalization as
// VrftResult::objective.
double vrft_objective(const VrftProblem& problem,
                      const std::vector<double>& theta);

// 1 / (1 - M): with this weighting L reduces to M / sigma_u.
TransferFunction inverse_complementary_weight(const TransferFunction& m);

struct EntryConfig {
  TransferFunction m;
  TransferFunction w = TransferFunction::gain(1.0);
  std::string basis = "pi";
  std::optional<StabilitySpec> stability = StabilitySpec{};
  double step_amplitude = 1000.0;
  std::size_t horizon = 150;
  double noise_std = 10.0;
  std::uint64_t seed = 0;
};

struct MetaEntryTuning {
  ControllerParams controller;
  Dataset closed_loop;
};

// Tunes C_k by (constrained) VRFT on g_data and runs the step test in closed
// loop. Returns nothing when the test loop diverges.
std::optional<MetaEntryTuning> build_meta_controller_entry(
    const Dataset& g_data, const Dataset& g_data_iv, const TransferFunction& g,
    const EntryConfig& config);

}  // namespace metavrft

#endif  // METAVRFT_VRFT_HPP_
