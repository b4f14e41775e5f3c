#ifndef METAVRFT_METADESIGN_HPP_
#define METAVRFT_METADESIGN_HPP_

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metavrft/lti.hpp"
#include "metavrft/signals.hpp"
#include "metavrft/spectral.hpp"

namespace metavrft {

struct MetaEntry {
  ControllerParams controller;
  Dataset open_loop;    // D_T^k, same input as the new plant's D_T
  Dataset closed_loop;  // step test of C_k on its own plant
  double delta_k = 0.5;
};

struct MetaDataset {
  std::vector<MetaEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::vector<TransferFunction> controllers() const;
  // Throws UsageError on an empty set, mixed sample times or inputs.
  void validate() const;
};

enum class IndexNormalization {
  kNone,  // raw sums as defined
  kMax,   // J^{d,IV} / J^{d,IV}(0), S_k / max S, J_k / max J
};

struct DesignConfig {
  double lambda_j = 30.0;
  double lambda_s = 300.0;
  std::optional<double> delta;
  int ell = 200;
  double solver_tol = 1e-10;
  int max_iter = 10000;
  bool white_input = true;
  IndexNormalization normalization = IndexNormalization::kMax;
  TransferFunction w = TransferFunction::gain(1.0);
};

// J(alpha) = alpha' H alpha - 2 f' alpha + c.
struct QuadraticForm {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  double c = 0.0;
  // Set when cond(H) > 1e12.
  bool ill_conditioned = false;

  double value(const Eigen::VectorXd& alpha) const;
};

// S_k = sum_t (y(t) - y_k(t))^2.
double similarity_index(const Dataset& d_new, const Dataset& d_k);
// J_k = sum_t (y_d(t) - y_cl(t))^2.
double performance_index(const Signal& desired, const Dataset& closed_loop);

// Per-sample IV cost sum_t || zeta(t) (u_L(t) - phi(t)' alpha) ||^2 with
// phi(t) = [C_k L e_v(t)]_k from d_T and zeta(t) the same from d_T_iv.
QuadraticForm build_iv_objective(const Dataset& d_T, const Dataset& d_T_iv,
                                 const std::vector<TransferFunction>& controllers,
                                 const TransferFunction& m,
                                 const TransferFunction& w = TransferFunction::gain(1.0),
                                 bool white_input = true);
QuadraticForm build_iv_objective(const Dataset& d_T, const Dataset& d_T_iv,
                                 const MetaDataset& meta,
                                 const TransferFunction& m,
                                 const TransferFunction& w = TransferFunction::gain(1.0),
                                 bool white_input = true);

struct MetaIndices {
  Eigen::VectorXd S;
  Eigen::VectorXd J;
};

MetaIndices compute_indices(const Dataset& d_T, const MetaDataset& meta,
                            const TransferFunction& m);

// Full objective alpha' P alpha + q' alpha + r after normalization.
struct MetaObjective {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  double r = 0.0;
  double value(const Eigen::VectorXd& alpha) const;
};

MetaObjective assemble_objective(const QuadraticForm& objective,
                                 const MetaIndices& indices,
                                 const DesignConfig& config);

struct SolveReport {
  double objective = 0.0;
  // Post-hoc stability index at `ell`; NaN when it could not be evaluated.
  double delta_hat = 0.0;
  int ell = 0;
  std::vector<std::string> active_constraints;
  double kkt_stationarity = 0.0;
  double primal_infeasibility = 0.0;
  std::map<std::string, double> timings_ms;
};

struct MetaSolution {
  std::vector<double> alpha;
  SolveReport report;
};

MetaSolution solve_meta(const QuadraticForm& objective, const MetaIndices& indices,
                        const DesignConfig& config, const Dataset& d_T,
                        const TransferFunction& m,
                        const std::vector<TransferFunction>& controllers);
MetaSolution solve_meta(const QuadraticForm& objective, const MetaDataset& meta,
                        const DesignConfig& config, const Dataset& d_T,
                        const TransferFunction& m);

// Builds the objective and solves; timings include the objective assembly.
MetaSolution meta_tune(const Dataset& d_T, const Dataset& d_T_iv,
                       const MetaDataset& meta, const TransferFunction& m,
                       const DesignConfig& config);

// min over the simplex of max_i |b_i + A_i alpha| / |Phi_u(omega_i)|.
double minimal_feasible_delta(const StabilityModel& model);

TransferFunction materialize_meta_controller(const MetaDataset& meta,
                                             const std::vector<double>& alpha);
// sum_k alpha_k theta_k when all entries share basis and sample time.
std::optional<ControllerParams> combine_params(const MetaDataset& meta,
                                               const std::vector<double>& alpha);

}  // namespace metavrft

#endif  // METAVRFT_METADESIGN_HPP_
