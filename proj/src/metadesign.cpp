#include "metavrft/metadesign.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "metavrft/errors.hpp"
#include "metavrft/qp.hpp"
#include "metavrft/vrft.hpp"

namespace metavrft {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

QpProblem simplex_qp(const Eigen::MatrixXd& P, const Eigen::VectorXd& q) {
  const Eigen::Index n = P.rows();
  QpProblem qp;
  qp.G = 2.0 * P;
  const double ridge = 1e-10 * std::max(qp.G.trace() / n, 1e-12);
  qp.G += ridge * Eigen::MatrixXd::Identity(n, n);
  qp.a = q;
  qp.E = Eigen::MatrixXd::Ones(1, n);
  qp.e = Eigen::VectorXd::Ones(1);
  qp.C = Eigen::MatrixXd::Identity(n, n);
  qp.c = Eigen::VectorXd::Zero(n);
  return qp;
}

ConeSet make_cones(const StabilityModel& model, double delta) {
  ConeSet cones;
  cones.b = model.b;
  cones.A = model.A;
  cones.radius = delta * model.phi_u.cwiseAbs();
  return cones;
}

std::string format_double(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

}  // namespace

std::vector<TransferFunction> MetaDataset::controllers() const {
  std::vector<TransferFunction> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(materialize(e.controller));
  return out;
}

void MetaDataset::validate() const {
  if (entries.empty()) throw UsageError("meta-dataset is empty");
  const auto& u0 = entries[0].open_loop.u;
  for (const auto& e : entries) {
    e.open_loop.validate();
    e.closed_loop.validate();
    if (e.controller.ts != entries[0].controller.ts ||
        e.open_loop.ts != entries[0].open_loop.ts) {
      throw UsageError("meta-dataset entries must share the sample time");
    }
    if (e.open_loop.u.size() != u0.size()) {
      throw UsageError("meta-dataset entries must share the input sequence");
    }
    for (std::size_t t = 0; t < u0.size(); ++t) {
      if (std::abs(e.open_loop.u[t] - u0[t]) > 1e-12 * (1.0 + std::abs(u0[t]))) {
        throw UsageError("meta-dataset entries must share the input sequence");
      }
    }
    if (!(e.delta_k > 0.0 && e.delta_k < 1.0)) {
      throw UsageError("meta-dataset delta_k must lie in (0, 1)");
    }
  }
}

double QuadraticForm::value(const Eigen::VectorXd& alpha) const {
  return alpha.dot(H * alpha) - 2.0 * f.dot(alpha) + c;
}

double MetaObjective::value(const Eigen::VectorXd& alpha) const {
  return alpha.dot(P * alpha) + q.dot(alpha) + r;
}

double similarity_index(const Dataset& d_new, const Dataset& d_k) {
  if (d_new.u.size() != d_k.u.size() || d_new.y.size() != d_k.y.size()) {
    throw UsageError("similarity index: datasets differ in length");
  }
  double s = 0.0;
  for (std::size_t t = 0; t < d_new.u.size(); ++t) {
    if (std::abs(d_new.u[t] - d_k.u[t]) > 1e-12) {
      throw UsageError("similarity index: datasets do not share the input");
    }
    const double diff = d_new.y[t] - d_k.y[t];
    s += diff * diff;
  }
  return s;
}

double performance_index(const Signal& desired, const Dataset& closed_loop) {
  if (desired.size() != closed_loop.y.size()) {
    throw UsageError("performance index: length mismatch");
  }
  double j = 0.0;
  for (std::size_t t = 0; t < desired.size(); ++t) {
    const double diff = desired[t] - closed_loop.y[t];
    j += diff * diff;
  }
  return j;
}

QuadraticForm build_iv_objective(const Dataset& d_T, const Dataset& d_T_iv,
                                 const std::vector<TransferFunction>& controllers,
                                 const TransferFunction& m,
                                 const TransferFunction& w, bool white_input) {
  d_T.validate();
  d_T_iv.validate();
  if (d_T.u != d_T_iv.u) {
    throw UsageError("IV objective: d_T and d_T_iv must share the input");
  }
  if (controllers.empty()) throw UsageError("IV objective: no controllers");
  const Prefilter pf = design_prefilter(m, w, d_T.u, white_input);
  const VrftRegression reg = vrft_regression(d_T, m, pf, controllers);
  const VrftRegression inst = vrft_regression(d_T_iv, m, pf, controllers);
  const std::size_t n = controllers.size();
  const std::size_t len = reg.u_l.size();
  QuadraticForm q;
  q.H = Eigen::MatrixXd::Zero(n, n);
  q.f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd phi(n);
  for (std::size_t t = 0; t < len; ++t) {
    double weight = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      phi(k) = reg.phi[k][t];
      weight += inst.phi[k][t] * inst.phi[k][t];
    }
    q.H.noalias() += weight * phi * phi.transpose();
    q.f += weight * reg.u_l[t] * phi;
    q.c += weight * reg.u_l[t] * reg.u_l[t];
  }
  q.H = 0.5 * (q.H + q.H.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q.H);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double bottom = eig.eigenvalues().minCoeff();
  q.ill_conditioned = !(bottom > 0.0) || top / bottom > 1e12;
  return q;
}

QuadraticForm build_iv_objective(const Dataset& d_T, const Dataset& d_T_iv,
                                 const MetaDataset& meta,
                                 const TransferFunction& m,
                                 const TransferFunction& w, bool white_input) {
  return build_iv_objective(d_T, d_T_iv, meta.controllers(), m, w, white_input);
}

MetaIndices compute_indices(const Dataset& d_T, const MetaDataset& meta,
                            const TransferFunction& m) {
  const Eigen::Index n = static_cast<Eigen::Index>(meta.size());
  MetaIndices out;
  out.S.resize(n);
  out.J.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const MetaEntry& e = meta.entries[k];
    out.S(k) = similarity_index(d_T, e.open_loop);
    out.J(k) = performance_index(simulate(m, e.closed_loop.reference), e.closed_loop);
  }
  return out;
}

MetaObjective assemble_objective(const QuadraticForm& objective,
                                 const MetaIndices& indices,
                                 const DesignConfig& config) {
  const Eigen::Index n = objective.f.size();
  if (indices.S.size() != n || indices.J.size() != n) {
    throw UsageError("objective and indices disagree on N");
  }
  if (config.lambda_j < 0.0 || config.lambda_s < 0.0) {
    throw UsageError("regularization weights must be >= 0");
  }
  MetaObjective out;
  Eigen::VectorXd S = indices.S;
  Eigen::VectorXd J = indices.J;
  double scale = 1.0;
  if (config.normalization == IndexNormalization::kMax) {
    if (objective.c > 0.0) scale = 1.0 / objective.c;
    if (S.maxCoeff() > 0.0) S /= S.maxCoeff();
    if (J.maxCoeff() > 0.0) J /= J.maxCoeff();
  }
  out.P = scale * objective.H;
  out.P.diagonal() += config.lambda_j * J;
  out.q = -2.0 * scale * objective.f + config.lambda_s * S;
  out.r = scale * objective.c;
  return out;
}

double minimal_feasible_delta(const StabilityModel& model) {
  const Eigen::Index n = model.A.cols();
  double hi = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    hi = std::min(hi, model.delta_hat(Eigen::VectorXd::Unit(n, k)));
  }
  const QpProblem qp = simplex_qp(Eigen::MatrixXd::Identity(n, n),
                                  Eigen::VectorXd::Zero(n));
  double lo = 0.0;
  for (int it = 0; it < 40 && hi - lo > 1e-6 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const ConicResult r = solve_conic_qp(qp, make_cones(model, mid));
    if (r.qp.status == QpStatus::kOptimal) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

MetaSolution solve_meta(const QuadraticForm& objective, const MetaIndices& indices,
                        const DesignConfig& config, const Dataset& d_T,
                        const TransferFunction& m,
                        const std::vector<TransferFunction>& controllers) {
  const auto start = Clock::now();
  const Eigen::Index n = objective.f.size();
  if (n == 0 || static_cast<std::size_t>(n) != controllers.size()) {
    throw UsageError("solve_meta: controller count mismatch");
  }
  const MetaObjective obj = assemble_objective(objective, indices, config);
  MetaSolution sol;
  Eigen::VectorXd alpha;
  QpOptions qopt;
  qopt.max_iter = config.max_iter;
  ConicOptions copt;
  copt.qp = qopt;
  copt.cone_tol = config.solver_tol;

  if (n == 1) {
    alpha = Eigen::VectorXd::Ones(1);
    sol.report.active_constraints.push_back("simplex");
  } else if (!config.delta) {
    const QpResult r = solve_qp(simplex_qp(obj.P, obj.q), qopt);
    if (r.status == QpStatus::kMaxIterations) {
      throw NumericalError("meta solver did not converge within max_iter");
    }
    if (r.status != QpStatus::kOptimal) throw NumericalError("meta QP infeasible");
    alpha = r.x;
    sol.report.kkt_stationarity = r.stationarity;
    sol.report.active_constraints.push_back("simplex");
    for (int i : r.active) {
      sol.report.active_constraints.push_back("alpha[" + std::to_string(i) + "] >= 0");
    }
  } else {
    const double delta = *config.delta;
    if (!(delta > 0.0)) throw UsageError("delta must be > 0");
    const QpProblem qp = simplex_qp(obj.P, obj.q);
    std::map<int, ConicResult> solved;
    std::map<int, StabilityModel> models;
    bool hit_iteration_limit = false;
    auto attempt = [&](int ell) {
      if (static_cast<long>(d_T.size()) <= 2L * ell) return false;
      StabilityModel model = build_stability_model(d_T, m, controllers, SpectralGrid(ell));
      if (!model.well_posed()) return false;
      ConicResult r = solve_conic_qp(qp, make_cones(model, delta), copt);
      if (r.qp.status == QpStatus::kMaxIterations) hit_iteration_limit = true;
      if (r.qp.status != QpStatus::kOptimal) return false;
      solved[ell] = r;
      models.emplace(ell, std::move(model));
      return true;
    };
    const int ell = with_ell_fallback(config.ell, attempt);
    if (ell == 0) {
      if (hit_iteration_limit) {
        throw NumericalError("meta solver did not converge within max_iter");
      }
      int probe = config.ell;
      while (probe > 10 && static_cast<long>(d_T.size()) <= 2L * probe) probe /= 2;
      std::string estimate = "unavailable";
      if (static_cast<long>(d_T.size()) > 2L * probe) {
        const StabilityModel model =
            build_stability_model(d_T, m, controllers, SpectralGrid(probe));
        if (model.well_posed()) estimate = format_double(minimal_feasible_delta(model));
      }
      throw NumericalError("stability constraint infeasible for delta = " +
                           format_double(delta) +
                           "; minimal feasible delta estimate: " + estimate);
    }
    const ConicResult& r = solved[ell];
    alpha = r.qp.x;
    sol.report.ell = ell;
    sol.report.kkt_stationarity = r.qp.stationarity;
    sol.report.active_constraints.push_back("simplex");
    for (int i : r.qp.active) {
      if (i < n) sol.report.active_constraints.push_back("alpha[" + std::to_string(i) + "] >= 0");
    }
    const SpectralGrid grid(ell);
    for (int i : r.active_cones) {
      sol.report.active_constraints.push_back(
          "stability[omega=" + format_double(grid.frequency(i)) + "]");
    }
  }
  // Clean round-off on the simplex.
  for (Eigen::Index k = 0; k < n; ++k) alpha(k) = std::max(alpha(k), 0.0);
  alpha /= alpha.sum();
  sol.alpha.assign(alpha.data(), alpha.data() + n);
  sol.report.objective = obj.value(alpha);

  double infeas = std::abs(alpha.sum() - 1.0);
  const int ell = sol.report.ell > 0 ? sol.report.ell : config.ell;
  sol.report.delta_hat = std::numeric_limits<double>::quiet_NaN();
  if (static_cast<long>(d_T.size()) > 2L * ell) {
    const StabilityModel model = build_stability_model(d_T, m, controllers, SpectralGrid(ell));
    if (model.well_posed()) {
      sol.report.delta_hat = model.delta_hat(alpha);
      if (config.delta) {
        infeas = std::max(infeas, (sol.report.delta_hat - *config.delta) / *config.delta);
      }
    }
  }
  if (sol.report.ell == 0 && config.delta == std::nullopt) sol.report.ell = ell;
  sol.report.primal_infeasibility = std::max(infeas, 0.0);
  sol.report.timings_ms["solve"] = elapsed_ms(start);
  return sol;
}

MetaSolution solve_meta(const QuadraticForm& objective, const MetaDataset& meta,
                        const DesignConfig& config, const Dataset& d_T,
                        const TransferFunction& m) {
  return solve_meta(objective, compute_indices(d_T, meta, m), config, d_T, m,
                    meta.controllers());
}

MetaSolution meta_tune(const Dataset& d_T, const Dataset& d_T_iv,
                       const MetaDataset& meta, const TransferFunction& m,
                       const DesignConfig& config) {
  meta.validate();
  const auto start = Clock::now();
  const auto controllers = meta.controllers();
  const QuadraticForm q =
      build_iv_objective(d_T, d_T_iv, controllers, m, config.w, config.white_input);
  const MetaIndices idx = compute_indices(d_T, meta, m);
  const double build_ms = elapsed_ms(start);
  MetaSolution sol = solve_meta(q, idx, config, d_T, m, controllers);
  sol.report.timings_ms["objective"] = build_ms;
  sol.report.timings_ms["total"] = elapsed_ms(start);
  return sol;
}

TransferFunction materialize_meta_controller(const MetaDataset& meta,
                                             const std::vector<double>& alpha) {
  if (alpha.size() != meta.size()) throw UsageError("alpha length mismatch");
  return weighted_sum(meta.controllers(), alpha);
}

std::optional<ControllerParams> combine_params(const MetaDataset& meta,
                                               const std::vector<double>& alpha) {
  if (alpha.size() != meta.size() || meta.size() == 0) {
    throw UsageError("alpha length mismatch");
  }
  ControllerParams out = meta.entries[0].controller;
  std::fill(out.theta.begin(), out.theta.end(), 0.0);
  for (std::size_t k = 0; k < meta.size(); ++k) {
    const ControllerParams& c = meta.entries[k].controller;
    if (c.basis != out.basis || c.ts != out.ts || c.theta.size() != out.theta.size()) {
      return std::nullopt;
    }
    for (std::size_t j = 0; j < out.theta.size(); ++j) out.theta[j] += alpha[k] * c.theta[j];
  }
  return out;
}

}  // namespace metavrft
