#include "metavrft/vrft.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <sstream>

#include "metavrft/errors.hpp"
#include "metavrft/qp.hpp"
#include "metavrft/spectral.hpp"

namespace metavrft {
namespace {

Eigen::MatrixXd as_matrix(const std::vector<Signal>& columns) {
  const Eigen::Index rows = columns.empty() ? 0 : columns[0].size();
  Eigen::MatrixXd out(rows, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out.col(j) = Eigen::Map<const Eigen::VectorXd>(columns[j].data(), rows);
  }
  return out;
}

// Normal-equation pieces of the criterion  ||P (u_l - Phi theta)||^2 / scale
// with P = Z' (IV) or the identity (least squares).
struct Criterion {
  Eigen::MatrixXd A;  // P Phi
  Eigen::VectorXd b;  // P u_l
  Eigen::MatrixXd gram;
  Eigen::VectorXd rhs;
  double scale = 1.0;
  bool iv = false;
};

Criterion build_criterion(const VrftProblem& problem) {
  problem.dataset.validate();
  if (problem.basis.size() == 0) throw UsageError("empty controller basis");
  const Prefilter pf = design_prefilter(problem.m, problem.w, problem.dataset.u,
                                        problem.white_input);
  const VrftRegression reg =
      vrft_regression(problem.dataset, problem.m, pf, problem.basis.elements);
  const Eigen::MatrixXd phi = as_matrix(reg.phi);
  const Eigen::VectorXd ul =
      Eigen::Map<const Eigen::VectorXd>(reg.u_l.data(), reg.u_l.size());
  Criterion c;
  if (problem.dataset_iv) {
    const Dataset& iv = *problem.dataset_iv;
    iv.validate();
    if (iv.u.size() != problem.dataset.u.size()) {
      throw UsageError("IV dataset length differs from the main dataset");
    }
    for (std::size_t t = 0; t < iv.u.size(); ++t) {
      if (std::abs(iv.u[t] - problem.dataset.u[t]) > 1e-12 * (1.0 + std::abs(iv.u[t]))) {
        throw UsageError("IV dataset must repeat the input sequence");
      }
    }
    const VrftRegression zreg =
        vrft_regression(iv, problem.m, pf, problem.basis.elements);
    const Eigen::MatrixXd z = as_matrix(zreg.phi);
    c.A = z.transpose() * phi;
    c.b = z.transpose() * ul;
    c.gram = c.A.transpose() * c.A;
    c.rhs = c.A.transpose() * c.b;
    c.scale = c.b.squaredNorm();
    c.iv = true;
  } else {
    c.A = phi;
    c.b = ul;
    c.gram = phi.transpose() * phi;
    c.rhs = phi.transpose() * ul;
    c.scale = ul.squaredNorm();
  }
  if (!(c.scale > 0.0)) throw NumericalError("VRFT criterion is identically zero");
  return c;
}

std::string describe_direction(const Eigen::VectorXd& v) {
  std::ostringstream os;
  os.precision(3);
  bool first = true;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (std::abs(v(j)) < 1e-3) continue;
    if (!first) os << (v(j) >= 0 ? " + " : " - ");
    else if (v(j) < 0) os << "-";
    os << std::abs(v(j)) << "*theta[" << j << "]";
    first = false;
  }
  return os.str();
}

// Jacobi scaling so that the scaled matrix has unit diagonal.
Eigen::VectorXd jacobi_scale(const Eigen::MatrixXd& gram) {
  Eigen::VectorXd d(gram.rows());
  for (Eigen::Index j = 0; j < gram.rows(); ++j) {
    d(j) = gram(j, j) > 0.0 ? 1.0 / std::sqrt(gram(j, j)) : 1.0;
  }
  return d;
}

void check_rank(const Criterion& c) {
  const Eigen::VectorXd d = jacobi_scale(c.gram);
  const Eigen::MatrixXd scaled = d.asDiagonal() * c.gram * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled);
  const Eigen::VectorXd lambda = eig.eigenvalues();
  const double top = lambda.cwiseAbs().maxCoeff();
  if (!(top > 0.0) || lambda(0) < 1e-12 * top) {
    Eigen::VectorXd dir = d.asDiagonal() * eig.eigenvectors().col(0);
    dir.normalize();
    throw NumericalError(
        "rank-deficient VRFT regressor Gram matrix; deficient direction: " +
        describe_direction(dir));
  }
}

double criterion_value(const Criterion& c, const Eigen::VectorXd& theta) {
  return (c.b - c.A * theta).squaredNorm() / c.scale;
}

}  // namespace

VrftRegression vrft_regression(const Dataset& dataset,
                               const TransferFunction& m,
                               const Prefilter& prefilter,
                               const std::vector<TransferFunction>& regressors) {
  const VirtualReference vr = virtual_reference(m, dataset.y);
  const std::size_t n = vr.r.size();
  Signal ev(n);
  for (std::size_t s = 0; s < n; ++s) ev[s] = vr.r[s] - dataset.y[s];
  VrftRegression out;
  out.u_l = prefilter.apply(Signal(dataset.u.begin(), dataset.u.begin() + n));
  const Signal ev_l = prefilter.apply(ev);
  for (const auto& beta : regressors) out.phi.push_back(simulate(beta, ev_l));
  return out;
}

TransferFunction inverse_complementary_weight(const TransferFunction& m) {
  const TransferFunction xi = TransferFunction::gain(1.0, m.ts()) - m;
  return TransferFunction(xi.den(), xi.num(), m.ts());
}

VrftResult vrft_tune_detailed(const VrftProblem& problem) {
  const Criterion c = build_criterion(problem);
  const Eigen::Index p = static_cast<Eigen::Index>(problem.basis.size());
  VrftResult result;
  result.params.basis = problem.basis.name;
  result.params.ts = problem.dataset.ts;

  if (!problem.stability) {
    if (c.iv) {
      const Eigen::VectorXd d = jacobi_scale(c.gram);
      const Eigen::MatrixXd scaled = c.A * d.asDiagonal();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled);
      const auto& sv = svd.singularValues();
      if (!(sv(0) > 0.0) || sv(sv.size() - 1) < 1e-10 * sv(0)) {
        Eigen::JacobiSVD<Eigen::MatrixXd> full(scaled, Eigen::ComputeFullV);
        Eigen::VectorXd dir = d.asDiagonal() * full.matrixV().col(sv.size() - 1);
        dir.normalize();
        throw NumericalError(
            "rank-deficient IV regressor matrix; deficient direction: " +
            describe_direction(dir));
      }
      const Eigen::VectorXd theta = d.asDiagonal() * scaled.fullPivLu().solve(c.b);
      result.params.theta.assign(theta.data(), theta.data() + p);
      result.objective = criterion_value(c, theta);
    } else {
      check_rank(c);
      const Eigen::VectorXd d = jacobi_scale(c.gram);
      const Eigen::MatrixXd scaled = d.asDiagonal() * c.gram * d.asDiagonal();
      const Eigen::VectorXd theta =
          d.asDiagonal() * scaled.ldlt().solve(d.asDiagonal() * c.rhs);
      result.params.theta.assign(theta.data(), theta.data() + p);
      result.objective = criterion_value(c, theta);
    }
    return result;
  }

  check_rank(c);
  const StabilitySpec spec = *problem.stability;
  if (!(spec.delta > 0.0)) throw UsageError("stability bound delta must be > 0");
  const Eigen::VectorXd d = jacobi_scale(c.gram);
  QpProblem qp;
  qp.G = 2.0 * (d.asDiagonal() * c.gram * d.asDiagonal()) / c.scale;
  qp.G += 1e-12 * std::max(1.0, qp.G.trace() / p) * Eigen::MatrixXd::Identity(p, p);
  qp.a = -2.0 * (d.asDiagonal() * c.rhs) / c.scale;
  qp.E.resize(0, p);
  qp.C.resize(0, p);

  std::map<int, std::pair<Eigen::VectorXd, double>> solved;
  auto attempt = [&](int ell) {
    if (static_cast<long>(problem.dataset.size()) <= 2L * ell) return false;
    const StabilityModel model = build_stability_model(
        problem.dataset, problem.m, problem.basis.elements, SpectralGrid(ell));
    if (!model.well_posed()) return false;
    ConeSet cones;
    cones.b = model.b;
    cones.A = model.A * d.asDiagonal();
    cones.radius = spec.delta * model.phi_u.cwiseAbs();
    const ConicResult r = solve_conic_qp(qp, cones);
    if (r.qp.status != QpStatus::kOptimal) return false;
    const Eigen::VectorXd theta = d.asDiagonal() * r.qp.x;
    solved[ell] = {theta, model.delta_hat(theta)};
    return true;
  };
  const int ell = with_ell_fallback(spec.ell, attempt);
  if (ell == 0) {
    throw NumericalError("c-VRFT stability constraint infeasible for delta = " +
                         std::to_string(spec.delta) + "; try a larger delta");
  }
  const Eigen::VectorXd& theta = solved[ell].first;
  result.params.theta.assign(theta.data(), theta.data() + p);
  result.objective = criterion_value(c, theta);
  result.ell = ell;
  result.delta_hat = solved[ell].second;
  return result;
}

ControllerParams vrft_tune(const VrftProblem& problem) {
  return vrft_tune_detailed(problem).params;
}

double vrft_objective(const VrftProblem& problem,
                      const std::vector<double>& theta) {
  const Criterion c = build_criterion(problem);
  if (theta.size() != problem.basis.size()) {
    throw UsageError("theta length does not match basis");
  }
  return criterion_value(
      c, Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size()));
}

std::optional<MetaEntryTuning> build_meta_controller_entry(
    const Dataset& g_data, const Dataset& g_data_iv, const TransferFunction& g,
    const EntryConfig& config) {
  VrftProblem problem;
  problem.dataset = g_data;
  problem.dataset_iv = g_data_iv;
  problem.m = config.m;
  problem.w = config.w;
  problem.basis = basis_by_name(config.basis, g_data.ts);
  problem.stability = config.stability;
  MetaEntryTuning entry;
  entry.controller = vrft_tune(problem);
  const TransferFunction c = materialize(entry.controller);
  if (!is_stable(feedback(c, g))) return std::nullopt;
  const Signal reference(config.horizon, config.step_amplitude);
  entry.closed_loop =
      simulate_closed_loop(g, c, reference, config.noise_std, config.seed);
  if (entry.closed_loop.unstable) return std::nullopt;
  return entry;
}

}  // namespace metavrft
