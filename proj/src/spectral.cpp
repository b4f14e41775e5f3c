#include "metavrft/spectral.hpp"

#include <cmath>
#include <numbers>

#include "metavrft/errors.hpp"

namespace metavrft {

SpectralGrid::SpectralGrid(int ell) : ell_(ell) {
  if (ell < 1) throw UsageError("spectral window ell must be >= 1");
}

double SpectralGrid::frequency(std::size_t i) const {
  return 2.0 * std::numbers::pi * static_cast<double>(i) / (2.0 * ell_ + 1.0);
}

std::vector<double> SpectralGrid::frequencies() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = frequency(i);
  return out;
}

double sampled_crosscorr(const Signal& u, const Signal& e, int lag) {
  if (u.size() != e.size()) throw UsageError("crosscorr: length mismatch");
  const long n = static_cast<long>(u.size());
  if (n <= 2L * std::abs(lag)) {
    throw UsageError("crosscorr: T must exceed 2 |lag|");
  }
  double acc = 0.0;
  const long lo = std::max(0L, static_cast<long>(lag));
  const long hi = std::min(n, n + lag);
  for (long t = lo; t < hi; ++t) acc += u[t - lag] * e[t];
  return acc / static_cast<double>(n);
}

std::vector<double> crosscorr_window(const Signal& u, const Signal& e, int ell) {
  if (u.size() != e.size()) throw UsageError("crosscorr: length mismatch");
  if (static_cast<long>(u.size()) <= 2L * ell) {
    throw NumericalError("crosscorr: T must exceed 2 ell");
  }
  std::vector<double> out(2 * static_cast<std::size_t>(ell) + 1);
  for (int tau = -ell; tau <= ell; ++tau) {
    out[tau + ell] = sampled_crosscorr(u, e, tau);
  }
  return out;
}

std::vector<double> symmetrize(const std::vector<double>& corr) {
  std::vector<double> out(corr.size());
  const std::size_t n = corr.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * (corr[i] + corr[n - 1 - i]);
  return out;
}

std::vector<Complex> spectrum(const std::vector<double>& corr,
                              const SpectralGrid& grid) {
  const int ell = grid.ell();
  if (corr.size() != 2 * static_cast<std::size_t>(ell) + 1) {
    throw UsageError("spectrum: correlation length must be 2 ell + 1");
  }
  std::vector<Complex> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double w = grid.frequency(i);
    double re = 0.0;
    double im = 0.0;
    for (int tau = -ell; tau <= ell; ++tau) {
      const double g = corr[tau + ell];
      re += g * std::cos(tau * w);
      im -= g * std::sin(tau * w);
    }
    out[i] = Complex(re, im);
  }
  return out;
}

std::vector<double> auto_spectrum(const Signal& u, const SpectralGrid& grid) {
  const auto phi = spectrum(symmetrize(crosscorr_window(u, u, grid.ell())), grid);
  std::vector<double> out(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) out[i] = phi[i].real();
  return out;
}

Signal StabilityResidual::evaluate(const std::vector<double>& alpha) const {
  if (alpha.size() != components.size()) {
    throw UsageError("stability residual: alpha length mismatch");
  }
  Signal out = b;
  for (std::size_t k = 0; k < components.size(); ++k) {
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += alpha[k] * components[k][t];
  }
  return out;
}

StabilityResidual stability_residual(
    const Dataset& dataset, const TransferFunction& m,
    const std::vector<TransferFunction>& controllers) {
  dataset.validate();
  const TransferFunction xi = TransferFunction::gain(1.0, m.ts()) - m;
  StabilityResidual out;
  out.b = simulate(m, dataset.u);
  const Signal xi_y = simulate(xi, dataset.y);
  for (const auto& c : controllers) {
    Signal comp = simulate(c, xi_y);
    for (double& x : comp) x = -x;
    out.components.push_back(std::move(comp));
  }
  return out;
}

Signal stability_residual(const Dataset& dataset, const TransferFunction& m,
                          const std::vector<TransferFunction>& controllers,
                          const std::vector<double>& alpha) {
  return stability_residual(dataset, m, controllers).evaluate(alpha);
}

Eigen::VectorXd StabilityModel::ratios(const Eigen::VectorXd& alpha) const {
  const Eigen::VectorXcd z = b + A * alpha.cast<Complex>();
  Eigen::VectorXd out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double den = std::abs(phi_u(i));
    if (den < kMinAutoSpectrum) {
      throw NumericalError("input auto-spectrum vanishes at omega_" +
                           std::to_string(i) + " (not persistently exciting)");
    }
    out(i) = std::abs(z(i)) / den;
  }
  return out;
}

double StabilityModel::delta_hat(const Eigen::VectorXd& alpha) const {
  return ratios(alpha).maxCoeff();
}

bool StabilityModel::well_posed() const {
  return phi_u.cwiseAbs().minCoeff() >= kMinAutoSpectrum;
}

StabilityModel build_stability_model(
    const Dataset& dataset, const TransferFunction& m,
    const std::vector<TransferFunction>& controllers, const SpectralGrid& grid) {
  const StabilityResidual res = stability_residual(dataset, m, controllers);
  const int ell = grid.ell();
  const std::size_t nf = grid.size();
  StabilityModel model;
  model.grid = grid;
  model.b.resize(nf);
  model.A.resize(nf, static_cast<Eigen::Index>(controllers.size()));
  const auto sb = spectrum(crosscorr_window(dataset.u, res.b, ell), grid);
  for (std::size_t i = 0; i < nf; ++i) model.b(i) = sb[i];
  for (std::size_t k = 0; k < controllers.size(); ++k) {
    const auto sk = spectrum(crosscorr_window(dataset.u, res.components[k], ell), grid);
    for (std::size_t i = 0; i < nf; ++i) model.A(i, k) = sk[i];
  }
  const auto pu = auto_spectrum(dataset.u, grid);
  model.phi_u = Eigen::Map<const Eigen::VectorXd>(pu.data(), pu.size());
  return model;
}

double delta_hat(const Dataset& dataset, const TransferFunction& m,
                 const std::vector<TransferFunction>& controllers,
                 const std::vector<double>& alpha, const SpectralGrid& grid) {
  const StabilityModel model = build_stability_model(dataset, m, controllers, grid);
  return model.delta_hat(Eigen::Map<const Eigen::VectorXd>(alpha.data(), alpha.size()));
}

bool screen_meta_controller(const Dataset& dataset, const TransferFunction& m,
                            const TransferFunction& c_k, double delta_k,
                            const SpectralGrid& grid) {
  if (!(delta_k > 0.0 && delta_k < 1.0)) {
    throw UsageError("screening bound delta_k must lie in (0, 1)");
  }
  return delta_hat(dataset, m, {c_k}, {1.0}, grid) <= delta_k;
}

int with_ell_fallback(int ell, const std::function<bool(int)>& attempt) {
  if (attempt(ell)) return ell;
  int best = 0;
  for (int candidate = 10; candidate < ell; candidate *= 2) {
    if (!attempt(candidate)) break;
    best = candidate;
  }
  return best;
}

}  // namespace metavrft
