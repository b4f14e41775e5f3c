#ifndef METAVRFT_SPECTRAL_HPP_
#define METAVRFT_SPECTRAL_HPP_

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "metavrft/lti.hpp"
#include "metavrft/signals.hpp"

namespace metavrft {

// omega_i = 2 pi i / (2 ell + 1), i = 0..ell.
class SpectralGrid {
 public:
  explicit SpectralGrid(int ell);
  int ell() const { return ell_; }
  std::size_t size() const { return static_cast<std::size_t>(ell_) + 1; }
  double frequency(std::size_t i) const;
  std::vector<double> frequencies() const;

 private:
  int ell_;
};

// (1/T) sum_t u(t - tau) e(t), out-of-range samples treated as zero.
double sampled_crosscorr(const Signal& u, const Signal& e, int lag);
// Lags -ell..ell stored at index tau + ell. Requires T > 2 ell.
std::vector<double> crosscorr_window(const Signal& u, const Signal& e, int ell);
// (g(tau) + g(-tau)) / 2.
std::vector<double> symmetrize(const std::vector<double>& corr);

// sum_{tau=-ell}^{ell} corr(tau) e^{-j tau omega_i}.
std::vector<Complex> spectrum(const std::vector<double>& corr,
                              const SpectralGrid& grid);
// Real input auto-spectrum from the symmetrized sampled autocorrelation.
std::vector<double> auto_spectrum(const Signal& u, const SpectralGrid& grid);

// e_s(alpha) = b + sum_k alpha_k components[k], with b = M u and
// components[k] = -C_k Xi y.
struct StabilityResidual {
  Signal b;
  std::vector<Signal> components;
  Signal evaluate(const std::vector<double>& alpha) const;
};

StabilityResidual stability_residual(const Dataset& dataset,
                                     const TransferFunction& m,
                                     const std::vector<TransferFunction>& controllers);
Signal stability_residual(const Dataset& dataset, const TransferFunction& m,
                          const std::vector<TransferFunction>& controllers,
                          const std::vector<double>& alpha);

// Cross-spectra of the residual components on a grid:
//   Phi_{u,e_s}(omega_i; alpha) = b_i + sum_k A_ik alpha_k.
struct StabilityModel {
  SpectralGrid grid{1};
  Eigen::VectorXcd b;
  Eigen::MatrixXcd A;
  Eigen::VectorXd phi_u;  // auto-spectrum (may be negative at large ell)

  Eigen::VectorXd ratios(const Eigen::VectorXd& alpha) const;
  double delta_hat(const Eigen::VectorXd& alpha) const;
  // True when every |Phi_u(omega_i)| >= 1e-12.
  bool well_posed() const;
};

StabilityModel build_stability_model(
    const Dataset& dataset, const TransferFunction& m,
    const std::vector<TransferFunction>& controllers, const SpectralGrid& grid);

// max_i |Phi_{u,e_s}(omega_i; alpha)| / |Phi_u(omega_i)|.
double delta_hat(const Dataset& dataset, const TransferFunction& m,
                 const std::vector<TransferFunction>& controllers,
                 const std::vector<double>& alpha, const SpectralGrid& grid);

// Data-driven check of ||M - C_k G Xi||_inf <= delta_k.
bool screen_meta_controller(const Dataset& dataset, const TransferFunction& m,
                            const TransferFunction& c_k, double delta_k,
                            const SpectralGrid& grid);

inline constexpr double kMinAutoSpectrum = 1e-12;

// Window-length policy for constrained solves: try `ell`; on failure retry
// 10, 20, 40, ... (below `ell`) and keep the largest value that succeeds,
// stopping at the first failure. Returns the chosen ell or 0.
int with_ell_fallback(int ell, const std::function<bool(int)>& attempt);

}  // namespace metavrft

#endif  // METAVRFT_SPECTRAL_HPP_
