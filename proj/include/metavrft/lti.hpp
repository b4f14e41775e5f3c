#ifndef METAVRFT_LTI_HPP_
#define METAVRFT_LTI_HPP_

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

namespace metavrft {

using Signal = std::vector<double>;
using Complex = std::complex<double>;

inline constexpr double kTrimTolerance = 1e-12;
inline constexpr double kStabilityTolerance = 1e-9;

// Rational transfer function in the back-shift operator q^-1:
//   H(q^-1) = (b0 + b1 q^-1 + ...) / (a0 + a1 q^-1 + ...).
// Always stored in canonical form: a0 == 1, trailing coefficients whose
// magnitude is below kTrimTolerance times the largest one removed, and the
// zero system represented as 0/1.
class TransferFunction {
 public:
  TransferFunction();  // zero system, ts = 1
  TransferFunction(std::vector<double> num, std::vector<double> den,
                   double ts = 1.0);

  static TransferFunction gain(double k, double ts = 1.0);
  static TransferFunction delay(int d, double ts = 1.0);

  const std::vector<double>& num() const { return num_; }
  const std::vector<double>& den() const { return den_; }
  double ts() const { return ts_; }

  bool is_zero() const;
  bool is_static() const;
  // Number of leading zero numerator coefficients (input delay).
  int relative_degree() const;

  // Frequency response at z = e^{j omega}.
  Complex eval(double omega) const;
  // Value at z = 1. Throws NumericalError when the denominator vanishes.
  double dc_gain() const;

  std::vector<Complex> poles() const;
  std::vector<Complex> zeros() const;

  TransferFunction operator-() const;
  friend TransferFunction operator+(const TransferFunction& a,
                                    const TransferFunction& b);
  friend TransferFunction operator-(const TransferFunction& a,
                                    const TransferFunction& b);
  friend TransferFunction operator*(const TransferFunction& a,
                                    const TransferFunction& b);
  friend TransferFunction operator*(double k, const TransferFunction& a);
  friend TransferFunction operator/(const TransferFunction& a,
                                    const TransferFunction& b);

  // Exact equality of canonical coefficient lists.
  bool operator==(const TransferFunction& other) const;
  // Coefficient-wise comparison with absolute tolerance.
  bool approx_equal(const TransferFunction& other, double tol) const;

 private:
  void canonicalize();

  std::vector<double> num_;
  std::vector<double> den_;
  double ts_;
};

// Polynomial helpers on q^-1 coefficient lists.
std::vector<double> poly_mul(const std::vector<double>& a,
                             const std::vector<double>& b);
std::vector<double> poly_add(const std::vector<double>& a,
                             const std::vector<double>& b);
// Roots in z of a0 z^n + a1 z^(n-1) + ... + an (i.e. of the q^-1 polynomial).
std::vector<Complex> poly_roots(const std::vector<double>& coeffs);

// Output from zero initial conditions (rest) or from the equilibrium that
// corresponds to a constant input equal to input[0] (steady state).
Signal simulate(const TransferFunction& tf, const Signal& input,
                bool initial_rest = true);
Signal impulse_response(const TransferFunction& tf, std::size_t length);
Signal step_response(const TransferFunction& tf, std::size_t length);

// CG / (1 + CG).
TransferFunction feedback(const TransferFunction& c, const TransferFunction& g);
// 1 / (1 + CG).
TransferFunction sensitivity(const TransferFunction& c,
                             const TransferFunction& g);

// Cancels numerator/denominator root pairs closer than tol.
TransferFunction minreal(const TransferFunction& tf, double tol = 1e-7);

bool is_stable(const TransferFunction& tf,
               double tolerance = kStabilityTolerance);
double spectral_radius(const TransferFunction& tf);

// Impulse-response l2 norm; the horizon doubles until the energy of the last
// half is below 1e-12 of the total.
double norm_h2(const TransferFunction& tf, std::size_t horizon = 256);
// Peak gain over [0, pi] on a uniform grid plus local refinement.
double norm_hinf(const TransferFunction& tf, std::size_t grid_size = 2048);

// Fixed controller bases beta(q^-1); C(theta) = theta' * beta.
struct ControllerBasis {
  std::string name;
  std::vector<TransferFunction> elements;
  std::size_t size() const { return elements.size(); }
};

// Discrete PI with trapezoidal integrator:
//   C = Kp + Ki * (Ts/2) (1 + q^-1) / (1 - q^-1).
ControllerBasis pi_basis(double ts);
ControllerBasis basis_by_name(const std::string& name, double ts);

struct ControllerParams {
  std::vector<double> theta;
  std::string basis = "pi";
  double ts = 1.0;
};

TransferFunction materialize(const ControllerParams& params);
// sum_k theta_k beta_k with the shared basis denominator kept.
TransferFunction combine(const ControllerBasis& basis,
                         const std::vector<double>& theta);
// sum_k w_k H_k; shares the denominator when all H_k have the same one.
TransferFunction weighted_sum(const std::vector<TransferFunction>& tfs,
                              const std::vector<double>& weights);

}  // namespace metavrft

#endif  // METAVRFT_LTI_HPP_
