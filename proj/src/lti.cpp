#include "metavrft/lti.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "metavrft/errors.hpp"

namespace metavrft {
namespace {

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

void trim_trailing(std::vector<double>& p) {
  const double limit = kTrimTolerance * max_abs(p);
  while (p.size() > 1 && std::abs(p.back()) <= limit) p.pop_back();
}

bool same_poly(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > 1e-14 * std::max(1.0, std::abs(a[i]))) {
      return false;
    }
  }
  return true;
}

Complex poly_eval(const std::vector<double>& p, Complex qinv) {
  Complex acc = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * qinv + *it;
  return acc;
}

// P / (1 + a1 q^-1 + a2 q^-2), remainder dropped.
std::vector<double> deflate(const std::vector<double>& p, double a1,
                            double a2) {
  const std::size_t order = a2 == 0.0 ? 1 : 2;
  if (p.size() <= order) return {p.empty() ? 0.0 : p[0]};
  std::vector<double> q(p.size() - order, 0.0);
  for (std::size_t k = 0; k < q.size(); ++k) {
    double v = p[k];
    if (k >= 1) v -= a1 * q[k - 1];
    if (k >= 2) v -= a2 * q[k - 2];
    q[k] = v;
  }
  return q;
}

void check_finite(const Signal& s) {
  for (double x : s) {
    if (!std::isfinite(x)) throw NumericalError("non-finite input sample");
  }
}

}  // namespace

std::vector<double> poly_mul(const std::vector<double>& a,
                             const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {0.0};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

std::vector<double> poly_add(const std::vector<double>& a,
                             const std::vector<double>& b) {
  std::vector<double> out(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
  return out;
}

std::vector<Complex> poly_roots(const std::vector<double>& coeffs) {
  std::size_t lead = 0;
  while (lead < coeffs.size() && coeffs[lead] == 0.0) ++lead;
  if (lead == coeffs.size()) throw NumericalError("roots of zero polynomial");
  std::vector<double> c(coeffs.begin() + lead, coeffs.end());
  std::vector<Complex> roots;
  while (c.size() > 1 && c.back() == 0.0) {
    c.pop_back();
    roots.emplace_back(0.0, 0.0);
  }
  const std::size_t n = c.size() - 1;
  if (n == 0) return roots;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t j = 0; j < n; ++j) companion(0, j) = -c[j + 1] / c[0];
  for (std::size_t i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("polynomial root finding failed");
  }
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    roots.push_back(solver.eigenvalues()(i));
  }
  return roots;
}

TransferFunction::TransferFunction() : num_{0.0}, den_{1.0}, ts_(1.0) {}

TransferFunction::TransferFunction(std::vector<double> num,
                                   std::vector<double> den, double ts)
    : num_(std::move(num)), den_(std::move(den)), ts_(ts) {
  canonicalize();
}

TransferFunction TransferFunction::gain(double k, double ts) {
  return TransferFunction({k}, {1.0}, ts);
}

TransferFunction TransferFunction::delay(int d, double ts) {
  std::vector<double> num(static_cast<std::size_t>(d) + 1, 0.0);
  num.back() = 1.0;
  return TransferFunction(num, {1.0}, ts);
}

void TransferFunction::canonicalize() {
  if (num_.empty()) num_ = {0.0};
  if (den_.empty()) throw NumericalError("empty denominator");
  for (double x : num_) {
    if (!std::isfinite(x)) throw NumericalError("non-finite coefficient");
  }
  for (double x : den_) {
    if (!std::isfinite(x)) throw NumericalError("non-finite coefficient");
  }
  trim_trailing(num_);
  trim_trailing(den_);
  if (max_abs(den_) == 0.0) throw NumericalError("zero denominator");
  if (max_abs(num_) == 0.0) {
    num_ = {0.0};
    den_ = {1.0};
    return;
  }
  while (den_.size() > 1 && num_.size() > 1 && den_[0] == 0.0 &&
         num_[0] == 0.0) {
    den_.erase(den_.begin());
    num_.erase(num_.begin());
  }
  if (den_[0] == 0.0) throw NumericalError("non-causal transfer function");
  const double a0 = den_[0];
  for (double& x : num_) x /= a0;
  for (double& x : den_) x /= a0;
}

bool TransferFunction::is_zero() const {
  return num_.size() == 1 && num_[0] == 0.0;
}

bool TransferFunction::is_static() const {
  return num_.size() == 1 && den_.size() == 1;
}

int TransferFunction::relative_degree() const {
  if (is_zero()) return 0;
  int d = 0;
  while (num_[d] == 0.0) ++d;
  return d;
}

Complex TransferFunction::eval(double omega) const {
  const Complex qinv = std::polar(1.0, -omega);
  return poly_eval(num_, qinv) / poly_eval(den_, qinv);
}

double TransferFunction::dc_gain() const {
  double a = 0.0;
  double b = 0.0;
  for (double x : den_) a += x;
  for (double x : num_) b += x;
  if (std::abs(a) < 1e-14 * max_abs(den_)) {
    throw NumericalError("transfer function has a pole at z = 1");
  }
  return b / a;
}

std::vector<Complex> TransferFunction::poles() const {
  return poly_roots(den_);
}

std::vector<Complex> TransferFunction::zeros() const {
  if (is_zero()) return {};
  return poly_roots(num_);
}

TransferFunction TransferFunction::operator-() const {
  return (-1.0) * *this;
}

TransferFunction operator+(const TransferFunction& a,
                           const TransferFunction& b) {
  if (a.is_zero()) return TransferFunction(b.num_, b.den_, a.ts_);
  if (b.is_zero()) return a;
  if (same_poly(a.den_, b.den_)) {
    return TransferFunction(poly_add(a.num_, b.num_), a.den_, a.ts_);
  }
  return TransferFunction(
      poly_add(poly_mul(a.num_, b.den_), poly_mul(b.num_, a.den_)),
      poly_mul(a.den_, b.den_), a.ts_);
}

TransferFunction operator-(const TransferFunction& a,
                           const TransferFunction& b) {
  return a + (-1.0) * b;
}

TransferFunction operator*(const TransferFunction& a,
                           const TransferFunction& b) {
  return TransferFunction(poly_mul(a.num_, b.num_), poly_mul(a.den_, b.den_),
                          a.ts_);
}

TransferFunction operator*(double k, const TransferFunction& a) {
  std::vector<double> num = a.num_;
  for (double& x : num) x *= k;
  return TransferFunction(num, a.den_, a.ts_);
}

TransferFunction operator/(const TransferFunction& a,
                           const TransferFunction& b) {
  if (b.is_zero()) throw NumericalError("division by the zero system");
  return TransferFunction(poly_mul(a.num_, b.den_), poly_mul(a.den_, b.num_),
                          a.ts_);
}

bool TransferFunction::operator==(const TransferFunction& other) const {
  return num_ == other.num_ && den_ == other.den_;
}

bool TransferFunction::approx_equal(const TransferFunction& other,
                                    double tol) const {
  auto close = [tol](const std::vector<double>& a,
                     const std::vector<double>& b) {
    const std::size_t n = std::max(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
      const double x = i < a.size() ? a[i] : 0.0;
      const double y = i < b.size() ? b[i] : 0.0;
      if (std::abs(x - y) > tol) return false;
    }
    return true;
  };
  return close(num_, other.num_) && close(den_, other.den_);
}

Signal simulate(const TransferFunction& tf, const Signal& input,
                bool initial_rest) {
  if (input.empty()) throw NumericalError("empty input signal");
  check_finite(input);
  const auto& b = tf.num();
  const auto& a = tf.den();
  const std::size_t n = input.size();
  const std::size_t nb = b.size();
  const std::size_t na = a.size();
  double u_init = 0.0;
  double y_init = 0.0;
  if (!initial_rest) {
    u_init = input[0];
    y_init = tf.dc_gain() * u_init;
  }
  Signal y(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < nb; ++k) {
      acc += b[k] * (k <= t ? input[t - k] : u_init);
    }
    for (std::size_t k = 1; k < na; ++k) {
      acc -= a[k] * (k <= t ? y[t - k] : y_init);
    }
    y[t] = acc;
  }
  return y;
}

Signal impulse_response(const TransferFunction& tf, std::size_t length) {
  if (length == 0) return {};
  Signal delta(length, 0.0);
  delta[0] = 1.0;
  return simulate(tf, delta);
}

Signal step_response(const TransferFunction& tf, std::size_t length) {
  if (length == 0) return {};
  return simulate(tf, Signal(length, 1.0));
}

TransferFunction feedback(const TransferFunction& c,
                          const TransferFunction& g) {
  const auto loop_num = poly_mul(c.num(), g.num());
  const auto loop_den = poly_mul(c.den(), g.den());
  const auto den = poly_add(loop_den, loop_num);
  if (max_abs(den) == 0.0) throw NumericalError("1 + CG is identically zero");
  return TransferFunction(loop_num, den, g.ts());
}

TransferFunction sensitivity(const TransferFunction& c,
                             const TransferFunction& g) {
  const auto loop_num = poly_mul(c.num(), g.num());
  const auto loop_den = poly_mul(c.den(), g.den());
  const auto den = poly_add(loop_den, loop_num);
  if (max_abs(den) == 0.0) throw NumericalError("1 + CG is identically zero");
  return TransferFunction(loop_den, den, g.ts());
}

TransferFunction minreal(const TransferFunction& tf, double tol) {
  if (tf.is_zero() || tf.den().size() == 1) return tf;
  std::vector<double> num = tf.num();
  std::vector<double> den = tf.den();
  std::vector<Complex> zs = tf.zeros();
  std::vector<Complex> ps = tf.poles();
  std::vector<bool> zero_used(zs.size(), false);
  for (const Complex& p : ps) {
    if (p.imag() < -tol) continue;  // handled with its conjugate
    const bool pair = p.imag() > tol;
    for (std::size_t i = 0; i < zs.size(); ++i) {
      if (zero_used[i]) continue;
      const Complex z = zs[i];
      if (std::abs(z - p) > tol * std::max(1.0, std::abs(p))) continue;
      if (pair != (z.imag() > tol)) continue;
      zero_used[i] = true;
      if (pair) {
        for (std::size_t j = 0; j < zs.size(); ++j) {
          if (!zero_used[j] &&
              std::abs(zs[j] - std::conj(z)) <= tol * std::max(1.0, std::abs(z))) {
            zero_used[j] = true;
            break;
          }
        }
        num = deflate(num, -2.0 * z.real(), std::norm(z));
        den = deflate(den, -2.0 * p.real(), std::norm(p));
      } else {
        num = deflate(num, -z.real(), 0.0);
        den = deflate(den, -p.real(), 0.0);
      }
      break;
    }
  }
  return TransferFunction(num, den, tf.ts());
}

double spectral_radius(const TransferFunction& tf) {
  double r = 0.0;
  for (const Complex& p : tf.poles()) r = std::max(r, std::abs(p));
  return r;
}

bool is_stable(const TransferFunction& tf, double tolerance) {
  return spectral_radius(tf) < 1.0 - tolerance;
}

double norm_h2(const TransferFunction& tf, std::size_t horizon) {
  if (!is_stable(tf)) throw NumericalError("norm_h2 of an unstable system");
  std::size_t n = std::max<std::size_t>(horizon, 16);
  constexpr std::size_t kMaxHorizon = std::size_t{1} << 24;
  while (true) {
    const Signal h = impulse_response(tf, n);
    double total = 0.0;
    double tail = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += h[i] * h[i];
      if (i >= n / 2) tail += h[i] * h[i];
    }
    if (total == 0.0 || tail < 1e-12 * total) return std::sqrt(total);
    if (n >= kMaxHorizon) {
      throw NumericalError("norm_h2 horizon limit reached");
    }
    n *= 2;
  }
}

double norm_hinf(const TransferFunction& tf, std::size_t grid_size) {
  if (grid_size < 64) throw UsageError("norm_hinf grid_size must be >= 64");
  if (!is_stable(tf)) throw NumericalError("norm_hinf of an unstable system");
  const double pi = std::numbers::pi;
  auto mag = [&tf](double w) { return std::abs(tf.eval(w)); };
  const double step = pi / static_cast<double>(grid_size - 1);
  std::vector<double> values(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) values[i] = mag(step * i);

  std::vector<double> centers;
  for (std::size_t i = 0; i < grid_size; ++i) {
    const bool left = i == 0 || values[i] >= values[i - 1];
    const bool right = i + 1 == grid_size || values[i] >= values[i + 1];
    if (left && right) centers.push_back(step * i);
  }
  std::sort(centers.begin(), centers.end(), [&](double x, double y) {
    return mag(x) > mag(y);
  });
  if (centers.size() > 8) centers.resize(8);
  for (const Complex& p : tf.poles()) centers.push_back(std::abs(std::arg(p)));

  double best = *std::max_element(values.begin(), values.end());
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (double c : centers) {
    double lo = std::max(0.0, c - step);
    double hi = std::min(pi, c + step);
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = mag(x1);
    double f2 = mag(x2);
    for (int it = 0; it < 80 && hi - lo > 1e-13; ++it) {
      if (f1 < f2) {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + inv_phi * (hi - lo);
        f2 = mag(x2);
      } else {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - inv_phi * (hi - lo);
        f1 = mag(x1);
      }
    }
    best = std::max({best, f1, f2, mag(c)});
  }
  return best;
}

ControllerBasis pi_basis(double ts) {
  ControllerBasis basis;
  basis.name = "pi";
  basis.elements.push_back(TransferFunction::gain(1.0, ts));
  basis.elements.push_back(
      TransferFunction({ts / 2.0, ts / 2.0}, {1.0, -1.0}, ts));
  return basis;
}

ControllerBasis basis_by_name(const std::string& name, double ts) {
  if (name == "pi") return pi_basis(ts);
  throw UsageError("unknown controller basis '" + name + "'");
}

TransferFunction weighted_sum(const std::vector<TransferFunction>& tfs,
                              const std::vector<double>& weights) {
  if (tfs.size() != weights.size()) {
    throw UsageError("weighted_sum: size mismatch");
  }
  if (tfs.empty()) return TransferFunction();
  bool shared = true;
  for (const auto& tf : tfs) shared = shared && same_poly(tf.den(), tfs[0].den());
  if (shared) {
    std::vector<double> num;
    for (std::size_t k = 0; k < tfs.size(); ++k) {
      std::vector<double> scaled = tfs[k].num();
      for (double& x : scaled) x *= weights[k];
      num = poly_add(num, scaled);
    }
    return TransferFunction(num, tfs[0].den(), tfs[0].ts());
  }
  TransferFunction acc = weights[0] * tfs[0];
  for (std::size_t k = 1; k < tfs.size(); ++k) acc = acc + weights[k] * tfs[k];
  return acc;
}

TransferFunction combine(const ControllerBasis& basis,
                         const std::vector<double>& theta) {
  if (theta.size() != basis.size() || basis.size() == 0) {
    throw UsageError("theta length does not match basis '" + basis.name + "'");
  }
  // Common denominator over the distinct element denominators, so every
  // theta yields the same denominator.
  std::vector<std::vector<double>> dens;
  std::vector<std::size_t> den_index;
  for (const auto& e : basis.elements) {
    std::size_t j = 0;
    while (j < dens.size() && !same_poly(dens[j], e.den())) ++j;
    if (j == dens.size()) dens.push_back(e.den());
    den_index.push_back(j);
  }
  std::vector<double> den{1.0};
  for (const auto& d : dens) den = poly_mul(den, d);
  std::vector<double> num;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    std::vector<double> term = basis.elements[k].num();
    for (std::size_t j = 0; j < dens.size(); ++j) {
      if (j != den_index[k]) term = poly_mul(term, dens[j]);
    }
    for (double& x : term) x *= theta[k];
    num = poly_add(num, term);
  }
  return TransferFunction(num, den, basis.elements[0].ts());
}

TransferFunction materialize(const ControllerParams& params) {
  return combine(basis_by_name(params.basis, params.ts), params.theta);
}

}  // namespace metavrft
