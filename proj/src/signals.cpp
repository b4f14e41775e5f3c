#include "metavrft/signals.hpp"

#include <cmath>
#include <random>

#include "metavrft/errors.hpp"

namespace metavrft {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Levinson-Durbin recursion on biased autocorrelations r[0..p].
std::vector<double> levinson(const std::vector<double>& r, double* variance) {
  const std::size_t p = r.size() - 1;
  std::vector<double> a{1.0};
  double err = r[0];
  for (std::size_t k = 1; k <= p; ++k) {
    double acc = r[k];
    for (std::size_t i = 1; i < k; ++i) acc += a[i] * r[k - i];
    const double refl = -acc / err;
    std::vector<double> next(k + 1, 0.0);
    next[0] = 1.0;
    for (std::size_t i = 1; i < k; ++i) next[i] = a[i] + refl * a[k - i];
    next[k] = refl;
    a = std::move(next);
    err *= 1.0 - refl * refl;
    if (err <= 0.0) break;
  }
  *variance = err;
  return a;
}

}  // namespace

void Dataset::validate() const {
  if (u.size() != y.size() || y.empty()) {
    throw UsageError("dataset: u and y must have equal nonzero length");
  }
  if (!(noise_std >= 0.0)) throw UsageError("dataset: negative noise_std");
  if (kind == DatasetKind::kClosedLoop && reference.size() != y.size()) {
    throw UsageError("dataset: closed-loop reference length mismatch");
  }
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(master ^ h) + index);
}

Signal white_noise(std::size_t length, double std_dev, std::uint64_t seed) {
  Signal out(length, 0.0);
  if (std_dev == 0.0) return out;
  if (!(std_dev > 0.0)) throw UsageError("noise std must be >= 0");
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> dist(0.0, std_dev);
  for (double& x : out) x = dist(engine);
  return out;
}

double sample_std(const Signal& s) {
  if (s.empty()) return 0.0;
  double mean = 0.0;
  for (double x : s) mean += x;
  mean /= static_cast<double>(s.size());
  double var = 0.0;
  for (double x : s) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(s.size()));
}

Dataset generate_open_loop(const TransferFunction& g, const Signal& input,
                           double noise_std, std::uint64_t seed) {
  if (noise_std < 0.0) throw UsageError("noise_std must be >= 0");
  if (!is_stable(g)) {
    throw NumericalError("open-loop data collection requires a stable plant");
  }
  Dataset d;
  d.u = input;
  d.y = simulate(g, input);
  const Signal v = white_noise(input.size(), noise_std, seed);
  for (std::size_t t = 0; t < d.y.size(); ++t) d.y[t] += v[t];
  d.ts = g.ts();
  d.noise_std = noise_std;
  d.seed = seed;
  d.kind = DatasetKind::kOpenLoop;
  return d;
}

Dataset simulate_closed_loop(const TransferFunction& g,
                             const TransferFunction& c,
                             const Signal& reference, double noise_std,
                             std::uint64_t seed) {
  if (reference.empty()) throw NumericalError("empty reference");
  const auto& gb = g.num();
  const auto& ga = g.den();
  const auto& cb = c.num();
  const auto& ca = c.den();
  const double loop_gain = cb[0] * gb[0];
  if (std::abs(1.0 + loop_gain) < 1e-12) {
    throw NumericalError("ill-posed algebraic loop (1 + c0 g0 = 0)");
  }
  const std::size_t n = reference.size();
  const Signal v = white_noise(n, noise_std, seed);
  Signal u(n, 0.0), y0(n, 0.0), e(n, 0.0);
  std::size_t length = n;
  bool unstable = false;
  for (std::size_t t = 0; t < n; ++t) {
    double rest_g = 0.0;
    for (std::size_t k = 1; k < gb.size() && k <= t; ++k) rest_g += gb[k] * u[t - k];
    for (std::size_t k = 1; k < ga.size() && k <= t; ++k) rest_g -= ga[k] * y0[t - k];
    double rest_c = 0.0;
    for (std::size_t k = 1; k < cb.size() && k <= t; ++k) rest_c += cb[k] * e[t - k];
    for (std::size_t k = 1; k < ca.size() && k <= t; ++k) rest_c -= ca[k] * u[t - k];
    u[t] = (cb[0] * (reference[t] - v[t] - rest_g) + rest_c) / (1.0 + loop_gain);
    y0[t] = gb[0] * u[t] + rest_g;
    e[t] = reference[t] - y0[t] - v[t];
    if (!std::isfinite(y0[t]) || !std::isfinite(u[t]) ||
        std::abs(y0[t]) > kDivergenceLimit || std::abs(u[t]) > kDivergenceLimit) {
      length = t;
      unstable = true;
      break;
    }
  }
  Dataset d;
  d.u.assign(u.begin(), u.begin() + length);
  d.y.resize(length);
  for (std::size_t t = 0; t < length; ++t) d.y[t] = y0[t] + v[t];
  d.reference.assign(reference.begin(), reference.begin() + length);
  d.ts = g.ts();
  d.noise_std = noise_std;
  d.seed = seed;
  d.kind = DatasetKind::kClosedLoop;
  d.unstable = unstable;
  return d;
}

VirtualReference virtual_reference(const TransferFunction& m, const Signal& y) {
  if (y.empty()) throw NumericalError("empty output signal");
  if (m.is_zero()) throw NumericalError("reference model is zero");
  if (m == TransferFunction::gain(1.0, m.ts())) {
    throw NumericalError("reference model M = 1 has no virtual reference");
  }
  if (!is_stable(m)) throw NumericalError("reference model must be stable");
  const std::size_t d = static_cast<std::size_t>(m.relative_degree());
  if (y.size() <= d) throw NumericalError("output shorter than model delay");
  std::vector<double> lead(m.num().begin() + d, m.num().end());
  for (const Complex& z : poly_roots(lead)) {
    if (std::abs(z) >= 1.0 - kStabilityTolerance) {
      throw NumericalError("reference model has a non-minimum-phase zero");
    }
  }
  const TransferFunction inverse(m.den(), lead, m.ts());
  VirtualReference out;
  out.delay = d;
  out.r = simulate(inverse, Signal(y.begin() + d, y.end()));
  out.valid_range = {d, y.size()};
  return out;
}

Signal Prefilter::apply(const Signal& x) const {
  Signal out = simulate(shape, x);
  for (double& v : out) v *= gain;
  return out;
}

Prefilter design_prefilter(const TransferFunction& m,
                           const TransferFunction& w, const Signal& u,
                           bool white_input, int ar_order) {
  if (!is_stable(m)) throw NumericalError("reference model must be stable");
  const double sd = sample_std(u);
  if (!(sd > 0.0)) throw NumericalError("zero-variance input");
  const TransferFunction xi = TransferFunction::gain(1.0, m.ts()) - m;
  Prefilter out;
  out.shape = minreal(w * m * xi);
  if (white_input) {
    out.gain = 1.0 / sd;
    return out;
  }
  // Yule-Walker AR fit: Phi_u ~ s2 / |A|^2, so Phi_u^(-1/2) = A / s.
  const std::size_t n = u.size();
  const std::size_t p = std::min<std::size_t>(
      static_cast<std::size_t>(std::max(ar_order, 1)), n / 4);
  double mean = 0.0;
  for (double x : u) mean += x;
  mean /= static_cast<double>(n);
  std::vector<double> r(p + 1, 0.0);
  for (std::size_t k = 0; k <= p; ++k) {
    for (std::size_t t = k; t < n; ++t) r[k] += (u[t] - mean) * (u[t - k] - mean);
    r[k] /= static_cast<double>(n);
  }
  double variance = 0.0;
  const std::vector<double> a = levinson(r, &variance);
  if (!(variance > 0.0)) throw NumericalError("degenerate input spectrum");
  out.shape = out.shape * TransferFunction(a, {1.0}, m.ts());
  out.gain = 1.0 / std::sqrt(variance);
  return out;
}

double snr_db(const Signal& clean, const Signal& noise) {
  double s = 0.0;
  double v = 0.0;
  for (double x : clean) s += x * x;
  for (double x : noise) v += x * x;
  if (!(v > 0.0)) throw NumericalError("snr of zero noise");
  return 10.0 * std::log10(s / v);
}

}  // namespace metavrft
