#ifndef METAVRFT_SIGNALS_HPP_
#define METAVRFT_SIGNALS_HPP_

#include <cstdint>
#include <string_view>
#include <utility>

#include "metavrft/lti.hpp"

namespace metavrft {

enum class DatasetKind { kOpenLoop, kClosedLoop };

struct Dataset {
  Signal u;
  Signal y;
  double ts = 1.0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  DatasetKind kind = DatasetKind::kOpenLoop;
  Signal reference;  // closed loop only
  bool unstable = false;  // closed loop diverged; samples truncated

  std::size_t size() const { return y.size(); }
  // Throws UsageError when the field invariants do not hold.
  void validate() const;
};

// Labeled sub-seed: hashing (master, label, index) so that new streams never
// shift existing ones.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t index = 0);

Signal white_noise(std::size_t length, double std_dev, std::uint64_t seed);

double sample_std(const Signal& s);

Dataset generate_open_loop(const TransferFunction& g, const Signal& input,
                           double noise_std, std::uint64_t seed);

// Sample-by-sample loop with measurement noise fed back:
//   e = r - (y0 + v), u = C e, y0 = G u, recorded y = y0 + v.
Dataset simulate_closed_loop(const TransferFunction& g,
                             const TransferFunction& c,
                             const Signal& reference, double noise_std,
                             std::uint64_t seed);

inline constexpr double kDivergenceLimit = 1e12;

struct VirtualReference {
  // r[s] is the virtual set point at time s, s = 0 .. T - d - 1.
  Signal r;
  std::size_t delay = 0;
  // Output samples reproduced by M r_v: [first, last).
  std::pair<std::size_t, std::size_t> valid_range;
};

// Inverts M with a shift of its relative degree d. The first d output samples
// are treated as initial conditions and excluded from valid_range.
VirtualReference virtual_reference(const TransferFunction& m, const Signal& y);

struct Prefilter {
  TransferFunction shape;
  double gain = 1.0;

  TransferFunction combined() const { return gain * shape; }
  Signal apply(const Signal& x) const;
};

// L = W M (1 - M) / Phi_u^(1/2). White mode uses the sample standard deviation
// of u; otherwise an autoregressive spectral factor of u is absorbed in L.
Prefilter design_prefilter(const TransferFunction& m,
                           const TransferFunction& w, const Signal& u,
                           bool white_input = true, int ar_order = 20);

// 10 log10(sum clean^2 / sum noise^2).
double snr_db(const Signal& clean, const Signal& noise);

}  // namespace metavrft

#endif  // METAVRFT_SIGNALS_HPP_
