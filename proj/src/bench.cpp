#include "metavrft/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "metavrft/errors.hpp"
#include "metavrft/io.hpp"
#include "metavrft/spectral.hpp"
#include "metavrft/vrft.hpp"

namespace metavrft {
namespace {

using Clock = std::chrono::steady_clock;
constexpr double kInf = std::numeric_limits<double>::infinity();

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Runs fn(0..n-1) on up to `jobs` threads. Results must be written by index.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

DesignConfig design_config(const BenchConfig& c, double lambda_j, double lambda_s,
                           std::optional<double> delta) {
  DesignConfig d;
  d.lambda_j = lambda_j;
  d.lambda_s = lambda_s;
  d.delta = delta;
  d.ell = c.ell;
  d.normalization = c.normalization;
  return d;
}

void finish(MethodResult& r, const TransferFunction& g, const TransferFunction& c,
            const BenchConfig& config, std::uint64_t eval_seed) {
  r.eval = evaluate_controller(g, c, config, eval_seed);
  r.tuning_ms = r.solver_ms + r.experiments * config.experiment_seconds * 1000.0;
}

void mark_failed(MethodResult& r, const std::string& what, const BenchConfig& config) {
  r.failed = true;
  r.failure = what;
  r.eval.unstable = true;
  r.eval.error = config.cap;
  r.eval.raw = kInf;
  r.eval.runs.assign(static_cast<std::size_t>(std::max(config.eval_runs, 1)), kInf);
  r.tuning_ms = r.solver_ms + r.experiments * config.experiment_seconds * 1000.0;
}

MethodResult meta_method(const std::string& name, const NewMotorData& nm,
                         const MetaDataset& meta, const DesignConfig& design,
                         const BenchConfig& config, std::uint64_t eval_seed) {
  MethodResult r;
  r.method = name;
  r.experiments = 2;
  const auto start = Clock::now();
  try {
    const MetaSolution sol = meta_tune(nm.d, nm.d_iv, meta, reference_model(config.family.ts), design);
    r.solver_ms = elapsed_ms(start);
    r.alpha = sol.alpha;
    r.delta_hat = sol.report.delta_hat;
    r.ell = sol.report.ell;
    if (auto p = combine_params(meta, sol.alpha)) r.theta = p->theta;
    finish(r, nm.motor.g, materialize_meta_controller(meta, sol.alpha), config, eval_seed);
  } catch (const NumericalError& e) {
    r.solver_ms = elapsed_ms(start);
    mark_failed(r, e.what(), config);
  }
  return r;
}

MethodResult vrft_method(const std::string& name, const NewMotorData& nm,
                         std::optional<StabilitySpec> stability,
                         const BenchConfig& config, std::uint64_t eval_seed) {
  MethodResult r;
  r.method = name;
  r.experiments = 2;
  VrftProblem problem;
  problem.dataset = nm.d;
  problem.dataset_iv = nm.d_iv;
  problem.m = reference_model(config.family.ts);
  problem.basis = pi_basis(config.family.ts);
  problem.stability = stability;
  const auto start = Clock::now();
  try {
    const VrftResult res = vrft_tune_detailed(problem);
    r.solver_ms = elapsed_ms(start);
    r.theta = res.params.theta;
    r.ell = res.ell;
    r.delta_hat = res.delta_hat;
    finish(r, nm.motor.g, materialize(res.params), config, eval_seed);
  } catch (const NumericalError& e) {
    r.solver_ms = elapsed_ms(start);
    mark_failed(r, e.what(), config);
  }
  return r;
}

MethodResult trivial_method(const NewMotorData& nm, const MetaDataset& meta,
                            const BenchConfig& config, std::uint64_t eval_seed) {
  MethodResult r;
  r.method = "trivial";
  r.experiments = 0;
  r.alpha.assign(meta.size(), 1.0 / static_cast<double>(meta.size()));
  if (auto p = combine_params(meta, r.alpha)) r.theta = p->theta;
  finish(r, nm.motor.g, materialize_meta_controller(meta, r.alpha), config, eval_seed);
  return r;
}

MetaDataset prefix(const MetaDataset& meta, std::size_t n) {
  MetaDataset out;
  out.entries.assign(meta.entries.begin(), meta.entries.begin() + static_cast<long>(n));
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ";";
    out += format_number(v[i]);
  }
  return out;
}

nlohmann::json finite_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

// Minimal SVG charts.

constexpr double kW = 640.0;
constexpr double kH = 400.0;
constexpr double kPad = 60.0;

std::string svg_open(const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << title << "</text>\n";
  return os.str();
}

std::string svg_axis(double lo, double hi) {
  std::ostringstream os;
  os << "<line x1=\"" << kPad << "\" y1=\"" << kPad / 2 << "\" x2=\"" << kPad << "\" y2=\""
     << kH - kPad << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad / 2
     << "\" y2=\"" << kH - kPad << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const double y = kH - kPad - (kH - 1.5 * kPad) * k / 4.0;
    os << "<text x=\"" << kPad - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
       << static_cast<long>(std::lround(v)) << "</text>\n";
  }
  return os.str();
}

double y_pixel(double v, double lo, double hi) {
  const double t = hi > lo ? (std::clamp(v, lo, hi) - lo) / (hi - lo) : 0.0;
  return kH - kPad - (kH - 1.5 * kPad) * t;
}

std::string svg_boxplot(const std::string& title,
                        const std::vector<std::pair<std::string, std::vector<double>>>& groups,
                        double cap) {
  double hi = 0.0;
  for (const auto& [name, v] : groups) {
    for (double x : v) hi = std::max(hi, std::min(x, cap));
  }
  hi = hi > 0.0 ? hi * 1.05 : 1.0;
  std::string s = svg_open(title) + svg_axis(0.0, hi);
  const double slot = (kW - 1.5 * kPad) / static_cast<double>(std::max<std::size_t>(groups.size(), 1));
  std::ostringstream os;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<double> v;
    for (double x : groups[g].second) v.push_back(std::min(x, cap));
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
      const double idx = p * static_cast<double>(v.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
      const std::size_t up = std::min(lo + 1, v.size() - 1);
      return v[lo] + (v[up] - v[lo]) * (idx - static_cast<double>(lo));
    };
    const double cx = kPad + slot * (g + 0.5);
    const double bw = slot * 0.4;
    const double q1 = y_pixel(q(0.25), 0, hi), q2 = y_pixel(q(0.5), 0, hi),
                 q3 = y_pixel(q(0.75), 0, hi);
    os << "<line x1=\"" << cx << "\" y1=\"" << y_pixel(v.front(), 0, hi) << "\" x2=\"" << cx
       << "\" y2=\"" << y_pixel(v.back(), 0, hi) << "\" stroke=\"black\"/>\n";
    os << "<rect x=\"" << cx - bw / 2 << "\" y=\"" << q3 << "\" width=\"" << bw
       << "\" height=\"" << std::max(q1 - q3, 0.5) << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << cx - bw / 2 << "\" y1=\"" << q2 << "\" x2=\"" << cx + bw / 2
       << "\" y2=\"" << q2 << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << cx << "\" y=\"" << kH - kPad + 16 << "\" text-anchor=\"middle\">"
       << groups[g].first << "</text>\n";
  }
  return s + os.str() + "</svg>\n";
}

std::string svg_line(const std::string& title, const std::vector<double>& x,
                     const std::vector<double>& y, double cap) {
  double hi = 0.0;
  for (double v : y) hi = std::max(hi, std::min(v, cap));
  hi = hi > 0.0 ? hi * 1.05 : 1.0;
  const double x0 = x.empty() ? 0.0 : x.front();
  const double x1 = x.empty() ? 1.0 : std::max(x.back(), x0 + 1.0);
  auto px = [&](double v) { return kPad + (kW - 1.5 * kPad) * (v - x0) / (x1 - x0); };
  std::ostringstream os;
  os << svg_open(title) << svg_axis(0.0, hi) << "<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"";
  for (std::size_t i = 0; i < x.size(); ++i) {
    os << px(x[i]) << "," << y_pixel(std::min(y[i], cap), 0, hi) << " ";
  }
  os << "\"/>\n";
  for (std::size_t i = 0; i < x.size(); ++i) {
    os << "<circle cx=\"" << px(x[i]) << "\" cy=\"" << y_pixel(std::min(y[i], cap), 0, hi)
       << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    os << "<text x=\"" << px(x[i]) << "\" y=\"" << kH - kPad + 16 << "\" text-anchor=\"middle\">"
       << x[i] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_heatmap(const std::string& title, const SensitivityResult& r, double cap) {
  std::ostringstream os;
  os << svg_open(title);
  const std::size_t ns = r.lambda_s.size(), nj = r.lambda_j.size();
  if (ns == 0 || nj == 0) return os.str() + "</svg>\n";
  const double cw = (kW - 1.5 * kPad) / static_cast<double>(ns);
  const double ch = (kH - 1.5 * kPad) / static_cast<double>(nj);
  double lo = cap;
  for (const auto& row : r.mean_error) {
    for (double v : row) lo = std::min(lo, v);
  }
  for (std::size_t j = 0; j < nj; ++j) {
    for (std::size_t s = 0; s < ns; ++s) {
      const double v = std::min(r.mean_error[j][s], cap);
      const double t = cap > lo ? (v - lo) / (cap - lo) : 0.0;
      const int red = static_cast<int>(255 * t), blue = static_cast<int>(255 * (1 - t));
      const double x = kPad + cw * s, y = kPad / 2 + ch * (nj - 1 - j);
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw << "\" height=\"" << ch
         << "\" fill=\"rgb(" << red << ",80," << blue << ")\"/>\n";
      os << "<text x=\"" << x + cw / 2 << "\" y=\"" << y + ch / 2 + 4
         << "\" text-anchor=\"middle\" fill=\"white\">" << static_cast<long>(std::lround(v))
         << "</text>\n";
    }
  }
  for (std::size_t s = 0; s < ns; ++s) {
    os << "<text x=\"" << kPad + cw * (s + 0.5) << "\" y=\"" << kH - kPad + 16
       << "\" text-anchor=\"middle\">" << r.lambda_s[s] << "</text>\n";
  }
  for (std::size_t j = 0; j < nj; ++j) {
    os << "<text x=\"" << kPad - 6 << "\" y=\"" << kPad / 2 + ch * (nj - j - 0.5) + 4
       << "\" text-anchor=\"end\">" << r.lambda_j[j] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace

TransferFunction MotorFamily::member(double kappa, double p2) const {
  return TransferFunction({0.0, 0.0, kappa}, poly_mul({1.0, -p1}, {1.0, -p2}), ts);
}

Motor sample_motor(std::uint64_t seed, const MotorFamily& family) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> kappa(family.kappa_min, family.kappa_max);
  std::uniform_real_distribution<double> pole(family.p2_min, family.p2_max);
  Motor m;
  m.kappa = kappa(rng);
  m.p2 = pole(rng);
  m.g = family.member(m.kappa, m.p2);
  return m;
}

TransferFunction reference_model(double ts) {
  return TransferFunction({0.0, 0.0609}, {1.0, -0.9391}, ts);
}

double family_similarity(const MotorFamily& family) {
  const std::vector<TransferFunction> corners = {
      family.member(family.kappa_min, family.p2_min),
      family.member(family.kappa_min, family.p2_max),
      family.member(family.kappa_max, family.p2_min),
      family.member(family.kappa_max, family.p2_max)};
  double eps = 0.0;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    for (std::size_t j = i + 1; j < corners.size(); ++j) {
      eps = std::max(eps, norm_h2(corners[i] - corners[j]));
    }
  }
  return eps;
}

double matching_error(const Dataset& closed_loop, const TransferFunction& m,
                      const Signal& reference) {
  if (closed_loop.unstable) return kInf;
  if (closed_loop.size() != reference.size()) {
    throw UsageError("matching_error: reference and response lengths differ");
  }
  const Signal desired = simulate(m, reference);
  double s = 0.0;
  for (std::size_t t = 0; t < desired.size(); ++t) {
    const double e = desired[t] - closed_loop.y[t];
    s += e * e;
  }
  return std::sqrt(s);
}

nlohmann::json config_to_json(const BenchConfig& c) {
  nlohmann::json j{{"seed", c.seed},
                   {"family",
                    {{"p1", c.family.p1},
                     {"kappa", {c.family.kappa_min, c.family.kappa_max}},
                     {"p2", {c.family.p2_min, c.family.p2_max}},
                     {"ts", c.family.ts}}},
                   {"samples", c.samples},
                   {"input_std", c.input_std},
                   {"noise_std", c.noise_std},
                   {"step", c.step},
                   {"horizon", c.horizon},
                   {"eval_noise_std", c.eval_noise_std},
                   {"eval_runs", c.eval_runs},
                   {"n_meta", c.n_meta},
                   {"n_new", c.n_new},
                   {"calibration_samples", c.calibration_samples},
                   {"entry_delta", c.entry_delta},
                   {"lambda_j", c.lambda_j},
                   {"lambda_s", c.lambda_s},
                   {"cvrft_delta", c.cvrft_delta},
                   {"ell", c.ell},
                   {"cap", c.cap},
                   {"jobs", c.jobs},
                   {"normalization", c.normalization == IndexNormalization::kMax ? "max" : "none"},
                   {"experiment_seconds", c.experiment_seconds}};
  j["delta"] = c.delta ? nlohmann::json(*c.delta) : nlohmann::json(nullptr);
  return j;
}

MetaBuild build_meta_dataset(const BenchConfig& config, std::size_t n) {
  if (n == 0) throw UsageError("meta-dataset size must be positive");
  MetaBuild build;
  build.input = white_noise(config.samples, config.input_std, derive_seed(config.seed, "input"));
  const TransferFunction m = reference_model(config.family.ts);
  const TransferFunction w = inverse_complementary_weight(m);
  const std::size_t max_candidates = 20 * n + 100;

  struct Candidate {
    Motor motor;
    std::optional<MetaEntryTuning> tuning;
  };
  std::size_t index = 0;
  while (build.meta.size() < n) {
    if (index >= max_candidates) {
      throw NumericalError("meta-dataset construction rejected too many controllers");
    }
    const std::size_t batch =
        std::max<std::size_t>(n - build.meta.size(), static_cast<std::size_t>(std::max(config.jobs, 1)));
    std::vector<Candidate> cands(batch);
    parallel_for(batch, config.jobs, [&](std::size_t b) {
      const std::size_t k = index + b;
      Candidate& c = cands[b];
      c.motor = sample_motor(derive_seed(config.seed, "meta-motor", k), config.family);
      const Signal cal = white_noise(config.calibration_samples, config.input_std,
                                     derive_seed(config.seed, "calibration-input", k));
      const Dataset d = generate_open_loop(c.motor.g, cal, config.noise_std,
                                           derive_seed(config.seed, "calibration", k));
      const Dataset d_iv = generate_open_loop(c.motor.g, cal, config.noise_std,
                                              derive_seed(config.seed, "calibration-iv", k));
      EntryConfig ec;
      ec.m = m;
      ec.w = w;
      ec.stability = StabilitySpec{config.entry_delta, config.ell};
      ec.step_amplitude = config.step;
      ec.horizon = config.horizon;
      ec.noise_std = config.eval_noise_std;
      ec.seed = derive_seed(config.seed, "meta-closed-loop", k);
      try {
        c.tuning = build_meta_controller_entry(d, d_iv, c.motor.g, ec);
      } catch (const NumericalError&) {
        c.tuning.reset();
      }
    });
    for (std::size_t b = 0; b < batch && build.meta.size() < n; ++b) {
      const std::size_t k = index + b;
      Candidate& c = cands[b];
      if (!c.tuning) {
        ++build.rejected;
        continue;
      }
      MetaEntry e;
      e.controller = c.tuning->controller;
      e.closed_loop = std::move(c.tuning->closed_loop);
      e.open_loop = generate_open_loop(c.motor.g, build.input, config.noise_std,
                                       derive_seed(config.seed, "meta-open-loop", k));
      e.delta_k = config.entry_delta;
      build.meta.entries.push_back(std::move(e));
      build.motors.push_back(c.motor);
    }
    index += batch;
  }
  return build;
}

NewMotorData new_motor_data(const BenchConfig& config, std::size_t index,
                            const Signal& input, double noise_std) {
  NewMotorData nm;
  nm.motor = sample_motor(derive_seed(config.seed, "new-motor", index), config.family);
  nm.d = generate_open_loop(nm.motor.g, input, noise_std, derive_seed(config.seed, "new-data", index));
  nm.d_iv = generate_open_loop(nm.motor.g, input, noise_std,
                               derive_seed(config.seed, "new-data-iv", index));
  return nm;
}

double median(std::vector<double> values) {
  if (values.empty()) throw UsageError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

int count_outliers(const std::vector<double>& values, double factor) {
  if (values.empty()) return 0;
  const double med = median(values);
  return static_cast<int>(std::count_if(values.begin(), values.end(),
                                        [&](double v) { return v > factor * med; }));
}

Evaluation evaluate_controller(const TransferFunction& g, const TransferFunction& c,
                               const BenchConfig& config, std::uint64_t eval_seed) {
  if (config.eval_runs < 1) throw UsageError("eval_runs must be >= 1");
  const TransferFunction m = reference_model(config.family.ts);
  const Signal reference(config.horizon, config.step);
  Evaluation ev;
  ev.unstable = !is_stable(feedback(c, g));
  for (int r = 0; r < config.eval_runs; ++r) {
    const Dataset cl = simulate_closed_loop(g, c, reference, config.eval_noise_std,
                                            derive_seed(eval_seed, "run", static_cast<std::uint64_t>(r)));
    double e = matching_error(cl, m, reference);
    if (!std::isfinite(e)) ev.unstable = true;
    ev.runs.push_back(e);
  }
  if (ev.unstable) {
    std::fill(ev.runs.begin(), ev.runs.end(), kInf);
    ev.raw = kInf;
    ev.error = config.cap;
  } else {
    ev.raw = median(ev.runs);
    ev.error = ev.raw;
  }
  return ev;
}

double MethodResult::rank_key() const {
  return (failed || eval.unstable) ? kInf : eval.raw;
}

const MethodResult& MotorResult::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  if (name == lambda0.method) return lambda0;
  throw UsageError("no result for method '" + name + "'");
}

double ComparisonResult::mean_error(const std::string& method) const {
  std::vector<double> v;
  for (const auto& m : motors) v.push_back(m.method(method).eval.error);
  return mean_of(v);
}

int ComparisonResult::unstable_count(const std::string& method) const {
  int n = 0;
  for (const auto& m : motors) {
    const auto& r = m.method(method);
    n += (r.failed || r.eval.unstable) ? 1 : 0;
  }
  return n;
}

ComparisonResult run_comparison(const BenchConfig& config) {
  const MetaBuild build = build_meta_dataset(config, config.n_meta);
  const TransferFunction m = reference_model(config.family.ts);
  ComparisonResult out;
  out.rejected_entries = build.rejected;
  for (const auto& e : build.meta.entries) {
    bool ok = false;
    try {
      ok = screen_meta_controller(e.open_loop, m, materialize(e.controller), e.delta_k,
                                  SpectralGrid(config.ell));
    } catch (const Error&) {
      ok = false;
    }
    out.screened_out += ok ? 0 : 1;
  }
  out.motors.resize(config.n_new);
  parallel_for(config.n_new, config.jobs, [&](std::size_t i) {
    const NewMotorData nm = new_motor_data(config, i, build.input, config.noise_std);
    const std::uint64_t eval_seed = derive_seed(config.seed, "evaluation", i);
    MotorResult& mr = out.motors[i];
    mr.index = i;
    mr.motor = nm.motor;
    const MetaIndices idx = compute_indices(nm.d, build.meta, m);
    mr.S.assign(idx.S.data(), idx.S.data() + idx.S.size());
    mr.J.assign(idx.J.data(), idx.J.data() + idx.J.size());
    mr.methods.push_back(meta_method(
        "meta", nm, build.meta, design_config(config, config.lambda_j, config.lambda_s, config.delta),
        config, eval_seed));
    mr.methods.push_back(
        vrft_method("cvrft", nm, StabilitySpec{config.cvrft_delta, config.ell}, config, eval_seed));
    mr.methods.push_back(vrft_method("vrft", nm, std::nullopt, config, eval_seed));
    mr.methods.push_back(trivial_method(nm, build.meta, config, eval_seed));
    mr.lambda0 = meta_method("meta_lambda0", nm, build.meta,
                             design_config(config, 0.0, 0.0, config.delta), config, eval_seed);
  });
  for (const auto& mr : out.motors) {
    const double meta = mr.method("meta").rank_key();
    out.meta_wins_vrft += meta < mr.method("vrft").rank_key() ? 1 : 0;
    out.meta_wins_cvrft += meta < mr.method("cvrft").rank_key() ? 1 : 0;
    out.meta_wins_trivial += meta < mr.method("trivial").rank_key() ? 1 : 0;
  }
  return out;
}

int NonDetResult::deteriorations(double lambda_s) const {
  int n = 0;
  for (const auto& r : runs) {
    if (r.lambda_s == lambda_s && r.deteriorated) ++n;
  }
  return n;
}

NonDetResult run_non_deteriorating(const BenchConfig& config,
                                   const std::vector<double>& lambda_s) {
  const MetaBuild build = build_meta_dataset(config, config.n_meta);
  const TransferFunction m = reference_model(config.family.ts);
  const std::size_t n = build.meta.size();
  std::vector<std::vector<NonDetRun>> per_motor(n);
  std::vector<int> noise_free_ok(n, 0);
  parallel_for(n, config.jobs, [&](std::size_t i) {
    const Motor& motor = build.motors[i];
    const Dataset d = generate_open_loop(motor.g, build.input, config.noise_std,
                                         derive_seed(config.seed, "nondet-data", i));
    const Dataset d_iv = generate_open_loop(motor.g, build.input, config.noise_std,
                                            derive_seed(config.seed, "nondet-data-iv", i));
    const std::uint64_t eval_seed = derive_seed(config.seed, "nondet-evaluation", i);
    const Evaluation own =
        evaluate_controller(motor.g, materialize(build.meta.entries[i].controller), config, eval_seed);
    for (double ls : lambda_s) {
      const MetaSolution sol =
          meta_tune(d, d_iv, build.meta, m, design_config(config, config.lambda_j, ls, config.delta));
      const Evaluation ev = evaluate_controller(
          motor.g, materialize_meta_controller(build.meta, sol.alpha), config, eval_seed);
      NonDetRun run;
      run.motor = i;
      run.lambda_s = ls;
      run.meta_error = ev.error;
      run.own_error = own.error;
      run.alpha = sol.alpha;
      const double mk = ev.unstable ? kInf : ev.raw;
      const double ok = own.unstable ? kInf : own.raw;
      run.deteriorated = mk > ok * (1.0 + 1e-9);
      per_motor[i].push_back(run);
    }
    // Noise-free data, no regularization: the minimizer cannot do worse than
    // the vertex e_i of the simplex.
    const Dataset d0 = generate_open_loop(motor.g, build.input, 0.0, 0);
    const QuadraticForm q = build_iv_objective(d0, d0, build.meta, m);
    DesignConfig dc = design_config(config, 0.0, 0.0, std::nullopt);
    dc.normalization = IndexNormalization::kNone;
    const MetaSolution sol = solve_meta(q, build.meta, dc, d0, m);
    Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(sol.alpha.data(), static_cast<long>(n));
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<long>(n));
    e(static_cast<long>(i)) = 1.0;
    const double va = q.value(a), ve = q.value(e);
    noise_free_ok[i] = va <= ve + 1e-9 * std::max(1.0, std::abs(ve)) ? 1 : 0;
  });
  NonDetResult out;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& r : per_motor[i]) out.runs.push_back(r);
    out.noise_free_ok += noise_free_ok[i];
  }
  out.noise_free_total = static_cast<int>(n);
  return out;
}

SensitivityResult run_sensitivity(const BenchConfig& config,
                                  const std::vector<double>& lambda_s,
                                  const std::vector<double>& lambda_j) {
  const MetaBuild build = build_meta_dataset(config, config.n_meta);
  const TransferFunction m = reference_model(config.family.ts);
  const std::size_t ns = lambda_s.size(), nj = lambda_j.size();
  // errors[motor][j * ns + s]
  std::vector<std::vector<double>> errors(config.n_new);
  std::vector<std::vector<int>> unstable(config.n_new);
  parallel_for(config.n_new, config.jobs, [&](std::size_t i) {
    const NewMotorData nm = new_motor_data(config, i, build.input, config.noise_std);
    const std::uint64_t eval_seed = derive_seed(config.seed, "evaluation", i);
    const auto controllers = build.meta.controllers();
    const QuadraticForm q = build_iv_objective(nm.d, nm.d_iv, controllers, m);
    const MetaIndices idx = compute_indices(nm.d, build.meta, m);
    for (std::size_t j = 0; j < nj; ++j) {
      for (std::size_t s = 0; s < ns; ++s) {
        const MetaSolution sol = solve_meta(
            q, idx, design_config(config, lambda_j[j], lambda_s[s], config.delta), nm.d, m, controllers);
        const Evaluation ev = evaluate_controller(
            nm.motor.g, materialize_meta_controller(build.meta, sol.alpha), config, eval_seed);
        errors[i].push_back(ev.error);
        unstable[i].push_back(ev.unstable ? 1 : 0);
      }
    }
  });
  SensitivityResult out;
  out.lambda_s = lambda_s;
  out.lambda_j = lambda_j;
  out.mean_error.assign(nj, std::vector<double>(ns, 0.0));
  out.unstable.assign(nj, std::vector<int>(ns, 0));
  for (std::size_t j = 0; j < nj; ++j) {
    for (std::size_t s = 0; s < ns; ++s) {
      std::vector<double> v;
      for (std::size_t i = 0; i < config.n_new; ++i) {
        v.push_back(errors[i][j * ns + s]);
        out.unstable[j][s] += unstable[i][j * ns + s];
      }
      out.mean_error[j][s] = mean_of(v);
    }
  }
  return out;
}

SizeSweepResult run_size_sweep(const BenchConfig& config, std::size_t n_min, std::size_t n_max) {
  if (n_min < 1 || n_max < n_min) throw UsageError("invalid size range");
  const MetaBuild build = build_meta_dataset(config, n_max);
  const TransferFunction m = reference_model(config.family.ts);
  const std::size_t count = n_max - n_min + 1;
  std::vector<std::vector<double>> by_motor(config.n_new);
  std::vector<std::vector<int>> unstable(config.n_new);
  parallel_for(config.n_new, config.jobs, [&](std::size_t i) {
    const NewMotorData nm = new_motor_data(config, i, build.input, config.noise_std);
    const std::uint64_t eval_seed = derive_seed(config.seed, "evaluation", i);
    for (std::size_t n = n_min; n <= n_max; ++n) {
      const MetaDataset sub = prefix(build.meta, n);
      const MetaSolution sol = meta_tune(
          nm.d, nm.d_iv, sub, m, design_config(config, config.lambda_j, config.lambda_s, config.delta));
      const Evaluation ev =
          evaluate_controller(nm.motor.g, materialize_meta_controller(sub, sol.alpha), config, eval_seed);
      by_motor[i].push_back(ev.error);
      unstable[i].push_back(ev.unstable ? 1 : 0);
    }
  });
  SizeSweepResult out;
  for (std::size_t k = 0; k < count; ++k) {
    out.sizes.push_back(n_min + k);
    std::vector<double> v;
    int u = 0;
    for (std::size_t i = 0; i < config.n_new; ++i) {
      v.push_back(by_motor[i][k]);
      u += unstable[i][k];
    }
    out.mean_error.push_back(mean_of(v));
    out.errors.push_back(v);
    out.unstable.push_back(u);
  }
  return out;
}

StabilityStudyResult run_stability_study(const BenchConfig& config, double noise_std,
                                         double delta) {
  const MetaBuild build = build_meta_dataset(config, config.n_meta);
  const TransferFunction m = reference_model(config.family.ts);
  const std::size_t n = config.n_new;
  std::vector<MethodResult> free(n), constrained(n);
  std::vector<double> snr(n, 0.0), gap(n, 0.0);
  parallel_for(n, config.jobs, [&](std::size_t i) {
    const NewMotorData nm = new_motor_data(config, i, build.input, noise_std);
    const std::uint64_t eval_seed = derive_seed(config.seed, "evaluation", i);
    free[i] = meta_method("meta", nm, build.meta,
                          design_config(config, config.lambda_j, config.lambda_s, std::nullopt),
                          config, eval_seed);
    constrained[i] = meta_method("meta_constrained", nm, build.meta,
                                 design_config(config, config.lambda_j, config.lambda_s, delta),
                                 config, eval_seed);
    const Signal clean = simulate(nm.motor.g, build.input);
    Signal noise(clean.size());
    for (std::size_t t = 0; t < clean.size(); ++t) noise[t] = nm.d.y[t] - clean[t];
    snr[i] = snr_db(clean, noise);

    const NewMotorData low = new_motor_data(config, i, build.input, config.noise_std);
    const DesignConfig a = design_config(config, config.lambda_j, config.lambda_s, std::nullopt);
    const DesignConfig b = design_config(config, config.lambda_j, config.lambda_s, delta);
    try {
      const auto sa = meta_tune(low.d, low.d_iv, build.meta, m, a);
      const auto sb = meta_tune(low.d, low.d_iv, build.meta, m, b);
      for (std::size_t k = 0; k < sa.alpha.size(); ++k) {
        gap[i] = std::max(gap[i], std::abs(sa.alpha[k] - sb.alpha[k]));
      }
    } catch (const NumericalError&) {
      gap[i] = kInf;
    }
  });
  StabilityStudyResult out;
  out.noise_std = noise_std;
  out.delta = delta;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = free[i];
    const auto& c = constrained[i];
    out.errors_free.insert(out.errors_free.end(), f.eval.runs.begin(), f.eval.runs.end());
    out.errors_constrained.insert(out.errors_constrained.end(), c.eval.runs.begin(), c.eval.runs.end());
    out.motor_free.push_back(f.rank_key());
    out.motor_constrained.push_back(c.rank_key());
    out.solver_ms_free.push_back(f.solver_ms);
    out.solver_ms_constrained.push_back(c.solver_ms);
    out.unstable_free += (f.failed || f.eval.unstable) ? 1 : 0;
    out.unstable_constrained += (c.failed || c.eval.unstable) ? 1 : 0;
    out.failed_constrained += c.failed ? 1 : 0;
    out.ell_used.push_back(c.ell);
    out.low_noise_alpha_gap = std::max(out.low_noise_alpha_gap, gap[i]);
  }
  out.outliers_free = count_outliers(out.errors_free);
  out.outliers_constrained = count_outliers(out.errors_constrained);
  out.mean_snr_db = mean_of(snr);
  return out;
}

double snr_study(const BenchConfig& config, std::size_t n_motors) {
  if (n_motors == 0) throw UsageError("snr_study needs at least one motor");
  std::vector<double> snr;
  for (std::size_t i = 0; i < n_motors; ++i) {
    const Motor motor = sample_motor(derive_seed(config.seed, "snr-motor", i), config.family);
    const Signal input = white_noise(config.samples, config.input_std,
                                     derive_seed(config.seed, "snr-input", i));
    const Signal clean = simulate(motor.g, input);
    const Signal noise = white_noise(config.samples, config.noise_std,
                                     derive_seed(config.seed, "snr-noise", i));
    snr.push_back(snr_db(clean, noise));
  }
  return mean_of(snr);
}

ReportFiles report_comparison(const ComparisonResult& r, const BenchConfig& c) {
  ReportFiles f;
  f.csv = "motor,kappa,p2,method,error,raw_error,unstable,failed,experiments,experiment_s,"
          "ell,delta_hat,theta,alpha\n";
  f.timings_csv = "motor,method,solver_ms,tuning_ms\n";
  std::vector<std::string> names;
  if (!r.motors.empty()) {
    for (const auto& m : r.motors.front().methods) names.push_back(m.method);
  }
  for (const auto& mr : r.motors) {
    for (const auto& m : mr.methods) {
      f.csv += std::to_string(mr.index) + "," + format_number(mr.motor.kappa) + "," +
               format_number(mr.motor.p2) + "," + m.method + "," + format_number(m.eval.error) +
               "," + format_number(m.eval.raw) + "," + (m.eval.unstable ? "1" : "0") + "," +
               (m.failed ? "1" : "0") + "," + std::to_string(m.experiments) + "," +
               format_number(m.experiments * c.experiment_seconds) + "," + std::to_string(m.ell) + "," + format_number(m.delta_hat) + "," + join(m.theta) +
               "," + join(m.alpha) + "\n";
      f.timings_csv += std::to_string(mr.index) + "," + m.method + "," +
                       format_number(m.solver_ms) + "," + format_number(m.tuning_ms) + "\n";
    }
  }
  nlohmann::json methods = nlohmann::json::object();
  std::vector<std::pair<std::string, std::vector<double>>> groups;
  for (const auto& name : names) {
    std::vector<double> errs;
    for (const auto& mr : r.motors) errs.push_back(mr.method(name).eval.error);
    methods[name] = {{"mean_error", r.mean_error(name)},
                     {"median_error", median(errs)},
                     {"unstable", r.unstable_count(name)},
                     {"experiments", r.motors.front().method(name).experiments}};
    groups.emplace_back(name, errs);
  }
  std::vector<double> anchor;
  for (const auto& mr : r.motors) anchor.push_back(mr.lambda0.eval.error);
  f.summary = {{"experiment", "comparison"},
               {"lambda0_anchor", {{"mean_error", mean_of(anchor)},
                                   {"errors", anchor},
                                   {"unstable", r.unstable_count("meta_lambda0")}}},
               {"smgo", "not implemented (out of scope)"},
               {"config", config_to_json(c)},
               {"methods", methods},
               {"meta_wins_vrft", r.meta_wins_vrft},
               {"meta_wins_cvrft", r.meta_wins_cvrft},
               {"meta_wins_trivial", r.meta_wins_trivial},
               {"rejected_entries", r.rejected_entries},
               {"screened_out", r.screened_out},
               {"motors", r.motors.size()}};
  f.svg = svg_boxplot("Matching error per method", groups, c.cap);
  return f;
}

ReportFiles report_non_deteriorating(const NonDetResult& r, const BenchConfig& c) {
  ReportFiles f;
  f.csv = "motor,lambda_s,meta_error,own_error,deteriorated,alpha\n";
  std::vector<double> levels;
  for (const auto& run : r.runs) {
    f.csv += std::to_string(run.motor) + "," + format_number(run.lambda_s) + "," +
             format_number(run.meta_error) + "," + format_number(run.own_error) + "," +
             (run.deteriorated ? "1" : "0") + "," + join(run.alpha) + "\n";
    if (std::find(levels.begin(), levels.end(), run.lambda_s) == levels.end()) {
      levels.push_back(run.lambda_s);
    }
  }
  nlohmann::json det = nlohmann::json::object();
  std::vector<std::pair<std::string, std::vector<double>>> groups;
  for (double ls : levels) {
    det[format_number(ls)] = r.deteriorations(ls);
    std::vector<double> v;
    for (const auto& run : r.runs) {
      if (run.lambda_s == ls) v.push_back(run.meta_error - run.own_error);
    }
    groups.emplace_back("lambda_S=" + format_number(ls), v);
  }
  f.summary = {{"experiment", "non_deteriorating"},
               {"config", config_to_json(c)},
               {"deteriorations", det},
               {"noise_free_ok", r.noise_free_ok},
               {"noise_free_total", r.noise_free_total}};
  std::vector<double> own, meta;
  for (const auto& run : r.runs) {
    if (!levels.empty() && run.lambda_s == levels.front()) {
      own.push_back(run.own_error);
      meta.push_back(run.meta_error);
    }
  }
  f.svg = svg_boxplot("Own controller vs meta controller",
                      {{"own", own}, {"meta", meta}}, c.cap);
  return f;
}

ReportFiles report_sensitivity(const SensitivityResult& r, const BenchConfig& c) {
  ReportFiles f;
  f.csv = "lambda_j,lambda_s,mean_error,display_error,unstable\n";
  for (std::size_t j = 0; j < r.lambda_j.size(); ++j) {
    for (std::size_t s = 0; s < r.lambda_s.size(); ++s) {
      f.csv += format_number(r.lambda_j[j]) + "," + format_number(r.lambda_s[s]) + "," +
               format_number(r.mean_error[j][s]) + "," +
               format_number(std::min(r.mean_error[j][s], c.cap)) + "," +
               std::to_string(r.unstable[j][s]) + "\n";
    }
  }
  double best = kInf;
  nlohmann::json arg;
  for (std::size_t j = 0; j < r.lambda_j.size(); ++j) {
    for (std::size_t s = 0; s < r.lambda_s.size(); ++s) {
      if (r.mean_error[j][s] < best) {
        best = r.mean_error[j][s];
        arg = {{"lambda_j", r.lambda_j[j]}, {"lambda_s", r.lambda_s[s]}};
      }
    }
  }
  f.summary = {{"experiment", "sensitivity"},
               {"config", config_to_json(c)},
               {"best_mean_error", finite_or_null(best)},
               {"best", arg}};
  f.svg = svg_heatmap("Average matching error (lambda_J vs lambda_S)", r, c.cap);
  return f;
}

ReportFiles report_size_sweep(const SizeSweepResult& r, const BenchConfig& c) {
  ReportFiles f;
  f.csv = "n,mean_error,unstable,errors\n";
  std::vector<double> x;
  for (std::size_t k = 0; k < r.sizes.size(); ++k) {
    f.csv += std::to_string(r.sizes[k]) + "," + format_number(r.mean_error[k]) + "," +
             std::to_string(r.unstable[k]) + "," + join(r.errors[k]) + "\n";
    x.push_back(static_cast<double>(r.sizes[k]));
  }
  f.summary = {{"experiment", "size_sweep"},
               {"config", config_to_json(c)},
               {"sizes", r.sizes},
               {"mean_error", r.mean_error}};
  f.svg = svg_line("Average matching error vs meta-dataset size", x, r.mean_error, c.cap);
  return f;
}

ReportFiles report_stability(const StabilityStudyResult& r, const BenchConfig& c) {
  ReportFiles f;
  f.csv = "variant,run,error\n";
  for (std::size_t k = 0; k < r.errors_free.size(); ++k) {
    f.csv += "unconstrained," + std::to_string(k) + "," + format_number(r.errors_free[k]) + "\n";
  }
  for (std::size_t k = 0; k < r.errors_constrained.size(); ++k) {
    f.csv += "constrained," + std::to_string(k) + "," + format_number(r.errors_constrained[k]) + "\n";
  }
  nlohmann::json free_med, con_med;
  for (double v : r.motor_free) free_med.push_back(finite_or_null(v));
  for (double v : r.motor_constrained) con_med.push_back(finite_or_null(v));
  f.summary = {{"experiment", "stability"},
               {"config", config_to_json(c)},
               {"noise_std", r.noise_std},
               {"delta", r.delta},
               {"mean_snr_db", r.mean_snr_db},
               {"outliers_unconstrained", r.outliers_free},
               {"outliers_constrained", r.outliers_constrained},
               {"unstable_unconstrained", r.unstable_free},
               {"unstable_constrained", r.unstable_constrained},
               {"failed_constrained", r.failed_constrained},
               {"low_noise_alpha_gap", finite_or_null(r.low_noise_alpha_gap)},
               {"ell_used", r.ell_used},
               {"motor_median_unconstrained", free_med},
               {"motor_median_constrained", con_med}};
  f.timings_csv = "motor,variant,solver_ms\n";
  for (std::size_t i = 0; i < r.solver_ms_free.size(); ++i) {
    f.timings_csv += std::to_string(i) + ",unconstrained," + format_number(r.solver_ms_free[i]) + "\n";
    f.timings_csv += std::to_string(i) + ",constrained," + format_number(r.solver_ms_constrained[i]) + "\n";
  }
  f.svg = svg_boxplot("Matching error with and without stability constraint",
                      {{"unconstrained", r.errors_free}, {"constrained", r.errors_constrained}},
                      c.cap);
  return f;
}

void write_report(const std::filesystem::path& dir, const std::string& name,
                  const ReportFiles& files, bool svg) {
  write_text(dir / (name + ".csv"), files.csv);
  write_json(dir / (name + ".json"), files.summary);
  if (svg && !files.svg.empty()) write_text(dir / (name + ".svg"), files.svg);
  if (!files.timings_csv.empty()) write_text(dir / (name + ".timings.csv"), files.timings_csv);
}

}  // namespace metavrft
