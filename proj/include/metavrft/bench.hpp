#ifndef METAVRFT_BENCH_HPP_
#define METAVRFT_BENCH_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metavrft/lti.hpp"
#include "metavrft/metadesign.hpp"
#include "metavrft/signals.hpp"

namespace metavrft {

// G = kappa q^-2 / ((1 - p1 q^-1)(1 - p2 q^-1)).
struct MotorFamily {
  double p1 = 0.9975;
  double kappa_min = 1.0;
  double kappa_max = 5.75;
  double p2_min = 0.0;
  double p2_max = 0.9;
  double ts = 0.02;

  TransferFunction member(double kappa, double p2) const;
};

struct Motor {
  double kappa = 0.0;
  double p2 = 0.0;
  TransferFunction g;
};

Motor sample_motor(std::uint64_t seed, const MotorFamily& family = {});

// M = 0.0609 q^-1 / (1 - 0.9391 q^-1).
TransferFunction reference_model(double ts = 0.02);

// Largest pairwise H2 distance over the corner set of the family.
double family_similarity(const MotorFamily& family = {});

// ||y_d - y||_2 with y_d = M r; +inf for a diverged run.
double matching_error(const Dataset& closed_loop, const TransferFunction& m,
                      const Signal& reference);

struct BenchConfig {
  std::uint64_t seed = 1;
  MotorFamily family;
  std::size_t samples = 550;
  double input_std = 2.0;
  double noise_std = 10.0;
  double step = 1000.0;
  std::size_t horizon = 150;
  double eval_noise_std = 10.0;
  int eval_runs = 10;
  std::size_t n_meta = 10;
  std::size_t n_new = 10;
  // Meta-dataset controllers: constrained VRFT with W = 1/(1 - M) on a
  // calibration record of this many samples.
  std::size_t calibration_samples = 10500;
  double entry_delta = 0.5;
  double lambda_j = 30.0;
  double lambda_s = 300.0;
  std::optional<double> delta;
  double cvrft_delta = 0.5;
  int ell = 200;
  double cap = 250.0;
  int jobs = 1;
  IndexNormalization normalization = IndexNormalization::kMax;
  // Simulated seconds of one open-loop experiment, charged to tuning time.
  double experiment_seconds = 11.0;
};

nlohmann::json config_to_json(const BenchConfig& config);

struct MetaBuild {
  MetaDataset meta;
  std::vector<Motor> motors;
  Signal input;
  int rejected = 0;
};

// Shared input, then meta-motors tuned until n entries are accepted.
MetaBuild build_meta_dataset(const BenchConfig& config, std::size_t n);

struct NewMotorData {
  Motor motor;
  Dataset d;
  Dataset d_iv;
};

NewMotorData new_motor_data(const BenchConfig& config, std::size_t index,
                            const Signal& input, double noise_std);

struct Evaluation {
  double error = 0.0;  // median over runs; cap when unstable
  double raw = 0.0;    // median over runs; +inf when unstable
  bool unstable = false;
  std::vector<double> runs;
};

// Step test of C on G repeated eval_runs times with paired noise seeds.
Evaluation evaluate_controller(const TransferFunction& g, const TransferFunction& c,
                               const BenchConfig& config, std::uint64_t eval_seed);

struct MethodResult {
  std::string method;
  Evaluation eval;
  bool failed = false;  // tuner raised an error; counted as unstable
  std::string failure;
  double solver_ms = 0.0;
  int experiments = 0;
  double tuning_ms = 0.0;  // solver + simulated experiment time
  std::vector<double> theta;
  std::vector<double> alpha;
  double delta_hat = 0.0;
  int ell = 0;

  // Ranking key: unstable or failed loops rank last.
  double rank_key() const;
};

struct MotorResult {
  std::size_t index = 0;
  Motor motor;
  std::vector<MethodResult> methods;
  // Meta-controller with lambda_J = lambda_S = 0, kept apart from the methods.
  MethodResult lambda0;
  std::vector<double> S;
  std::vector<double> J;

  const MethodResult& method(const std::string& name) const;
};

struct ComparisonResult {
  std::vector<MotorResult> motors;
  int rejected_entries = 0;
  // Entries failing the data-driven check on their own data (kept).
  int screened_out = 0;
  int meta_wins_vrft = 0;
  int meta_wins_trivial = 0;
  int meta_wins_cvrft = 0;
  double mean_error(const std::string& method) const;
  int unstable_count(const std::string& method) const;
};

ComparisonResult run_comparison(const BenchConfig& config);

struct NonDetRun {
  std::size_t motor = 0;
  double lambda_s = 0.0;
  double meta_error = 0.0;
  double own_error = 0.0;
  std::vector<double> alpha;
  bool deteriorated = false;
};

struct NonDetResult {
  std::vector<NonDetRun> runs;
  // Noise-free, lambda = 0: objective(alpha*) <= objective(e_k) count.
  int noise_free_ok = 0;
  int noise_free_total = 0;
  int deteriorations(double lambda_s) const;
};

NonDetResult run_non_deteriorating(const BenchConfig& config,
                                   const std::vector<double>& lambda_s = {300.0, 3000.0});

struct SensitivityResult {
  std::vector<double> lambda_s;
  std::vector<double> lambda_j;
  // mean_error[j][s]: average over motors of the per-motor median error.
  std::vector<std::vector<double>> mean_error;
  std::vector<std::vector<int>> unstable;
};

SensitivityResult run_sensitivity(const BenchConfig& config,
                                  const std::vector<double>& lambda_s,
                                  const std::vector<double>& lambda_j);

struct SizeSweepResult {
  std::vector<std::size_t> sizes;
  std::vector<double> mean_error;
  std::vector<std::vector<double>> errors;  // [size][motor]
  std::vector<int> unstable;
};

SizeSweepResult run_size_sweep(const BenchConfig& config, std::size_t n_min = 2,
                               std::size_t n_max = 15);

struct StabilityStudyResult {
  double noise_std = 0.0;
  double delta = 0.0;
  std::vector<double> errors_free;         // all motor x run errors
  std::vector<double> errors_constrained;
  std::vector<double> motor_free;          // per-motor medians
  std::vector<double> motor_constrained;
  int outliers_free = 0;
  int outliers_constrained = 0;
  std::vector<double> solver_ms_free;  // per motor
  std::vector<double> solver_ms_constrained;
  int unstable_free = 0;
  int unstable_constrained = 0;
  int failed_constrained = 0;
  double mean_snr_db = 0.0;
  // Largest |alpha_free - alpha_constrained|_inf at the nominal noise level.
  double low_noise_alpha_gap = 0.0;
  std::vector<int> ell_used;
};

StabilityStudyResult run_stability_study(const BenchConfig& config,
                                         double noise_std = 40.0,
                                         double delta = 0.5);

// Mean over motors of 10 log10(sum y0^2 / sum v^2); each draw has its own
// input and noise realization.
double snr_study(const BenchConfig& config, std::size_t n_motors);

// Count of values above factor * median.
int count_outliers(const std::vector<double>& values, double factor = 1.5);
double median(std::vector<double> values);

// Report emission: <dir>/<name>.csv, <name>.json, optional <name>.svg and,
// when wall-clock times were measured, <name>.timings.csv. All but the
// timings file are byte-reproducible from the seed and config.
struct ReportFiles {
  std::string csv;
  nlohmann::json summary;
  std::string svg;
  std::string timings_csv;
};

ReportFiles report_comparison(const ComparisonResult& r, const BenchConfig& c);
ReportFiles report_non_deteriorating(const NonDetResult& r, const BenchConfig& c);
ReportFiles report_sensitivity(const SensitivityResult& r, const BenchConfig& c);
ReportFiles report_size_sweep(const SizeSweepResult& r, const BenchConfig& c);
ReportFiles report_stability(const StabilityStudyResult& r, const BenchConfig& c);

void write_report(const std::filesystem::path& dir, const std::string& name,
                  const ReportFiles& files, bool svg);

}  // namespace metavrft

#endif  // METAVRFT_BENCH_HPP_
