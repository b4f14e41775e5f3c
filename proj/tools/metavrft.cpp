#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metavrft/bench.hpp"
#include "metavrft/errors.hpp"
#include "metavrft/io.hpp"
#include "metavrft/metadesign.hpp"
#include "metavrft/spectral.hpp"
#include "metavrft/vrft.hpp"

namespace fs = std::filesystem;
using namespace metavrft;

namespace {

struct Common {
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string runs_dir = "runs";
  std::string name;
  bool svg = false;
};

std::optional<double> parse_delta(const std::string& text) {
  if (text == "none" || text.empty()) return std::nullopt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size() || !(v > 0.0)) throw std::invalid_argument("delta");
    return v;
  } catch (const std::exception&) {
    throw UsageError("--delta must be 'none' or a positive number, got '" + text + "'");
  }
}

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(item, &pos);
      if (pos != item.size() || v < 0.0) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + " expects comma-separated non-negative numbers");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + " is empty");
  return out;
}

fs::path prepare_run_dir(const Common& common, const std::string& fallback) {
  const fs::path dir = fs::path(common.runs_dir) / (common.name.empty() ? fallback : common.name);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create run directory '" + dir.string() + "'");
  }
  return dir;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " '" + path + "' not found");
}

Json common_json(const Common& c, const std::string& command) {
  return Json{{"command", command}, {"seed", c.seed}, {"jobs", c.jobs}};
}

std::string format_vector(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_number(v[i]);
  }
  return s + "]";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learned model-reference controller design from data"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--seed", common.seed, "Master seed")->envname("METAVRFT_SEED");
  app.add_option("--jobs", common.jobs, "Worker threads for experiments")
      ->envname("METAVRFT_JOBS")
      ->check(CLI::PositiveNumber);
  app.add_option("--runs-dir", common.runs_dir, "Root of run directories")
      ->envname("METAVRFT_RUNS_DIR");
  app.add_option("--name", common.name, "Run name (default derived from command and seed)")
      ->envname("METAVRFT_RUN_NAME");
  app.add_flag("--svg", common.svg, "Also emit SVG plots")->envname("METAVRFT_SVG");

  // generate
  auto* gen = app.add_subcommand("generate", "Open-loop dataset of a family motor");
  std::string family = "dc-motor";
  std::size_t t_len = 550;
  double noise = 10.0, input_std = 2.0;
  std::optional<double> kappa, p2;
  bool with_iv = false;
  gen->add_option("--family", family, "Plant family")->envname("METAVRFT_FAMILY");
  gen->add_option("--t", t_len, "Number of samples")->envname("METAVRFT_T");
  gen->add_option("--noise", noise, "Output noise std (rpm)")->envname("METAVRFT_NOISE");
  gen->add_option("--input-std", input_std, "Input std (A)");
  gen->add_option("--kappa", kappa, "Fixed gain instead of sampling");
  gen->add_option("--p2", p2, "Fixed second pole instead of sampling");
  gen->add_flag("--iv", with_iv, "Also record an instrumental-variable repeat");

  // vrft
  auto* vr = app.add_subcommand("vrft", "Tune a PI by (constrained) VRFT");
  std::string data, data_iv, delta_text = "none", weight = "one";
  int ell = 200;
  vr->add_option("--data", data, "Open-loop dataset CSV")->required();
  vr->add_option("--data-iv", data_iv, "Instrumental-variable repeat CSV");
  vr->add_option("--delta", delta_text, "Stability bound or 'none'")->envname("METAVRFT_DELTA");
  vr->add_option("--ell", ell, "Correlation window")->check(CLI::PositiveNumber);
  vr->add_option("--weight", weight, "Weighting: one | inverse-complementary")
      ->check(CLI::IsMember({"one", "inverse-complementary"}));

  // build-meta
  auto* bm = app.add_subcommand("build-meta", "Meta-dataset of tuned family motors");
  std::size_t n_meta = 10;
  double entry_delta = 0.5;
  bm->add_option("--n", n_meta, "Number of entries")->check(CLI::PositiveNumber);
  bm->add_option("--t", t_len, "Samples per open-loop record");
  bm->add_option("--noise", noise, "Output noise std (rpm)")->envname("METAVRFT_NOISE");
  bm->add_option("--delta-k", entry_delta, "Stability bound used when tuning entries");

  // meta-tune
  auto* mt = app.add_subcommand("meta-tune", "Combine meta-dataset controllers for a new plant");
  std::string meta_dir, norm = "max";
  double lambda_j = 30.0, lambda_s = 300.0;
  bool screen = false;
  mt->add_option("--meta", meta_dir, "Meta-dataset directory")->required();
  mt->add_option("--data", data, "New-plant open-loop dataset CSV")->required();
  mt->add_option("--data-iv", data_iv, "New-plant instrumental-variable repeat CSV");
  mt->add_option("--lambda-j", lambda_j, "Performance penalty")->check(CLI::NonNegativeNumber);
  mt->add_option("--lambda-s", lambda_s, "Similarity penalty")->check(CLI::NonNegativeNumber);
  mt->add_option("--delta", delta_text, "Stability bound or 'none'")->envname("METAVRFT_DELTA");
  mt->add_option("--ell", ell, "Correlation window")->check(CLI::PositiveNumber);
  mt->add_option("--normalization", norm, "Index normalization: max | none")
      ->check(CLI::IsMember({"max", "none"}));
  mt->add_flag("--screen", screen, "Drop entries failing the data-driven stability check");

  // experiment
  auto* ex = app.add_subcommand("experiment", "Run one of the benchmark studies");
  std::string which;
  std::size_t n_new = 10, n_min = 2, n_max = 15;
  int eval_runs = 10;
  double cap = 250.0;
  std::string ls_text = "0,3,30,300,3000,30000", lj_text = "0,3,30,300", nondet_ls = "300,3000";
  std::optional<double> study_noise;
  ex->add_option("which", which, "comparison | nondet | sensitivity | size | stability")->required();
  ex->add_option("--n-new", n_new, "New motors")->check(CLI::PositiveNumber);
  ex->add_option("--n-meta", n_meta, "Meta-dataset size")->check(CLI::PositiveNumber);
  ex->add_option("--eval-runs", eval_runs, "Noise realizations per closed-loop test")
      ->check(CLI::PositiveNumber);
  ex->add_option("--cap", cap, "Saturation for unstable loops (rpm)");
  ex->add_option("--lambda-j", lambda_j, "Performance penalty")->check(CLI::NonNegativeNumber);
  ex->add_option("--lambda-s", lambda_s, "Similarity penalty")->check(CLI::NonNegativeNumber);
  ex->add_option("--delta", delta_text, "Stability bound or 'none'")->envname("METAVRFT_DELTA");
  ex->add_option("--ls", ls_text, "Sensitivity grid for lambda_S");
  ex->add_option("--lj", lj_text, "Sensitivity grid for lambda_J");
  ex->add_option("--nondet-ls", nondet_ls, "lambda_S values of the non-deterioration test");
  ex->add_option("--n-min", n_min, "Smallest meta-dataset size");
  ex->add_option("--n-max", n_max, "Largest meta-dataset size");
  ex->add_option("--noise", study_noise, "Noise std of the stability study (default 40)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kUsage);
  }

  try {
    const std::string seed_tag = "seed" + std::to_string(common.seed);
    if (gen->parsed()) {
      if (family != "dc-motor") throw UsageError("unknown family '" + family + "'");
      if (t_len == 0) throw UsageError("--t must be positive");
      if (noise < 0.0 || input_std <= 0.0) throw UsageError("noise and input std must be >= 0 and > 0");
      if (kappa && !(*kappa > 0.0)) throw UsageError("--kappa must be positive");
      if (p2 && !(*p2 >= 0.0 && *p2 < 1.0)) throw UsageError("--p2 must lie in [0, 1)");
      const fs::path dir = prepare_run_dir(common, "generate-" + seed_tag);
      const MotorFamily fam;
      Motor motor = sample_motor(derive_seed(common.seed, "motor"), fam);
      if (kappa) motor.kappa = *kappa;
      if (p2) motor.p2 = *p2;
      motor.g = fam.member(motor.kappa, motor.p2);
      const Signal u = white_noise(t_len, input_std, derive_seed(common.seed, "input"));
      const Dataset d = generate_open_loop(motor.g, u, noise, derive_seed(common.seed, "data"));
      write_dataset(dir / "datasets" / "open.csv", d);
      if (with_iv) {
        write_dataset(dir / "datasets" / "open_iv.csv",
                      generate_open_loop(motor.g, u, noise, derive_seed(common.seed, "data-iv")));
      }
      write_json(dir / "datasets" / "plant.json",
                 Json{{"kappa", motor.kappa}, {"p2", motor.p2}, {"tf", tf_to_json(motor.g)}});
      Json cfg = common_json(common, "generate");
      cfg.update(Json{{"family", family}, {"t", t_len}, {"noise", noise},
                      {"input_std", input_std}, {"iv", with_iv}});
      write_json(dir / "config.json", cfg);
      std::cout << (dir / "datasets" / "open.csv").string() << "\n";
    } else if (vr->parsed()) {
      require_file(data, "dataset");
      if (!data_iv.empty()) require_file(data_iv, "IV dataset");
      const std::optional<double> delta = parse_delta(delta_text);
      const fs::path dir = prepare_run_dir(common, "vrft-" + seed_tag);
      VrftProblem problem;
      problem.dataset = read_dataset(data);
      if (!data_iv.empty()) problem.dataset_iv = read_dataset(data_iv);
      problem.m = reference_model(problem.dataset.ts);
      if (weight == "inverse-complementary") problem.w = inverse_complementary_weight(problem.m);
      problem.basis = pi_basis(problem.dataset.ts);
      if (delta) problem.stability = StabilitySpec{*delta, ell};
      const VrftResult res = vrft_tune_detailed(problem);
      write_json(dir / "controllers" / "vrft.json", controller_to_json(res.params));
      Json cfg = common_json(common, "vrft");
      cfg.update(Json{{"data", data}, {"data_iv", data_iv}, {"delta", delta_text},
                      {"ell", ell}, {"weight", weight}});
      write_json(dir / "config.json", cfg);
      std::cout << "theta: " << format_vector(res.params.theta) << "\n"
                << "objective: " << format_number(res.objective) << "\n";
      if (delta) std::cout << "ell: " << res.ell << "\ndelta_hat: " << format_number(res.delta_hat) << "\n";
    } else if (bm->parsed()) {
      const fs::path dir = prepare_run_dir(common, "meta-" + seed_tag);
      BenchConfig config;
      config.seed = common.seed;
      config.jobs = common.jobs;
      config.samples = t_len;
      config.noise_std = noise;
      config.entry_delta = entry_delta;
      const MetaBuild build = build_meta_dataset(config, n_meta);
      write_meta_dataset(dir, build.meta);
      Json plants = Json::array();
      for (const auto& m : build.motors) {
        plants.push_back(Json{{"kappa", m.kappa}, {"p2", m.p2}, {"tf", tf_to_json(m.g)}});
      }
      write_json(dir / "datasets" / "plants.json", plants);
      Json cfg = common_json(common, "build-meta");
      cfg.update(Json{{"n", n_meta}, {"t", t_len}, {"noise", noise}, {"delta_k", entry_delta},
                      {"rejected", build.rejected}});
      write_json(dir / "config.json", cfg);
      std::cout << "entries: " << build.meta.size() << "\nrejected: " << build.rejected << "\n";
    } else if (mt->parsed()) {
      if (!fs::is_regular_file(fs::path(meta_dir) / "meta.json")) {
        throw IoError("meta-dataset '" + meta_dir + "' has no meta.json");
      }
      require_file(data, "dataset");
      if (!data_iv.empty()) require_file(data_iv, "IV dataset");
      DesignConfig design;
      design.lambda_j = lambda_j;
      design.lambda_s = lambda_s;
      design.delta = parse_delta(delta_text);
      design.ell = ell;
      design.normalization = norm == "max" ? IndexNormalization::kMax : IndexNormalization::kNone;
      const fs::path dir = prepare_run_dir(common, "meta-tune-" + seed_tag);
      MetaDataset meta = read_meta_dataset(meta_dir);
      const Dataset d = read_dataset(data);
      const Dataset d_iv = data_iv.empty() ? d : read_dataset(data_iv);
      const TransferFunction m = reference_model(d.ts);
      std::vector<std::size_t> kept;
      if (screen) {
        MetaDataset screened;
        for (std::size_t k = 0; k < meta.size(); ++k) {
          const auto& e = meta.entries[k];
          bool ok = false;
          try {
            ok = screen_meta_controller(e.open_loop, m, materialize(e.controller), e.delta_k,
                                        SpectralGrid(ell));
          } catch (const NumericalError&) {
            ok = false;
          }
          if (ok) {
            screened.entries.push_back(e);
            kept.push_back(k);
          }
        }
        if (screened.size() == 0) throw NumericalError("empty meta-dataset after screening");
        meta = std::move(screened);
      } else {
        for (std::size_t k = 0; k < meta.size(); ++k) kept.push_back(k);
      }
      const MetaSolution sol = meta_tune(d, d_iv, meta, m, design);
      Json out = solution_to_json(sol);
      out["entries"] = kept;
      write_json(dir / "reports" / "solution.json", out);
      if (auto params = combine_params(meta, sol.alpha)) {
        write_json(dir / "controllers" / "meta.json", controller_to_json(*params));
      }
      write_json(dir / "controllers" / "meta_tf.json",
                 tf_to_json(materialize_meta_controller(meta, sol.alpha)));
      Json cfg = common_json(common, "meta-tune");
      cfg.update(Json{{"meta", meta_dir}, {"data", data}, {"data_iv", data_iv},
                      {"lambda_j", lambda_j}, {"lambda_s", lambda_s}, {"delta", delta_text},
                      {"ell", ell}, {"normalization", norm}, {"screen", screen}});
      write_json(dir / "config.json", cfg);
      std::cout << "alpha: " << format_vector(sol.alpha) << "\n"
                << "delta_hat: " << format_number(sol.report.delta_hat) << "\n"
                << "objective: " << format_number(sol.report.objective) << "\n";
    } else if (ex->parsed()) {
      static const std::vector<std::string> known = {"comparison", "nondet", "sensitivity", "size",
                                                     "stability"};
      if (std::find(known.begin(), known.end(), which) == known.end()) {
        throw UsageError("unknown experiment '" + which +
                         "' (expected comparison, nondet, sensitivity, size or stability)");
      }
      BenchConfig config;
      config.seed = common.seed;
      config.jobs = common.jobs;
      config.n_new = n_new;
      config.n_meta = n_meta;
      config.eval_runs = eval_runs;
      config.cap = cap;
      config.lambda_j = lambda_j;
      config.lambda_s = lambda_s;
      const std::optional<double> delta = parse_delta(delta_text);
      const std::vector<double> ls = parse_list(ls_text, "--ls");
      const std::vector<double> lj = parse_list(lj_text, "--lj");
      const std::vector<double> nd = parse_list(nondet_ls, "--nondet-ls");
      if (which == "size" && (n_min < 1 || n_max < n_min)) throw UsageError("invalid --n-min/--n-max");
      if (which != "stability") config.delta = delta;
      const fs::path dir = prepare_run_dir(common, which + "-" + seed_tag);
      Json cfg = common_json(common, "experiment");
      cfg["experiment"] = which;
      cfg["bench"] = config_to_json(config);
      ReportFiles files;
      if (which == "comparison") {
        files = report_comparison(run_comparison(config), config);
      } else if (which == "nondet") {
        cfg["lambda_s"] = nd;
        files = report_non_deteriorating(run_non_deteriorating(config, nd), config);
      } else if (which == "sensitivity") {
        cfg["ls"] = ls;
        cfg["lj"] = lj;
        files = report_sensitivity(run_sensitivity(config, ls, lj), config);
      } else if (which == "size") {
        cfg["n_min"] = n_min;
        cfg["n_max"] = n_max;
        files = report_size_sweep(run_size_sweep(config, n_min, n_max), config);
      } else {
        const double sn = study_noise.value_or(40.0);
        const double sd = delta.value_or(0.5);
        cfg["noise"] = sn;
        cfg["delta"] = sd;
        files = report_stability(run_stability_study(config, sn, sd), config);
      }
      write_json(dir / "config.json", cfg);
      write_report(dir / "reports", which, files, common.svg);
      std::cout << files.summary.dump(2) << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kNumerical);
  }
  return 0;
}
