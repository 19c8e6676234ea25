// orthobayes: simulation studies, single-dataset fits and draw summaries.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "orthobayes/digest.hpp"
#include "orthobayes/error.hpp"
#include "orthobayes/gibbs.hpp"
#include "orthobayes/inference.hpp"
#include "orthobayes/io.hpp"
#include "orthobayes/simharness.hpp"

namespace fs = std::filesystem;
using namespace orthobayes;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

std::string render_report(std::span<const McRow> rows, ReportFormat fmt) {
  std::ostringstream os;
  emit_report(rows, fmt, os);
  return os.str();
}

std::string render_intervals(std::span<const LabeledInterval> rows, ReportFormat fmt) {
  std::ostringstream os;
  emit_intervals(rows, fmt, os);
  return os.str();
}

struct SimulateArgs {
  std::string config;
  std::string out = ".";
  int reps = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  bool quiet = false;
};

int run_simulate(const SimulateArgs& a) {
  StudyConfig cfg = load_study_config(a.config);
  if (a.reps > 0) cfg.reps = a.reps;
  if (a.seed_set) cfg.seed = a.seed;
  ensure_dir(a.out);

  McOptions opts = cfg.mc_options(a.jobs);
  std::mutex log_mu;
  if (!a.quiet) {
    opts.progress = [&](int done, int total) {
      std::lock_guard lock(log_mu);
      std::fprintf(stderr, "\r%d/%d replications", done, total);
      if (done == total) std::fputc('\n', stderr);
    };
  }
  const auto cells = cfg.cells();
  const McReport report = run_mc(cells, opts);

  for (auto fmt : cfg.formats) {
    const fs::path file = a.out / fs::path(fmt == ReportFormat::csv ? "report.csv" : "report.jsonl");
    write_text_file(file, render_report(report.rows, fmt));
  }
  if (cfg.replicates) {
    std::ostringstream os;
    emit_replicates(report.replicates, os);
    write_text_file(a.out / fs::path("replicates.csv"), os.str());
  }
  write_manifest(a.out, "simulate", cfg.seed, cfg.digest(), cfg.to_json());

  long failures = 0;
  for (const auto& r : report.rows) failures += r.failures;
  if (failures > 0) std::fprintf(stderr, "warning: %ld failed replication(s), see replicates.csv\n", failures);
  std::cout << render_report(report.rows, ReportFormat::csv);
  return 0;
}

struct FitArgs {
  std::string data;
  std::string treatment;
  std::string outcome;
  std::vector<std::string> categorical;
  double alpha = 0.05;
  std::string out = ".";
  ChainConfig chain;
  double lambda = 10.0;
};

int run_fit(const FitArgs& a) {
  IngestOptions io{a.treatment, a.outcome, a.categorical};
  const IngestResult ing = ingest_csv(a.data, io);
  for (const auto& w : ing.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  ensure_dir(a.out);

  const Dataset& data = ing.data;
  const Priors priors{data.d() > 0 ? derive_spike_slab(data.n(), data.d()) : SpikeSlabPrior{},
                      ThetaPrior{a.lambda}};
  const PosteriorDraws draws = run_chain(data, priors, a.chain);

  std::vector<LabeledInterval> rows;
  for (Eigen::Index k = 0; k < draws.dims(); ++k) {
    const std::string label =
        data.categorical()
            ? a.treatment + "=" + std::to_string(ing.treatment_codes[static_cast<std::size_t>(k) + 1])
            : a.treatment;
    rows.push_back({label, summarize(draws, a.alpha, k)});
    const Eigen::VectorXd col = draws.draws.col(k);
    const std::string file =
        draws.dims() == 1 ? "draws.bin" : "draws_" + std::to_string(k + 1) + ".bin";
    write_draws(a.out / fs::path(file), {col.data(), static_cast<std::size_t>(col.size())});
  }
  write_text_file(a.out / fs::path("intervals.csv"), render_intervals(rows, ReportFormat::csv));
  write_text_file(a.out / fs::path("intervals.jsonl"), render_intervals(rows, ReportFormat::jsonl));

  const nlohmann::json settings = {
      {"data", a.data},
      {"treatment", a.treatment},
      {"outcome", a.outcome},
      {"categorical", a.categorical},
      {"alpha", a.alpha},
      {"lambda", a.lambda},
      {"iterations", a.chain.iterations},
      {"burn_in", a.chain.burn_in},
      {"thin", a.chain.thin},
      {"stream_id", a.chain.stream_id},
      {"n", data.n()},
      {"d", data.d()},
      {"dropped_rows", ing.dropped_rows}};
  write_manifest(a.out, "fit", a.chain.seed, fnv1a_hex(settings.dump() + a.chain.digest()), settings);
  std::cout << render_intervals(rows, ReportFormat::csv);
  return 0;
}

int run_summarize(const std::string& path, double alpha) {
  const std::vector<double> draws = read_draws(path);
  const std::vector<LabeledInterval> rows = {{fs::path(path).stem().string(), summarize(draws, alpha)}};
  std::cout << render_intervals(rows, ReportFormat::csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orthogonalized Bayesian inference for a treatment effect in high-dimensional logistic models"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of CB, ORACLE and NAIVE intervals");
  simulate->add_option("--config", sim.config, "JSON study configuration")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out, "Output directory");
  simulate->add_option("--reps", sim.reps, "Override methods.reps")->check(CLI::PositiveNumber);
  auto* seed_opt = simulate->add_option("--seed", sim.seed, "Override dgp.seed");
  simulate->add_option("--jobs", sim.jobs, "Worker threads for replications")->check(CLI::PositiveNumber);
  simulate->add_flag("--quiet", sim.quiet, "No progress output");

  FitArgs fit;
  auto* fitcmd = app.add_subcommand("fit", "Posterior of the treatment effect for one CSV dataset");
  fitcmd->add_option("--data", fit.data, "CSV file with a header row")->required()->check(CLI::ExistingFile);
  fitcmd->add_option("--treatment", fit.treatment, "Treatment column (integer codes)")->required();
  fitcmd->add_option("--outcome", fit.outcome, "Binary outcome column")->required();
  fitcmd->add_option("--categorical", fit.categorical, "Columns to dummy-encode")->delimiter(',');
  fitcmd->add_option("--alpha", fit.alpha, "Tail mass of the credible interval")->check(CLI::Range(0.0, 1.0));
  fitcmd->add_option("--out", fit.out, "Output directory");
  fitcmd->add_option("--iterations", fit.chain.iterations, "Gibbs sweeps");
  fitcmd->add_option("--burn-in", fit.chain.burn_in, "Discarded leading sweeps");
  fitcmd->add_option("--thin", fit.chain.thin, "Keep every k-th sweep");
  fitcmd->add_option("--seed", fit.chain.seed, "Random seed");
  fitcmd->add_option("--lambda", fit.lambda, "Prior variance of the effect");

  std::string draws_path;
  double sum_alpha = 0.05;
  auto* summ = app.add_subcommand("summarize", "Credible interval from a draws.bin file");
  summ->add_option("--draws", draws_path, "draws.bin written by fit")->required()->check(CLI::ExistingFile);
  summ->add_option("--alpha", sum_alpha, "Tail mass")->check(CLI::Range(0.0, 1.0));

  CLI11_PARSE(app, argc, argv);
  sim.seed_set = seed_opt->count() > 0;

  try {
    if (*simulate) return run_simulate(sim);
    if (*fitcmd) return run_fit(fit);
    if (*summ) return run_summarize(draws_path, sum_alpha);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
