#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "orthobayes/gibbs.hpp"
#include "orthobayes/inference.hpp"
#include "orthobayes/model.hpp"
#include "orthobayes/simharness.hpp"

namespace orthobayes {

// ---------------------------------------------------------------- datasets

struct IngestOptions {
  std::string treatment;
  std::string outcome;
  /// Covariate columns to dummy-encode (K levels give K-1 columns, the
  /// smallest label is the reference). The treatment may be listed here to
  /// force categorical handling.
  std::vector<std::string> categorical;
};

/// Per-column bookkeeping so a cleaned table can be written back out.
struct CovariateColumn {
  std::string name;
  bool categorical = false;
  std::vector<std::string> levels;  // sorted labels, categorical only
  double mean = 0.0;                // numeric only
  double sd = 1.0;                  // population sd, numeric only
};

struct IngestResult {
  Dataset data;
  /// Names of the columns of data.z, in order ("col=level" for dummies).
  std::vector<std::string> z_names;
  std::vector<CovariateColumn> columns;
  /// Original treatment codes; codes[k] maps to level k.
  std::vector<long> treatment_codes;
  std::size_t dropped_rows = 0;
  std::vector<std::string> warnings;
  /// Kept raw cells, one row per retained observation, for re-export.
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Reads a delimited text table with a header row. Cells "", "NA", "NaN"
/// and "?" are missing; such rows are dropped listwise. Numeric covariates
/// are centred and scaled by the population sd (divide by n); constant
/// covariates are dropped with a warning. Throws ParseError (with line and
/// column), NonBinaryOutcome, DomainError and IoError.
IngestResult ingest_csv(const std::filesystem::path& path, const IngestOptions& opts);
IngestResult ingest_csv(std::istream& in, const IngestOptions& opts);

/// Writes the cleaned table: outcome, treatment, standardized numeric
/// covariates and the categorical labels. Re-ingesting it reproduces z.
void write_standardized_csv(std::ostream& out, const IngestResult& ingest,
                            const IngestOptions& opts);

/// Splits one CSV record; quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv_line(const std::string& line);

// ---------------------------------------------------------------- reports

enum class ReportFormat { csv, jsonl };

ReportFormat parse_report_format(std::string_view name);

/// method, theta0, n, d, coverage, mc_se, length, bias, reps, failures,
/// wall_ms, signed_bias; reals at 17 significant digits.
void emit_report(std::span<const McRow> rows, ReportFormat fmt, std::ostream& out);
std::vector<McRow> parse_report(std::istream& in, ReportFormat fmt);

/// One line per interval: label, point, se, lower, upper, level.
struct LabeledInterval {
  std::string label;
  IntervalEstimate interval;
};
void emit_intervals(std::span<const LabeledInterval> rows, ReportFormat fmt, std::ostream& out);
std::vector<LabeledInterval> parse_intervals(std::istream& in, ReportFormat fmt);

/// Per-replication results: cell, method, rep, ok, point, se, lower, upper,
/// error.
void emit_replicates(std::span<const ReplicateResult> rows, std::ostream& out);

/// Writes `text` to `path`, throwing IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

// ---------------------------------------------------------------- draws

/// "OBDRAWS1", u64 count, then count little-endian doubles.
void write_draws(const std::filesystem::path& path, std::span<const double> draws);
std::vector<double> read_draws(const std::filesystem::path& path);

// ---------------------------------------------------------------- config

/// Simulation study settings. JSON sections: dgp, chain, priors, methods,
/// output. Unknown keys are rejected.
struct StudyConfig {
  // dgp
  std::vector<std::pair<Eigen::Index, Eigen::Index>> sizes = {{400, 500}};
  std::vector<double> theta0 = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  Eigen::VectorXd beta0 = default_beta0();
  Eigen::VectorXd gamma0 = default_gamma0();
  double rho = 0.5;
  std::uint64_t seed = 1;
  // chain
  ChainConfig chain;
  // priors
  ThetaPrior theta_prior;
  // methods
  std::vector<Method> methods = {Method::cb, Method::oracle, Method::naive};
  int reps = 200;
  double alpha = 0.05;
  LassoOptions lasso;
  // output
  std::vector<ReportFormat> formats = {ReportFormat::csv, ReportFormat::jsonl};
  bool replicates = true;

  std::vector<DgpConfig> cells() const;
  McOptions mc_options(int jobs) const;
  /// Fully resolved settings, defaults included.
  nlohmann::json to_json() const;
  std::string digest() const;
};

StudyConfig parse_study_config(const nlohmann::json& j);
StudyConfig load_study_config(const std::filesystem::path& path);

/// manifest.json: version, seed, config digest and the resolved settings.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    std::uint64_t seed, const std::string& digest, const nlohmann::json& settings);

/// Library version string.
std::string version();

}  // namespace orthobayes
