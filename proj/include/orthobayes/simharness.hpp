#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "orthobayes/gibbs.hpp"
#include "orthobayes/inference.hpp"
#include "orthobayes/model.hpp"
#include "orthobayes/randkit.hpp"

namespace orthobayes {

enum class Method { cb, oracle, naive };

std::string_view method_name(Method m);
/// Accepts "CB", "ORACLE", "NAIVE" in any case. Throws ConfigError.
Method parse_method(std::string_view name);

/// Leading nonzero coefficients of the simulation design; the rest are zero.
Eigen::VectorXd default_beta0();
Eigen::VectorXd default_gamma0();

/// Synthetic design: Z rows i.i.d. N(0, H) with H_ij = rho^|i-j|,
/// X | Z ~ Bernoulli(logistic(Z gamma0)), Y | X, Z ~ Bernoulli(logistic(theta0 X + Z beta0)).
/// beta0 and gamma0 hold the leading entries and are zero-padded to length d.
struct DgpConfig {
  Eigen::Index n = 400;
  Eigen::Index d = 500;
  double theta0 = 0.0;
  Eigen::VectorXd beta0 = default_beta0();
  Eigen::VectorXd gamma0 = default_gamma0();
  double rho = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
  Eigen::VectorXd beta_full() const;
  Eigen::VectorXd gamma_full() const;
  /// Indices j with beta0[j] != 0.
  std::vector<Eigen::Index> support() const;
};

/// Exact AR(1) recursion across columns, O(nd).
Eigen::MatrixXd gen_design(const DgpConfig& cfg, RngStream& rng);

/// Independent Bernoulli(logistic(eta_i)) draws as 0/1 doubles.
Eigen::VectorXd gen_binary(const Eigen::VectorXd& eta, RngStream& rng);

Dataset gen_dataset(const DgpConfig& cfg, RngStream& rng);

/// Unpenalized logistic MLE with the inverse observed information.
struct LogisticFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
  int iterations = 0;
};

/// Newton-Raphson with step halving, no intercept. Throws Separation when a
/// coefficient or a fitted linear predictor leaves [-30, 30] or the outcome
/// is constant, and Nonconvergence after 25 iterations.
LogisticFit logistic_mle(const Eigen::MatrixXd& design, const Eigen::VectorXd& y);

/// Two-sided standard normal quantile z_{1 - alpha/2}.
double wald_multiplier(double alpha);

/// Logistic MLE of y on [x, z_support] and a Wald interval for the x
/// coefficient.
IntervalEstimate oracle_fit(const Dataset& data, std::span<const Eigen::Index> support,
                            double alpha = 0.05);

enum class PenaltySelection { bic, cv };

struct LassoOptions {
  int grid_size = 50;
  /// Smallest penalty as a fraction of the largest; <= 0 picks 0.01 when
  /// n < d and 1e-4 otherwise.
  double min_ratio = 0.0;
  PenaltySelection selection = PenaltySelection::bic;
  int folds = 10;
  /// Fold assignment stream for cross-validation.
  std::uint64_t fold_seed = 0;
  std::uint64_t fold_stream = 0;
  double tol = 1e-7;
  int max_cycles = 100000;
  /// Called with the objective after every coordinate cycle.
  std::function<void(double)> on_cycle;
};

/// (1/n) sum [log(1 + e^eta) - y eta] + lambda ||b||_1 with eta = z b.
double lasso_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& b, double lambda);

/// lambda_max = ||z^T (y - 1/2)||_inf / n and a log-spaced grid down to
/// min_ratio lambda_max.
std::vector<double> lasso_grid(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                               const LassoOptions& opts = {});

/// Cyclic coordinate descent on the majorized logistic loss (curvature
/// ||z_j||^2 / 4n per coordinate), warm started at `start`.
Eigen::VectorXd lasso_fit(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double lambda,
                          Eigen::VectorXd start, const LassoOptions& opts = {});

struct NaiveResult {
  IntervalEstimate interval;
  std::vector<Eigen::Index> selected;
  double lambda = 0.0;
};

/// Post-lasso: select Z columns for y by an l1 path over `grid` (largest
/// penalty first), then refit y on x plus the selection.
NaiveResult naive_fit(const Dataset& data, std::span<const double> grid,
                      const LassoOptions& opts = {}, double alpha = 0.05);

/// One replication of one method in one cell.
struct ReplicateResult {
  std::size_t cell = 0;
  Method method = Method::cb;
  int rep = 0;
  bool ok = false;
  IntervalEstimate interval;
  std::string error;
  double wall_ms = 0.0;
};

struct McReport {
  std::vector<McRow> rows;
  std::vector<ReplicateResult> replicates;

  /// Equality of everything except wall-clock timings.
  bool same_results(const McReport& other) const;
};

struct McOptions {
  std::vector<Method> methods = {Method::cb, Method::oracle, Method::naive};
  int reps = 1;
  ChainConfig chain;
  ThetaPrior theta_prior;
  double alpha = 0.05;
  int jobs = 1;
  LassoOptions lasso;
  /// Reported after each finished replication as (done, total).
  std::function<void(int, int)> progress;
};

/// Stream id for (cell, replication, purpose); distinct inputs never collide
/// for cell < 2^24, rep < 2^32, purpose < 256.
std::uint64_t replicate_stream(std::size_t cell, int rep, unsigned purpose);

/// Runs every configured method on reps fresh datasets per cell. Results do
/// not depend on jobs or scheduling. Failed replications are excluded from
/// the aggregates and counted in McRow::failures.
McReport run_mc(std::span<const DgpConfig> cfgs, const McOptions& opts);

}  // namespace orthobayes
