#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace orthobayes {

/// Where a set of draws came from: enough to rerun the chain bit-exactly.
struct DrawsMeta {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  int iterations = 0;
  int burn_in = 0;
  int thin = 1;
  std::string config_digest;
};

/// Retained draws of the effect of interest: one row per draw, one column per
/// treatment dummy (a single column for a binary treatment).
struct PosteriorDraws {
  Eigen::MatrixXd draws;
  DrawsMeta meta;

  Eigen::Index count() const { return draws.rows(); }
  Eigen::Index dims() const { return draws.cols(); }
};

/// Point estimate, posterior sd and equal-tailed credible bounds.
struct IntervalEstimate {
  double point = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
};

/// Sample quantile by linear interpolation between order statistics
/// (position (N-1) p, zero-based). `sorted` must be ascending.
double sorted_quantile(std::span<const double> sorted, double p);

/// Mean, sample sd and the alpha/2, 1-alpha/2 quantiles of one draws column.
/// A constant chain yields a zero-width interval. Throws InsufficientDraws
/// for fewer than two draws and DomainError unless 0 < alpha < 1.
IntervalEstimate summarize(std::span<const double> draws, double alpha);
IntervalEstimate summarize(const PosteriorDraws& draws, double alpha, Eigen::Index column = 0);

/// One aggregated Monte Carlo cell.
struct McRow {
  std::string method;
  double theta0 = 0.0;
  long n = 0;
  long d = 0;
  double coverage = 0.0;
  double mc_se = 0.0;
  double length = 0.0;
  double bias = 0.0;
  long reps = 0;
  long failures = 0;
  double wall_ms = 0.0;
  double signed_bias = 0.0;

  bool operator==(const McRow&) const = default;
};

/// Coverage of theta0, mean interval length and |mean(points) - theta0|
/// over a set of replications. `points` are the per-replication point
/// estimates. Throws EmptyInput when there are no intervals.
McRow coverage_stats(std::span<const IntervalEstimate> intervals, std::span<const double> points,
                     double theta0);

}  // namespace orthobayes
