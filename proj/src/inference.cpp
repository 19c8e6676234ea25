#include "orthobayes/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "orthobayes/error.hpp"

namespace orthobayes {

namespace {

// Summation over a sorted copy, so the result does not depend on input order.
double order_free_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return std::accumulate(values.begin(), values.end(), 0.0);
}

}  // namespace

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InsufficientDraws("quantile of an empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

IntervalEstimate summarize(std::span<const double> draws, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");
  if (draws.size() < 2) throw InsufficientDraws("need at least two draws");
  for (double v : draws) {
    if (!std::isfinite(v)) throw DomainError("non-finite posterior draw");
  }
  const double n = static_cast<double>(draws.size());
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : draws) ss += (v - mean) * (v - mean);

  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());

  IntervalEstimate out;
  out.point = mean;
  out.se = std::sqrt(ss / (n - 1.0));
  out.lower = sorted_quantile(sorted, alpha / 2.0);
  out.upper = sorted_quantile(sorted, 1.0 - alpha / 2.0);
  out.level = 1.0 - alpha;
  return out;
}

IntervalEstimate summarize(const PosteriorDraws& draws, double alpha, Eigen::Index column) {
  if (column < 0 || column >= draws.dims()) throw DomainError("draws column out of range");
  std::vector<double> col(static_cast<std::size_t>(draws.count()));
  for (Eigen::Index r = 0; r < draws.count(); ++r) col[static_cast<std::size_t>(r)] = draws.draws(r, column);
  return summarize(col, alpha);
}

McRow coverage_stats(std::span<const IntervalEstimate> intervals, std::span<const double> points,
                     double theta0) {
  if (intervals.empty()) throw EmptyInput("no intervals to aggregate");
  if (points.size() != intervals.size()) {
    throw DomainError("intervals and point estimates differ in length");
  }
  const double reps = static_cast<double>(intervals.size());
  double covered = 0.0;
  std::vector<double> lengths;
  lengths.reserve(intervals.size());
  for (const auto& iv : intervals) {
    if (iv.lower <= theta0 && theta0 <= iv.upper) covered += 1.0;
    lengths.push_back(iv.upper - iv.lower);
  }
  const double length = order_free_sum(std::move(lengths));
  const double mean_point = order_free_sum({points.begin(), points.end()}) / reps;

  McRow row;
  row.theta0 = theta0;
  row.coverage = covered / reps;
  row.mc_se = std::sqrt(row.coverage * (1.0 - row.coverage) / reps);
  row.length = length / reps;
  row.signed_bias = mean_point - theta0;
  row.bias = std::fabs(row.signed_bias);
  row.reps = static_cast<long>(intervals.size());
  return row;
}

}  // namespace orthobayes
