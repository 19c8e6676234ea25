#include "orthobayes/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "orthobayes/error.hpp"

namespace orthobayes {

void Dataset::validate(bool allow_empty) const {
  if (!allow_empty && n() < 1) throw DomainError("dataset must have at least one row");
  if (x.size() != n() || z.rows() != n()) {
    throw DomainError("y, x and z must have the same number of rows");
  }
  if (levels < 1) throw DomainError("treatment must have at least two categories");
  for (Eigen::Index i = 0; i < n(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw DomainError("outcome entry " + std::to_string(i) + " is not 0/1");
    }
    if (x[i] < 0 || x[i] > levels) {
      throw DomainError("treatment entry " + std::to_string(i) + " outside 0.." +
                        std::to_string(levels));
    }
  }
  if (!z.allFinite()) throw DomainError("nuisance matrix has non-finite entries");
  if (categorical()) {
    std::vector<bool> seen(static_cast<std::size_t>(levels) + 1, false);
    for (Eigen::Index i = 0; i < n(); ++i) seen[static_cast<std::size_t>(x[i])] = true;
    for (int k = 0; k <= levels; ++k) {
      if (!seen[static_cast<std::size_t>(k)]) {
        throw DomainError("treatment level " + std::to_string(k) + " never observed");
      }
    }
  }
}

Dataset make_binary_dataset(Eigen::VectorXd y, Eigen::VectorXi x, Eigen::MatrixXd z) {
  Dataset data{std::move(y), std::move(x), std::move(z), 1};
  data.validate();
  return data;
}

void SpikeSlabPrior::validate() const {
  if (!(tau0_sq > 0.0 && tau0_sq < tau1_sq)) {
    throw DomainError("spike-and-slab prior requires 0 < tau0^2 < tau1^2");
  }
  if (!(q > 0.0 && q < 1.0)) throw DomainError("inclusion probability must lie in (0,1)");
}

void ThetaPrior::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw DomainError("theta prior variance must be positive");
  }
}

double selection_threshold(Eigen::Index n) {
  return std::max(10.0, std::log(static_cast<double>(n)));
}

double binomial_upper_tail(Eigen::Index trials, double q, double threshold) {
  if (q <= 0.0) return 0.0;
  if (q >= 1.0) return static_cast<double>(trials) > threshold ? 1.0 : 0.0;
  const auto first = static_cast<Eigen::Index>(std::floor(threshold)) + 1;
  if (first > trials) return 0.0;
  const double dn = static_cast<double>(trials);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(trials - std::max<Eigen::Index>(first, 0) + 1));
  double peak = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = std::max<Eigen::Index>(first, 0); k <= trials; ++k) {
    const double dk = static_cast<double>(k);
    const double t = std::lgamma(dn + 1.0) - std::lgamma(dk + 1.0) - std::lgamma(dn - dk + 1.0) +
                     dk * log_q + (dn - dk) * log_1mq;
    terms.push_back(t);
    peak = std::max(peak, t);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - peak);
  return std::min(1.0, std::exp(peak) * sum);
}

double calibrate_inclusion_probability(Eigen::Index d, double threshold, double target) {
  if (static_cast<double>(d) <= threshold) {
    throw RootNotBracketed("d = " + std::to_string(d) + " does not exceed threshold " +
                           std::to_string(threshold));
  }
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    if (binomial_upper_tail(d, mid, threshold) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

SpikeSlabPrior derive_spike_slab(Eigen::Index n, Eigen::Index d) {
  if (n < 2 || d < 1) throw DomainError("derive_spike_slab requires n >= 2 and d >= 1");
  const double dn = static_cast<double>(n);
  SpikeSlabPrior prior;
  prior.tau0_sq = 1.0 / dn;
  prior.tau1_sq = std::max(dn, 0.01 * std::pow(static_cast<double>(d), 2.1)) / dn;
  try {
    prior.q = calibrate_inclusion_probability(d, selection_threshold(n));
  } catch (const RootNotBracketed&) {
    prior.q = 0.5 / static_cast<double>(d);
    prior.q_fallback = true;
  }
  return prior;
}

}  // namespace orthobayes
