#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace orthobayes {

/// Observed data: binary outcome y, treatment x and nuisance covariates z.
///
/// The treatment is stored as integer levels 0..levels. A binary treatment
/// has levels == 1; a categorical treatment with K+1 categories has
/// levels == K and level 0 is the reference category.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::VectorXi x;
  Eigen::MatrixXd z;
  int levels = 1;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index d() const { return z.cols(); }
  bool categorical() const { return levels > 1; }

  /// Checks the container invariants and throws DomainError on violation.
  /// `allow_empty` admits n == 0, which the samplers treat as prior-only.
  void validate(bool allow_empty = false) const;
};

/// Builds and validates a Dataset with a binary treatment.
Dataset make_binary_dataset(Eigen::VectorXd y, Eigen::VectorXi x, Eigen::MatrixXd z);

/// Spike-and-slab hyperparameters shared by the beta and gamma priors.
struct SpikeSlabPrior {
  double tau0_sq = 0.0;
  double tau1_sq = 0.0;
  double q = 0.0;
  /// True when q could not be calibrated and fell back to 0.5 / d.
  bool q_fallback = false;

  void validate() const;
};

/// Gaussian prior N(0, lambda) on the effect of interest.
struct ThetaPrior {
  double lambda = 10.0;

  void validate() const;
};

/// Selection threshold K = max{10, log n} (natural log).
double selection_threshold(Eigen::Index n);

/// P[Binomial(trials, q) > threshold], evaluated exactly in log space.
double binomial_upper_tail(Eigen::Index trials, double q, double threshold);

/// The q in (0,1) with P[Binomial(d, q) > threshold] = target, by bisection.
/// Throws RootNotBracketed when d <= threshold.
double calibrate_inclusion_probability(Eigen::Index d, double threshold, double target = 0.1);

/// Hyperparameters tau0^2 = 1/n, n tau1^2 = max{n, 0.01 d^2.1} and q with
/// P[sum of indicators > K] = 0.1. Falls back to q = 0.5/d (flagged) when
/// the tail target cannot be met.
SpikeSlabPrior derive_spike_slab(Eigen::Index n, Eigen::Index d);

/// Overflow-safe logistic function exp(u) / (1 + exp(u)).
inline double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace orthobayes
