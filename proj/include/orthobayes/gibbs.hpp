#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "orthobayes/inference.hpp"
#include "orthobayes/model.hpp"
#include "orthobayes/projection.hpp"
#include "orthobayes/randkit.hpp"

namespace orthobayes {

using Indicators = std::vector<std::uint8_t>;

/// Outcome-model block: (theta_tilde, beta), spike-and-slab indicators and
/// the Polya-Gamma latents of the outcome likelihood.
struct NuisanceState {
  Eigen::VectorXd theta_tilde;  // one entry per treatment dummy
  Eigen::VectorXd beta;
  Indicators i1;
  Eigen::VectorXd omega1;
};

/// Propensity working model for one treatment dummy.
struct PropensityState {
  Eigen::VectorXd gamma;
  Indicators i2;
  Eigen::VectorXd omega2;
};

struct ThetaState {
  Eigen::VectorXd theta;
  Eigen::VectorXd omega3;
};

struct Priors {
  SpikeSlabPrior spike_slab;
  ThetaPrior theta;
};

/// How the Gaussian block updates are factored. `precision` factors the
/// p x p precision; `low_rank` factors an n x n capacitance matrix and is
/// cheaper when p > n. Both sample the same distribution.
enum class GaussianRoute { automatic, precision, low_rank };

struct ChainConfig {
  int iterations = 6000;
  int burn_in = 1000;
  int thin = 1;
  std::uint64_t seed = 20240607;
  std::uint64_t stream_id = 0;
  GaussianRoute route = GaussianRoute::automatic;
  /// Update the propensity block before the outcome block (the default);
  /// the two blocks do not condition on each other.
  bool propensity_first = true;

  void validate() const;
  /// Stable text digest of the fields above.
  std::string digest() const;
};

/// Read-only per-chain precomputation: the treatment dummies, the stacked
/// design [X, Z] and (for the low-rank route) the prior-weighted row Gram
/// matrices.
class GibbsContext {
 public:
  GibbsContext(const Dataset& data, const Priors& priors,
               GaussianRoute route = GaussianRoute::automatic);

  const Dataset& data() const { return *data_; }
  const Priors& priors() const { return priors_; }
  int levels() const { return data_->levels; }
  const Eigen::MatrixXd& dummies() const { return dummies_; }
  const Eigen::MatrixXd& design() const { return design_; }
  bool nuisance_low_rank() const { return nuisance_low_rank_; }
  bool propensity_low_rank() const { return propensity_low_rank_; }
  /// lambda X X^T + tau0^2 Z Z^T (low-rank route only).
  const Eigen::MatrixXd& nuisance_base_gram() const { return nuisance_base_gram_; }
  /// tau0^2 Z Z^T (low-rank route only).
  const Eigen::MatrixXd& propensity_base_gram() const { return propensity_base_gram_; }

 private:
  const Dataset* data_;
  Priors priors_;
  Eigen::MatrixXd dummies_;
  Eigen::MatrixXd design_;
  bool nuisance_low_rank_ = false;
  bool propensity_low_rank_ = false;
  Eigen::MatrixXd nuisance_base_gram_;
  Eigen::MatrixXd propensity_base_gram_;
};

/// Canonical-form Gaussian N(precision^{-1} linear, precision^{-1}).
struct GaussianConditional {
  Eigen::VectorXd linear;
  Eigen::MatrixXd precision;

  Eigen::VectorXd mean() const;
};

/// P(indicator = 1 | coefficient) under the spike-and-slab mixture, from
/// log-density differences.
double inclusion_probability(double coef, const SpikeSlabPrior& prior);

/// Prior variances diag(Lambda) for a block: `lead` leading coordinates with
/// variance `lead_var`, then tau^2 chosen by each indicator.
Eigen::VectorXd block_prior_variance(int lead, double lead_var, const Indicators& ind,
                                     const SpikeSlabPrior& prior);

// Gaussian conditionals at the current latents, in dense precision form.
GaussianConditional nuisance_conditional(const NuisanceState& state, const GibbsContext& ctx);
GaussianConditional propensity_conditional(int level, const PropensityState& state,
                                           const GibbsContext& ctx);
GaussianConditional theta_conditional(const Eigen::VectorXd& omega3, const Dataset& data,
                                      const Eigen::MatrixXd& projections, const PhiVec& phi,
                                      const ThetaPrior& prior);

NuisanceState init_nuisance(const Dataset& data);
PropensityState init_propensity(const Dataset& data);
ThetaState init_theta(const Dataset& data);

/// Outcome block: redraw omega1, then (theta_tilde, beta), then I1.
NuisanceState step_nuisance(NuisanceState state, const GibbsContext& ctx, RngStream& rng);
NuisanceState step_nuisance(NuisanceState state, const Dataset& data, const SpikeSlabPrior& ss,
                            const ThetaPrior& tp, RngStream& rng);

/// Propensity block for treatment dummy `level` (0-based): omega2, gamma, I2.
PropensityState step_propensity(int level, PropensityState state, const GibbsContext& ctx,
                                RngStream& rng);
PropensityState step_propensity(PropensityState state, const Dataset& data,
                                const SpikeSlabPrior& ss, RngStream& rng);

/// Effect block: redraw omega3, then theta, given projections (n x K, one
/// column per dummy) and phi.
ThetaState step_theta(ThetaState state, const Dataset& data, const Eigen::MatrixXd& projections,
                      const PhiVec& phi, const ThetaPrior& tp, RngStream& rng);
ThetaState step_theta(ThetaState state, const Dataset& data, const ProjectionVec& h,
                      const PhiVec& phi, const ThetaPrior& tp, RngStream& rng);

/// Full joint state of one chain.
struct ChainState {
  NuisanceState nuisance;
  std::vector<PropensityState> propensity;  // one per treatment dummy
  ThetaState theta;
  Eigen::MatrixXd projections;  // n x K, last h
  PhiVec phi;
};

ChainState init_chain(const Dataset& data);

/// Projections h (n x K) and phi from the current nuisance and propensity draws.
void update_projection(ChainState& state, const GibbsContext& ctx);

/// One sweep: propensity block(s), outcome block, h, phi, theta. Returns the
/// theta draw of this sweep.
Eigen::VectorXd sweep(ChainState& state, const GibbsContext& ctx, RngStream& rng,
                      bool propensity_first = true);

/// Runs config.iterations sweeps, discards the burn-in and keeps every
/// config.thin-th draw.
PosteriorDraws run_chain(const Dataset& data, const Priors& priors, const ChainConfig& config);

/// Theta-only chain with projections and phi held fixed.
PosteriorDraws run_theta_chain(const Dataset& data, const Eigen::MatrixXd& projections,
                               const PhiVec& phi, const ThetaPrior& tp,
                               const ChainConfig& config);

}  // namespace orthobayes
