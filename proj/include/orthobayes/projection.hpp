#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "orthobayes/model.hpp"

namespace orthobayes {

/// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before any
/// variance-ratio arithmetic.
inline constexpr double kProbFloor = 1e-12;

/// Clamps every entry into [kProbFloor, 1 - kProbFloor].
void clamp_probabilities(Eigen::VectorXd& p);

/// P(Y=1 | X=1, Z) and P(Y=1 | X=0, Z) under a draw of (theta_tilde, beta).
struct OutcomeProbs {
  Eigen::VectorXd p1;
  Eigen::VectorXd p0;
};

/// Variance-weighted projections h(Z_i), one per row.
struct ProjectionVec {
  Eigen::VectorXd h;
};

/// Re-parameterized nuisance phi_i = theta_tilde h(Z_i) + Z_i^T beta.
struct PhiVec {
  Eigen::VectorXd phi;
};

OutcomeProbs cond_outcome_probs(double theta_tilde, const Eigen::VectorXd& beta,
                                const Dataset& data);

/// Same, but for dummy j (0-based) of a categorical treatment. The other
/// dummies are held at their observed values in each row.
OutcomeProbs cond_outcome_probs_categorical(int j, const Eigen::VectorXd& theta_tilde,
                                            const Eigen::VectorXd& beta, const Dataset& data);

/// logistic(Z_i^T gamma) for every row.
Eigen::VectorXd propensity_probs(const Eigen::VectorXd& gamma, const Eigen::MatrixXd& z);
Eigen::VectorXd propensity_probs(const Eigen::VectorXd& gamma, const Dataset& data);

/// h_i = 1 / (1 + R_i) with
///   R_i = p0(1-p0)(1-pi) / (p1(1-p1) pi),
/// evaluated as logistic(-log R_i). Throws DegenerateProbability if any
/// input is not strictly inside (0, 1).
ProjectionVec vw_projection_binary(const OutcomeProbs& probs, const Eigen::VectorXd& propensity);

/// Level-wise projection h^j for dummy j of a categorical treatment; the
/// arithmetic is the binary one applied to the dummy's own inputs.
ProjectionVec vw_projection_categorical(int j, const OutcomeProbs& probs_j,
                                        const Eigen::VectorXd& propensity_j);

/// Variance-weighted conditional mean of X over levels 0..K:
///   h_i = sum_k k v_ik p_ik / sum_k v_ik p_ik,
/// where v_ik = Var(Y | X=k, Z_i) and p_ik = P(X=k | Z_i). With K = 1 the
/// result equals vw_projection_binary bit-for-bit.
Eigen::VectorXd vw_projection_general(const std::vector<Eigen::VectorXd>& var_by_level,
                                      const std::vector<Eigen::VectorXd>& p_by_level);

PhiVec reparam_phi(double theta_tilde, const ProjectionVec& h, const Eigen::VectorXd& beta,
                   const Dataset& data);

/// Categorical form: phi_i = sum_j theta_tilde_j h^j_i + Z_i^T beta.
PhiVec reparam_phi(const Eigen::VectorXd& theta_tilde, std::span<const ProjectionVec> h,
                   const Eigen::VectorXd& beta, const Dataset& data);

/// n x K indicator matrix; column j is 1 where x_i == j + 1, so level 0 is
/// the all-zero reference row. Throws LevelOutOfRange.
Eigen::MatrixXd dummy_encode(const Eigen::VectorXi& x, int levels);

}  // namespace orthobayes
