#include "orthobayes/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "orthobayes/error.hpp"

namespace orthobayes {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

void require_open_unit(const Eigen::VectorXd& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0 && v[i] < 1.0)) {
      throw DegenerateProbability(std::string(what) + "[" + std::to_string(i) +
                                  "] = " + std::to_string(v[i]));
    }
  }
}

// Weighted mean of the level index k = 0..K given log weights. The two-level
// case is a single logistic so the binary and general projections share the
// exact same floating-point path.
double level_mean(std::span<const double> log_w) {
  const auto top = static_cast<double>(log_w.size() - 1);
  double mean = 0.0;
  if (log_w.size() == 2) {
    if (std::isinf(log_w[0]) && std::isinf(log_w[1])) {
      throw DegenerateProbability("all variance weights vanish");
    }
    mean = logistic(log_w[1] - log_w[0]);
  } else {
    const double peak = *std::max_element(log_w.begin(), log_w.end());
    if (!std::isfinite(peak)) throw DegenerateProbability("all variance weights vanish");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < log_w.size(); ++k) {
      const double w = std::exp(log_w[k] - peak);
      num += static_cast<double>(k) * w;
      den += w;
    }
    mean = num / den;
  }
  return std::clamp(mean, kProbFloor, top - kProbFloor);
}

}  // namespace

void clamp_probabilities(Eigen::VectorXd& p) {
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = clamp_prob(p[i]);
}

OutcomeProbs cond_outcome_probs(double theta_tilde, const Eigen::VectorXd& beta,
                                const Dataset& data) {
  if (beta.size() != data.d()) throw DomainError("beta length must equal d");
  const Eigen::VectorXd eta = data.z * beta;
  OutcomeProbs out{Eigen::VectorXd(data.n()), Eigen::VectorXd(data.n())};
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out.p1[i] = logistic(theta_tilde + eta[i]);
    out.p0[i] = logistic(eta[i]);
  }
  return out;
}

OutcomeProbs cond_outcome_probs_categorical(int j, const Eigen::VectorXd& theta_tilde,
                                            const Eigen::VectorXd& beta, const Dataset& data) {
  if (beta.size() != data.d()) throw DomainError("beta length must equal d");
  if (theta_tilde.size() != data.levels || j < 0 || j >= data.levels) {
    throw DomainError("categorical level index or theta_tilde size mismatch");
  }
  const Eigen::VectorXd eta = data.z * beta;
  OutcomeProbs out{Eigen::VectorXd(data.n()), Eigen::VectorXd(data.n())};
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    // Observed level x_i contributes theta_tilde[x_i - 1] unless it is the
    // dummy being toggled or the reference level.
    const int level = data.x[i];
    const double others = (level > 0 && level - 1 != j) ? theta_tilde[level - 1] : 0.0;
    const double base = eta[i] + others;
    out.p1[i] = logistic(theta_tilde[j] + base);
    out.p0[i] = logistic(base);
  }
  return out;
}

Eigen::VectorXd propensity_probs(const Eigen::VectorXd& gamma, const Eigen::MatrixXd& z) {
  if (gamma.size() != z.cols()) throw DomainError("gamma length must equal d");
  Eigen::VectorXd eta = z * gamma;
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = logistic(eta[i]);
  return eta;
}

Eigen::VectorXd propensity_probs(const Eigen::VectorXd& gamma, const Dataset& data) {
  return propensity_probs(gamma, data.z);
}

ProjectionVec vw_projection_binary(const OutcomeProbs& probs, const Eigen::VectorXd& propensity) {
  const auto n = propensity.size();
  if (probs.p1.size() != n || probs.p0.size() != n) {
    throw DomainError("vw_projection_binary: length mismatch");
  }
  require_open_unit(probs.p1, "p1");
  require_open_unit(probs.p0, "p0");
  require_open_unit(propensity, "propensity");
  ProjectionVec out{Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p1 = clamp_prob(probs.p1[i]);
    const double p0 = clamp_prob(probs.p0[i]);
    const double pi = clamp_prob(propensity[i]);
    const double log_w[2] = {std::log(p0 * (1.0 - p0)) + std::log(1.0 - pi),
                             std::log(p1 * (1.0 - p1)) + std::log(pi)};
    out.h[i] = level_mean(log_w);
  }
  return out;
}

ProjectionVec vw_projection_categorical(int j, const OutcomeProbs& probs_j,
                                        const Eigen::VectorXd& propensity_j) {
  if (j < 0) throw DomainError("categorical level index must be non-negative");
  return vw_projection_binary(probs_j, propensity_j);
}

Eigen::VectorXd vw_projection_general(const std::vector<Eigen::VectorXd>& var_by_level,
                                      const std::vector<Eigen::VectorXd>& p_by_level) {
  const std::size_t levels = var_by_level.size();
  if (levels < 2 || p_by_level.size() != levels) {
    throw DomainError("vw_projection_general needs matching inputs for at least two levels");
  }
  const auto n = var_by_level[0].size();
  for (std::size_t k = 0; k < levels; ++k) {
    if (var_by_level[k].size() != n || p_by_level[k].size() != n) {
      throw DomainError("vw_projection_general: length mismatch");
    }
  }
  Eigen::VectorXd h(n);
  std::vector<double> log_w(levels);
  for (Eigen::Index i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t k = 0; k < levels; ++k) {
      const double v = var_by_level[k][i];
      const double p = p_by_level[k][i];
      if (!(v >= 0.0 && v <= 0.25 + 1e-12)) {
        throw DomainError("conditional variance outside [0, 0.25] in row " + std::to_string(i));
      }
      if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("level probability outside [0, 1] in row " + std::to_string(i));
      }
      total += p;
      log_w[k] = std::log(v) + std::log(clamp_prob(p));
    }
    if (std::fabs(total - 1.0) > 1e-8) {
      throw DomainError("level probabilities do not sum to one in row " + std::to_string(i));
    }
    h[i] = level_mean(log_w);
  }
  return h;
}

PhiVec reparam_phi(double theta_tilde, const ProjectionVec& h, const Eigen::VectorXd& beta,
                   const Dataset& data) {
  if (h.h.size() != data.n() || beta.size() != data.d()) {
    throw DomainError("reparam_phi: dimension mismatch");
  }
  PhiVec out{data.z * beta};
  out.phi += theta_tilde * h.h;
  return out;
}

PhiVec reparam_phi(const Eigen::VectorXd& theta_tilde, std::span<const ProjectionVec> h,
                   const Eigen::VectorXd& beta, const Dataset& data) {
  if (static_cast<std::size_t>(theta_tilde.size()) != h.size() || beta.size() != data.d()) {
    throw DomainError("reparam_phi: dimension mismatch");
  }
  PhiVec out{data.z * beta};
  for (std::size_t j = 0; j < h.size(); ++j) {
    if (h[j].h.size() != data.n()) throw DomainError("reparam_phi: projection length mismatch");
    out.phi += theta_tilde[static_cast<Eigen::Index>(j)] * h[j].h;
  }
  return out;
}

Eigen::MatrixXd dummy_encode(const Eigen::VectorXi& x, int levels) {
  if (levels < 1) throw LevelOutOfRange("level count must be at least 1");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.size(), levels);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] < 0 || x[i] > levels) {
      throw LevelOutOfRange("entry " + std::to_string(i) + " = " + std::to_string(x[i]) +
                            " outside 0.." + std::to_string(levels));
    }
    if (x[i] > 0) out(i, x[i] - 1) = 1.0;
  }
  return out;
}

}  // namespace orthobayes
