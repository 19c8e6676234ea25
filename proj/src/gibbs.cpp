#include "orthobayes/gibbs.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "orthobayes/digest.hpp"
#include "orthobayes/error.hpp"

namespace orthobayes {

namespace {

Eigen::MatrixXd row_gram(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m.rows(), m.rows());
  g.selfadjointView<Eigen::Lower>().rankUpdate(m);
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

Eigen::MatrixXd active_columns(const Eigen::MatrixXd& z, const Indicators& ind) {
  Eigen::Index count = 0;
  for (auto v : ind) count += v;
  Eigen::MatrixXd out(z.rows(), count);
  Eigen::Index c = 0;
  for (std::size_t j = 0; j < ind.size(); ++j) {
    if (ind[j]) out.col(c++) = z.col(static_cast<Eigen::Index>(j));
  }
  return out;
}

// Draw from N(A^{-1} D^T kappa, A^{-1}) with A = D^T Omega D + diag(prior_var)^{-1}.
// The low-rank route needs base_gram = D diag(prior_var) D^T minus the
// slab excess of the active nuisance columns, which it adds back here.
Eigen::VectorXd draw_block(RngStream& rng, const Eigen::MatrixXd& design,
                           const Eigen::VectorXd& omega, const Eigen::VectorXd& kappa,
                           const Eigen::VectorXd& prior_var, bool low_rank,
                           const Eigen::MatrixXd& base_gram, const Eigen::MatrixXd& slab_cols,
                           double slab_excess) {
  const Eigen::VectorXd root_w = omega.cwiseSqrt();
  if (low_rank) {
    // Lower triangle of I + W^{1/2} (base + excess Z_A Z_A^T) W^{1/2}.
    Eigen::MatrixXd cap = base_gram;
    if (slab_cols.cols() > 0) cap.selfadjointView<Eigen::Lower>().rankUpdate(slab_cols, slab_excess);
    const Eigen::Index n = cap.rows();
    for (Eigen::Index k = 0; k < n; ++k) {
      cap.col(k).tail(n - k).array() *= root_w.tail(n - k).array() * root_w[k];
      cap(k, k) += 1.0;
    }
    return mvn_draw_low_rank(rng, design, root_w, prior_var, kappa.cwiseQuotient(root_w), cap);
  }
  const Eigen::MatrixXd weighted = root_w.asDiagonal() * design;
  Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(design.cols(), design.cols());
  precision.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose());
  precision.diagonal() += prior_var.cwiseInverse();
  return mvn_draw_canonical(rng, design.transpose() * kappa, precision);
}

GaussianConditional dense_conditional(const Eigen::MatrixXd& design, const Eigen::VectorXd& omega,
                                      const Eigen::VectorXd& kappa,
                                      const Eigen::VectorXd& prior_var) {
  GaussianConditional out;
  out.precision = design.transpose() * omega.asDiagonal() * design;
  out.precision.diagonal() += prior_var.cwiseInverse();
  out.linear = design.transpose() * kappa;
  return out;
}

void redraw_indicators(Indicators& ind, const Eigen::VectorXd& coef, Eigen::Index offset,
                       const SpikeSlabPrior& prior, RngStream& rng) {
  for (std::size_t j = 0; j < ind.size(); ++j) {
    const double p = inclusion_probability(coef[offset + static_cast<Eigen::Index>(j)], prior);
    ind[j] = static_cast<std::uint8_t>(bernoulli_draw(rng, p));
  }
}

bool choose_low_rank(GaussianRoute route, Eigen::Index n, Eigen::Index p) {
  switch (route) {
    case GaussianRoute::precision:
      return false;
    case GaussianRoute::low_rank:
      return n > 0;
    case GaussianRoute::automatic:
      break;
  }
  return n > 0 && n < p;
}

const char* route_name(GaussianRoute r) {
  switch (r) {
    case GaussianRoute::precision:
      return "precision";
    case GaussianRoute::low_rank:
      return "low_rank";
    case GaussianRoute::automatic:
      break;
  }
  return "automatic";
}

Eigen::VectorXd centered_outcome(const Dataset& data) {
  return data.y.array() - 0.5;
}

}  // namespace

void ChainConfig::validate() const {
  if (iterations < 1) throw DomainError("chain needs at least one iteration");
  if (burn_in < 0 || burn_in >= iterations) {
    throw DomainError("burn_in must satisfy 0 <= burn_in < iterations");
  }
  if (thin < 1) throw DomainError("thin must be at least 1");
}

std::string ChainConfig::digest() const {
  std::ostringstream os;
  os << "iterations=" << iterations << ";burn_in=" << burn_in << ";thin=" << thin
     << ";seed=" << seed << ";stream=" << stream_id << ";route=" << route_name(route)
     << ";order=" << (propensity_first ? "propensity_first" : "nuisance_first");
  return fnv1a_hex(os.str());
}

GibbsContext::GibbsContext(const Dataset& data, const Priors& priors, GaussianRoute route)
    : data_(&data), priors_(priors) {
  data.validate(/*allow_empty=*/true);
  priors_.theta.validate();
  if (data.d() > 0) priors_.spike_slab.validate();
  dummies_ = dummy_encode(data.x, data.levels);
  design_.resize(data.n(), data.levels + data.d());
  design_ << dummies_, data.z;

  nuisance_low_rank_ = choose_low_rank(route, data.n(), design_.cols());
  propensity_low_rank_ = choose_low_rank(route, data.n(), data.d());
  if (nuisance_low_rank_ || propensity_low_rank_) {
    const Eigen::MatrixXd zz = row_gram(data.z);
    if (propensity_low_rank_) propensity_base_gram_ = priors_.spike_slab.tau0_sq * zz;
    if (nuisance_low_rank_) {
      nuisance_base_gram_ = priors_.theta.lambda * row_gram(dummies_);
      if (data.d() > 0) nuisance_base_gram_ += priors_.spike_slab.tau0_sq * zz;
    }
  }
}

Eigen::VectorXd GaussianConditional::mean() const {
  return precision.llt().solve(linear);
}

double inclusion_probability(double coef, const SpikeSlabPrior& prior) {
  const double log_odds = std::log(prior.q) - std::log1p(-prior.q) -
                          0.5 * std::log(prior.tau1_sq / prior.tau0_sq) -
                          0.5 * coef * coef * (1.0 / prior.tau1_sq - 1.0 / prior.tau0_sq);
  return logistic(log_odds);
}

Eigen::VectorXd block_prior_variance(int lead, double lead_var, const Indicators& ind,
                                     const SpikeSlabPrior& prior) {
  Eigen::VectorXd v(lead + static_cast<Eigen::Index>(ind.size()));
  v.head(lead).setConstant(lead_var);
  for (std::size_t j = 0; j < ind.size(); ++j) {
    v[lead + static_cast<Eigen::Index>(j)] = ind[j] ? prior.tau1_sq : prior.tau0_sq;
  }
  return v;
}

GaussianConditional nuisance_conditional(const NuisanceState& state, const GibbsContext& ctx) {
  const auto& pr = ctx.priors();
  return dense_conditional(ctx.design(), state.omega1, centered_outcome(ctx.data()),
                           block_prior_variance(ctx.levels(), pr.theta.lambda, state.i1,
                                                pr.spike_slab));
}

GaussianConditional propensity_conditional(int level, const PropensityState& state,
                                           const GibbsContext& ctx) {
  const Eigen::VectorXd kappa = ctx.dummies().col(level).array() - 0.5;
  return dense_conditional(ctx.data().z, state.omega2, kappa,
                           block_prior_variance(0, 0.0, state.i2, ctx.priors().spike_slab));
}

GaussianConditional theta_conditional(const Eigen::VectorXd& omega3, const Dataset& data,
                                      const Eigen::MatrixXd& projections, const PhiVec& phi,
                                      const ThetaPrior& prior) {
  const Eigen::MatrixXd resid = dummy_encode(data.x, data.levels) - projections;
  GaussianConditional out;
  out.precision = resid.transpose() * omega3.asDiagonal() * resid;
  out.precision.diagonal().array() += 1.0 / prior.lambda;
  const Eigen::VectorXd target = centered_outcome(data) - omega3.cwiseProduct(phi.phi);
  out.linear = resid.transpose() * target;
  return out;
}

NuisanceState init_nuisance(const Dataset& data) {
  return {Eigen::VectorXd::Zero(data.levels), Eigen::VectorXd::Zero(data.d()),
          Indicators(static_cast<std::size_t>(data.d()), 0),
          Eigen::VectorXd::Constant(data.n(), 0.25)};
}

PropensityState init_propensity(const Dataset& data) {
  return {Eigen::VectorXd::Zero(data.d()), Indicators(static_cast<std::size_t>(data.d()), 0),
          Eigen::VectorXd::Constant(data.n(), 0.25)};
}

ThetaState init_theta(const Dataset& data) {
  return {Eigen::VectorXd::Zero(data.levels), Eigen::VectorXd::Constant(data.n(), 0.25)};
}

NuisanceState step_nuisance(NuisanceState state, const GibbsContext& ctx, RngStream& rng) {
  const Dataset& data = ctx.data();
  const auto& pr = ctx.priors();
  const int k = ctx.levels();
  if (state.theta_tilde.size() != k || state.beta.size() != data.d() ||
      state.omega1.size() != data.n() || static_cast<Eigen::Index>(state.i1.size()) != data.d()) {
    throw DomainError("step_nuisance: state does not match data dimensions");
  }
  Eigen::VectorXd coef(k + data.d());
  coef << state.theta_tilde, state.beta;

  const Eigen::VectorXd eta = ctx.design() * coef;
  for (Eigen::Index i = 0; i < data.n(); ++i) state.omega1[i] = pg_draw(rng, eta[i]);

  const Eigen::VectorXd prior_var =
      block_prior_variance(k, pr.theta.lambda, state.i1, pr.spike_slab);
  Eigen::MatrixXd slab_cols;
  if (ctx.nuisance_low_rank()) slab_cols = active_columns(data.z, state.i1);
  coef = draw_block(rng, ctx.design(), state.omega1, centered_outcome(data), prior_var,
                    ctx.nuisance_low_rank(), ctx.nuisance_base_gram(), slab_cols,
                    pr.spike_slab.tau1_sq - pr.spike_slab.tau0_sq);
  state.theta_tilde = coef.head(k);
  state.beta = coef.tail(data.d());

  redraw_indicators(state.i1, coef, k, pr.spike_slab, rng);
  return state;
}

NuisanceState step_nuisance(NuisanceState state, const Dataset& data, const SpikeSlabPrior& ss,
                            const ThetaPrior& tp, RngStream& rng) {
  const GibbsContext ctx(data, Priors{ss, tp});
  return step_nuisance(std::move(state), ctx, rng);
}

PropensityState step_propensity(int level, PropensityState state, const GibbsContext& ctx,
                                RngStream& rng) {
  const Dataset& data = ctx.data();
  const auto& ss = ctx.priors().spike_slab;
  if (level < 0 || level >= ctx.levels()) throw DomainError("propensity level out of range");
  if (state.gamma.size() != data.d() || state.omega2.size() != data.n() ||
      static_cast<Eigen::Index>(state.i2.size()) != data.d()) {
    throw DomainError("step_propensity: state does not match data dimensions");
  }
  const Eigen::VectorXd eta = data.z * state.gamma;
  for (Eigen::Index i = 0; i < data.n(); ++i) state.omega2[i] = pg_draw(rng, eta[i]);
  if (data.d() == 0) return state;

  const Eigen::VectorXd kappa = ctx.dummies().col(level).array() - 0.5;
  const Eigen::VectorXd prior_var = block_prior_variance(0, 0.0, state.i2, ss);
  Eigen::MatrixXd slab_cols;
  if (ctx.propensity_low_rank()) slab_cols = active_columns(data.z, state.i2);
  state.gamma = draw_block(rng, data.z, state.omega2, kappa, prior_var,
                           ctx.propensity_low_rank(), ctx.propensity_base_gram(), slab_cols,
                           ss.tau1_sq - ss.tau0_sq);
  redraw_indicators(state.i2, state.gamma, 0, ss, rng);
  return state;
}

PropensityState step_propensity(PropensityState state, const Dataset& data,
                                const SpikeSlabPrior& ss, RngStream& rng) {
  const GibbsContext ctx(data, Priors{ss, ThetaPrior{}});
  return step_propensity(0, std::move(state), ctx, rng);
}

ThetaState step_theta(ThetaState state, const Dataset& data, const Eigen::MatrixXd& projections,
                      const PhiVec& phi, const ThetaPrior& tp, RngStream& rng) {
  if (projections.rows() != data.n() || projections.cols() != data.levels ||
      phi.phi.size() != data.n() || state.theta.size() != data.levels ||
      state.omega3.size() != data.n()) {
    throw DomainError("step_theta: dimension mismatch");
  }
  const Eigen::MatrixXd resid = dummy_encode(data.x, data.levels) - projections;
  const Eigen::VectorXd eta = resid * state.theta + phi.phi;
  for (Eigen::Index i = 0; i < data.n(); ++i) state.omega3[i] = pg_draw(rng, eta[i]);
  const GaussianConditional cond = theta_conditional(state.omega3, data, projections, phi, tp);
  state.theta = mvn_draw_canonical(rng, cond.linear, cond.precision);
  return state;
}

ThetaState step_theta(ThetaState state, const Dataset& data, const ProjectionVec& h,
                      const PhiVec& phi, const ThetaPrior& tp, RngStream& rng) {
  return step_theta(std::move(state), data, Eigen::MatrixXd(h.h), phi, tp, rng);
}

ChainState init_chain(const Dataset& data) {
  ChainState st;
  st.nuisance = init_nuisance(data);
  st.propensity.assign(static_cast<std::size_t>(data.levels), init_propensity(data));
  st.theta = init_theta(data);
  st.projections = Eigen::MatrixXd::Constant(data.n(), data.levels, 0.5);
  st.phi.phi = Eigen::VectorXd::Zero(data.n());
  return st;
}

void update_projection(ChainState& state, const GibbsContext& ctx) {
  const Dataset& data = ctx.data();
  const int k = ctx.levels();
  std::vector<ProjectionVec> h(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    OutcomeProbs probs =
        data.categorical()
            ? cond_outcome_probs_categorical(j, state.nuisance.theta_tilde, state.nuisance.beta,
                                             data)
            : cond_outcome_probs(state.nuisance.theta_tilde[0], state.nuisance.beta, data);
    Eigen::VectorXd pi = propensity_probs(state.propensity[static_cast<std::size_t>(j)].gamma, data);
    clamp_probabilities(probs.p1);
    clamp_probabilities(probs.p0);
    clamp_probabilities(pi);
    h[static_cast<std::size_t>(j)] = vw_projection_categorical(j, probs, pi);
  }
  state.projections.resize(data.n(), k);
  for (int j = 0; j < k; ++j) state.projections.col(j) = h[static_cast<std::size_t>(j)].h;
  state.phi = data.categorical()
                  ? reparam_phi(state.nuisance.theta_tilde, h, state.nuisance.beta, data)
                  : reparam_phi(state.nuisance.theta_tilde[0], h[0], state.nuisance.beta, data);
}

Eigen::VectorXd sweep(ChainState& state, const GibbsContext& ctx, RngStream& rng,
                      bool propensity_first) {
  auto propensity_blocks = [&] {
    for (int j = 0; j < ctx.levels(); ++j) {
      auto& block = state.propensity[static_cast<std::size_t>(j)];
      block = step_propensity(j, std::move(block), ctx, rng);
    }
  };
  if (propensity_first) {
    propensity_blocks();
    state.nuisance = step_nuisance(std::move(state.nuisance), ctx, rng);
  } else {
    state.nuisance = step_nuisance(std::move(state.nuisance), ctx, rng);
    propensity_blocks();
  }
  update_projection(state, ctx);
  state.theta = step_theta(std::move(state.theta), ctx.data(), state.projections, state.phi,
                           ctx.priors().theta, rng);
  return state.theta.theta;
}

namespace {

Eigen::Index retained_count(const ChainConfig& c) {
  return (c.iterations - c.burn_in + c.thin - 1) / c.thin;
}

bool keep_sweep(const ChainConfig& c, int it) {
  return it >= c.burn_in && (it - c.burn_in) % c.thin == 0;
}

DrawsMeta make_meta(const ChainConfig& c) {
  return {c.seed, c.stream_id, c.iterations, c.burn_in, c.thin, c.digest()};
}

}  // namespace

PosteriorDraws run_chain(const Dataset& data, const Priors& priors, const ChainConfig& config) {
  config.validate();
  data.validate();
  const GibbsContext ctx(data, priors, config.route);
  RngStream rng(config.seed, config.stream_id);
  ChainState state = init_chain(data);

  PosteriorDraws out;
  out.draws.resize(retained_count(config), data.levels);
  out.meta = make_meta(config);
  Eigen::Index row = 0;
  for (int it = 0; it < config.iterations; ++it) {
    const Eigen::VectorXd theta = sweep(state, ctx, rng, config.propensity_first);
    if (keep_sweep(config, it)) out.draws.row(row++) = theta.transpose();
  }
  return out;
}

PosteriorDraws run_theta_chain(const Dataset& data, const Eigen::MatrixXd& projections,
                               const PhiVec& phi, const ThetaPrior& tp,
                               const ChainConfig& config) {
  config.validate();
  data.validate();
  tp.validate();
  RngStream rng(config.seed, config.stream_id);
  ThetaState state = init_theta(data);

  PosteriorDraws out;
  out.draws.resize(retained_count(config), data.levels);
  out.meta = make_meta(config);
  Eigen::Index row = 0;
  for (int it = 0; it < config.iterations; ++it) {
    state = step_theta(std::move(state), data, projections, phi, tp, rng);
    if (keep_sweep(config, it)) out.draws.row(row++) = state.theta.transpose();
  }
  return out;
}

}  // namespace orthobayes
