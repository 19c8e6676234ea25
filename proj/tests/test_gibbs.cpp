#include <doctest.h>

#include <cmath>
#include <vector>

#include "orthobayes/error.hpp"
#include "orthobayes/gibbs.hpp"
#include "orthobayes/simharness.hpp"
#include "support.hpp"

using namespace orthobayes;
using obtest::moments;

namespace {

Dataset random_dataset(Eigen::Index n, Eigen::Index d, double theta0, std::uint64_t seed) {
  DgpConfig cfg;
  cfg.n = n;
  cfg.d = d;
  cfg.theta0 = theta0;
  cfg.beta0 = default_beta0().head(std::min<Eigen::Index>(4, d));
  cfg.gamma0 = default_gamma0().head(std::min<Eigen::Index>(4, d));
  RngStream rng(seed, 0);
  return gen_dataset(cfg, rng);
}

Priors default_priors(const Dataset& d) { return {derive_spike_slab(d.n(), d.d()), ThetaPrior{}}; }

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index j) {
  return {m.col(j).data(), m.col(j).data() + m.rows()};
}

}  // namespace

TEST_CASE("inclusion probability at beta = 0") {
  const SpikeSlabPrior p{0.0025, 11.63, 0.02, false};
  const double slab = 0.02 * obtest::normal_pdf(0.0, 11.63);
  const double spike = 0.98 * obtest::normal_pdf(0.0, 0.0025);
  CHECK(obtest::normal_pdf(0.0, 11.63) == doctest::Approx(0.1170).epsilon(1e-3));
  CHECK(obtest::normal_pdf(0.0, 0.0025) == doctest::Approx(7.979).epsilon(1e-3));
  CHECK(inclusion_probability(0.0, p) == doctest::Approx(slab / (slab + spike)).epsilon(1e-12));
  CHECK(inclusion_probability(0.0, p) == doctest::Approx(2.99e-4).epsilon(5e-3));
  // Far in the tail the slab wins.
  CHECK(inclusion_probability(2.0, p) > 0.999);
  CHECK(inclusion_probability(1e3, p) == 1.0);
}

TEST_CASE("block prior variance layout") {
  const SpikeSlabPrior p{0.01, 4.0, 0.1, false};
  const Eigen::VectorXd v = block_prior_variance(2, 10.0, Indicators{1, 0, 1}, p);
  REQUIRE(v.size() == 5);
  CHECK(v[0] == 10.0);
  CHECK(v[1] == 10.0);
  CHECK(v[2] == 4.0);
  CHECK(v[3] == 0.01);
  CHECK(v[4] == 4.0);
}

TEST_CASE("nuisance conditional mean solves the ridge system") {
  const Dataset data = random_dataset(25, 6, 0.5, 3);
  const Priors pr = default_priors(data);
  const GibbsContext ctx(data, pr);
  NuisanceState st = init_nuisance(data);
  st.i1 = {1, 0, 0, 1, 0, 1};
  // Independent dense build: D = [X, Z], Omega = I/4.
  Eigen::MatrixXd dmat(25, 7);
  dmat.col(0) = data.x.cast<double>();
  dmat.rightCols(6) = data.z;
  Eigen::VectorXd lam(7);
  lam << 10.0, pr.spike_slab.tau1_sq, pr.spike_slab.tau0_sq, pr.spike_slab.tau0_sq, pr.spike_slab.tau1_sq,
      pr.spike_slab.tau0_sq, pr.spike_slab.tau1_sq;
  Eigen::MatrixXd prec = 0.25 * dmat.transpose() * dmat;
  prec.diagonal() += lam.cwiseInverse();
  const Eigen::VectorXd rhs = dmat.transpose() * (data.y.array() - 0.5).matrix();
  const Eigen::VectorXd expect = prec.fullPivLu().solve(rhs);
  const GaussianConditional cond = nuisance_conditional(st, ctx);
  CHECK((cond.precision - prec).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((cond.mean() - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("propensity conditional with d = 2 matches a dense solve") {
  const Dataset data = random_dataset(30, 2, 0.0, 4);
  const Priors pr = default_priors(data);
  const GibbsContext ctx(data, pr);
  PropensityState st = init_propensity(data);
  st.i2 = {0, 1};
  for (Eigen::Index i = 0; i < data.n(); ++i) st.omega2[i] = 0.1 + 0.01 * static_cast<double>(i);
  Eigen::Matrix2d prec = data.z.transpose() * st.omega2.asDiagonal() * data.z;
  prec(0, 0) += 1.0 / pr.spike_slab.tau0_sq;
  prec(1, 1) += 1.0 / pr.spike_slab.tau1_sq;
  const Eigen::Vector2d rhs = data.z.transpose() * (data.x.cast<double>().array() - 0.5).matrix();
  const GaussianConditional cond = propensity_conditional(0, st, ctx);
  CHECK((cond.mean() - prec.inverse() * rhs).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((cond.precision - Eigen::MatrixXd(prec)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("empty data: nuisance block draws from the prior") {
  Dataset data;
  data.z = Eigen::MatrixXd(0, 2);
  const SpikeSlabPrior ss{0.04, 9.0, 0.5, false};
  const ThetaPrior tp{10.0};
  RngStream rng(5, 5);
  NuisanceState st = init_nuisance(data);
  const int draws = 40000;
  std::vector<double> tt;
  for (int s = 0; s < draws; ++s) {
    st = step_nuisance(std::move(st), data, ss, tp, rng);
    tt.push_back(st.theta_tilde[0]);
  }
  const auto m = moments(tt);
  CHECK(std::fabs(m.mean) < 4.0 * m.se_mean());
  CHECK(m.var == doctest::Approx(10.0).epsilon(0.03));
}

TEST_CASE("empty data: propensity block draws from the prior") {
  Dataset data;
  data.z = Eigen::MatrixXd(0, 1);
  const SpikeSlabPrior ss{0.04, 9.0, 0.3, false};
  RngStream rng(5, 6);
  PropensityState st = init_propensity(data);
  long slab = 0;
  double sum_spike = 0.0;
  double sum_slab = 0.0;
  long n_spike = 0;
  for (int s = 0; s < 60000; ++s) {
    const bool was_slab = st.i2[0] != 0;
    st = step_propensity(std::move(st), data, ss, rng);
    const double g = st.gamma[0];
    if (was_slab) {
      sum_slab += g * g;
      ++slab;
    } else {
      sum_spike += g * g;
      ++n_spike;
    }
  }
  CHECK(sum_spike / static_cast<double>(n_spike) == doctest::Approx(0.04).epsilon(0.05));
  CHECK(sum_slab / static_cast<double>(slab) == doctest::Approx(9.0).epsilon(0.05));
}

TEST_CASE("d = 1 balanced design gives gamma centred at zero") {
  Dataset data;
  const Eigen::Index n = 40;
  data.z.resize(n, 1);
  data.x.resize(n);
  data.y = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.z(i, 0) = (i / 2) % 2 ? 1.0 : -1.0;
    data.x[i] = static_cast<int>(i % 2);
  }
  const SpikeSlabPrior ss = derive_spike_slab(n, 1);
  RngStream rng(6, 0);
  PropensityState st = init_propensity(data);
  std::vector<double> g;
  for (int s = 0; s < 20000; ++s) {
    st = step_propensity(std::move(st), data, ss, rng);
    g.push_back(st.gamma[0]);
  }
  const auto m = moments(g);
  CHECK(std::fabs(m.mean) < 0.02);
}

TEST_CASE("theta conditional, single observation") {
  Dataset data;
  data.y = Eigen::VectorXd::Ones(1);
  data.x = Eigen::VectorXi::Ones(1);
  data.z = Eigen::MatrixXd(1, 0);
  const Eigen::MatrixXd h = Eigen::MatrixXd::Zero(1, 1);
  const PhiVec phi{Eigen::VectorXd::Zero(1)};
  const GaussianConditional c =
      theta_conditional(Eigen::VectorXd::Constant(1, 0.25), data, h, phi, ThetaPrior{10.0});
  const double mean = (0.5 / 0.25) * 0.25 * 1.0 / (0.25 + 0.1);
  CHECK(c.mean()[0] == doctest::Approx(mean).epsilon(1e-14));
  CHECK(c.mean()[0] == doctest::Approx(1.4286).epsilon(1e-4));
  CHECK(1.0 / c.precision(0, 0) == doctest::Approx(2.857).epsilon(2e-4));
}

TEST_CASE("theta conditional with vanishing prior precision is weighted least squares") {
  Dataset data;
  data.y.resize(4);
  data.y << 1, 0, 1, 1;
  data.x.resize(4);
  data.x << 1, 0, 0, 1;
  data.z = Eigen::MatrixXd(4, 0);
  Eigen::MatrixXd h(4, 1);
  h << 0.3, 0.6, 0.2, 0.5;
  const PhiVec phi{Eigen::Vector4d(0.1, -0.2, 0.3, 0.0)};
  const Eigen::Vector4d w(0.2, 0.25, 0.1, 0.15);
  const Eigen::VectorXd xt = data.x.cast<double>() - h.col(0);
  const Eigen::VectorXd zt = (data.y.array() - 0.5) / w.array() - phi.phi.array();
  const double wls = (zt.array() * w.array() * xt.array()).sum() / (xt.array() * w.array() * xt.array()).sum();
  const GaussianConditional c = theta_conditional(w, data, h, phi, ThetaPrior{1e12});
  CHECK(c.mean()[0] == doctest::Approx(wls).epsilon(1e-9));
}

TEST_CASE("zero residual treatment recovers the theta prior") {
  Dataset data;
  const Eigen::Index n = 20;
  data.y = Eigen::VectorXd::Ones(n);
  data.x = Eigen::VectorXi::Ones(n);
  data.z = Eigen::MatrixXd(n, 0);
  const Eigen::MatrixXd h = Eigen::MatrixXd::Ones(n, 1);  // X - h = 0
  const PhiVec phi{Eigen::VectorXd::Constant(n, 0.7)};
  RngStream rng(9, 0);
  ThetaState st = init_theta(data);
  std::vector<double> t;
  for (int s = 0; s < 50000; ++s) {
    st = step_theta(std::move(st), data, h, phi, ThetaPrior{10.0}, rng);
    t.push_back(st.theta[0]);
  }
  const auto m = moments(t);
  CHECK(std::fabs(m.mean) < 4.0 * m.se_mean());
  CHECK(m.var == doctest::Approx(10.0).epsilon(0.03));
}

TEST_CASE("step functions reject mismatched state") {
  const Dataset data = random_dataset(10, 3, 0.0, 1);
  const Priors pr = default_priors(data);
  RngStream rng(1, 1);
  NuisanceState st = init_nuisance(data);
  st.beta.resize(2);
  CHECK_THROWS_AS(step_nuisance(st, data, pr.spike_slab, pr.theta, rng), DomainError);
  ThetaState ts = init_theta(data);
  CHECK_THROWS_AS(step_theta(ts, data, Eigen::MatrixXd::Zero(9, 1), PhiVec{Eigen::VectorXd::Zero(10)},
                             pr.theta, rng),
                  DomainError);
}

TEST_CASE("chain config validation and digest") {
  ChainConfig c;
  CHECK_NOTHROW(c.validate());
  ChainConfig bad = c;
  bad.thin = 0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.burn_in = bad.iterations;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  ChainConfig other = c;
  other.seed += 1;
  CHECK(c.digest() != other.digest());
  CHECK(c.digest() == ChainConfig{}.digest());
}

TEST_CASE("run_chain retention and provenance") {
  const Dataset data = random_dataset(20, 5, 0.0, 2);
  ChainConfig cfg;
  cfg.iterations = 11;
  cfg.burn_in = 10;
  const PosteriorDraws one = run_chain(data, default_priors(data), cfg);
  CHECK(one.count() == 1);
  cfg.iterations = 30;
  cfg.burn_in = 5;
  cfg.thin = 4;
  const PosteriorDraws thinned = run_chain(data, default_priors(data), cfg);
  CHECK(thinned.count() == 7);  // sweeps 5, 9, ..., 29
  CHECK(thinned.meta.seed == cfg.seed);
  CHECK(thinned.meta.thin == 4);
  CHECK(thinned.meta.config_digest == cfg.digest());
  const PosteriorDraws again = run_chain(data, default_priors(data), cfg);
  CHECK(again.draws == thinned.draws);
}

TEST_CASE("two sweeps from identical seeds agree") {
  const Dataset data = random_dataset(30, 40, 0.5, 3);
  const Priors pr = default_priors(data);
  const GibbsContext ctx(data, pr);
  RngStream a(4, 4);
  RngStream b(4, 4);
  ChainState sa = init_chain(data);
  ChainState sb = init_chain(data);
  for (int k = 0; k < 2; ++k) CHECK(sweep(sa, ctx, a) == sweep(sb, ctx, b));
}

TEST_CASE("categorical sweep returns one draw per dummy") {
  Dataset data = random_dataset(30, 5, 0.0, 4);
  data.levels = 2;
  for (Eigen::Index i = 0; i < data.n(); ++i) data.x[i] = static_cast<int>(i % 3);
  const GibbsContext ctx(data, default_priors(data));
  RngStream rng(4, 5);
  ChainState st = init_chain(data);
  const Eigen::VectorXd theta = sweep(st, ctx, rng);
  CHECK(theta.size() == 2);
  CHECK(st.projections.cols() == 2);
  ChainConfig cfg;
  cfg.iterations = 20;
  cfg.burn_in = 10;
  CHECK(run_chain(data, default_priors(data), cfg).dims() == 2);
}

TEST_CASE("projection update keeps h inside (0,1)") {
  const Dataset data = random_dataset(30, 10, 1.0, 5);
  const GibbsContext ctx(data, default_priors(data));
  ChainState st = init_chain(data);
  st.nuisance.theta_tilde[0] = 40.0;
  st.nuisance.beta.setConstant(25.0);
  st.propensity[0].gamma.setConstant(-30.0);
  update_projection(st, ctx);
  CHECK((st.projections.array() > 0.0).all());
  CHECK((st.projections.array() < 1.0).all());
  CHECK(st.phi.phi.allFinite());
}

TEST_CASE("low-rank and precision routes target the same posterior") {
  const Dataset data = random_dataset(20, 40, 0.8, 6);
  const Priors pr = default_priors(data);
  ChainConfig cfg;
  cfg.iterations = 41000;
  cfg.burn_in = 1000;
  cfg.route = GaussianRoute::precision;
  const PosteriorDraws a = run_chain(data, pr, cfg);
  cfg.route = GaussianRoute::low_rank;
  cfg.stream_id = 1;
  const PosteriorDraws b = run_chain(data, pr, cfg);
  const auto ma = moments(column(a.draws, 0));
  const auto mb = moments(column(b.draws, 0));
  MESSAGE("precision route mean " << ma.mean << " sd " << ma.sd() << ", low-rank mean " << mb.mean
                                  << " sd " << mb.sd());
  CHECK(std::fabs(ma.mean - mb.mean) < 0.05);
  CHECK(std::fabs(ma.sd() - mb.sd()) < 0.05);
}

TEST_CASE("automatic route picks low rank only when the block is wider than n") {
  const Dataset wide = random_dataset(20, 40, 0.0, 7);
  const GibbsContext cw(wide, default_priors(wide));
  CHECK(cw.nuisance_low_rank());
  CHECK(cw.propensity_low_rank());
  const Dataset tall = random_dataset(60, 10, 0.0, 7);
  const GibbsContext ct(tall, default_priors(tall));
  CHECK_FALSE(ct.nuisance_low_rank());
  CHECK_FALSE(ct.propensity_low_rank());
}
