#include "orthobayes/simharness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include <boost/math/distributions/normal.hpp>

#include "orthobayes/error.hpp"

namespace orthobayes {

namespace {

constexpr double kSeparationBound = 30.0;
constexpr int kNewtonIterations = 25;
constexpr int kMaxHalvings = 30;

double logistic_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + e^eta) without overflow
    const double e = eta[i];
    const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll += y[i] * e - softplus;
  }
  return ll;
}

void check_separation(const Eigen::VectorXd& coef) {
  if (coef.size() > 0 && coef.cwiseAbs().maxCoeff() > kSeparationBound) {
    throw Separation("coefficient magnitude exceeded " + std::to_string(kSeparationBound));
  }
}

Eigen::VectorXd leading_padded(const Eigen::VectorXd& lead, Eigen::Index d) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  out.head(std::min(d, lead.size())) = lead.head(std::min(d, lead.size()));
  return out;
}

Eigen::Index last_nonzero(const Eigen::VectorXd& v) {
  for (Eigen::Index j = v.size(); j-- > 0;) {
    if (v[j] != 0.0) return j;
  }
  return -1;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  return out;
}

Eigen::VectorXd select_entries(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = v[rows[r]];
  return out;
}

std::vector<Eigen::VectorXd> lasso_path(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                        std::span<const double> grid, const LassoOptions& opts) {
  std::vector<Eigen::VectorXd> path;
  path.reserve(grid.size());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(z.cols());
  for (double lambda : grid) {
    b = lasso_fit(z, y, lambda, std::move(b), opts);
    path.push_back(b);
  }
  return path;
}

std::vector<Eigen::Index> nonzero_indices(const Eigen::VectorXd& b) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    if (b[j] != 0.0) out.push_back(j);
  }
  return out;
}

std::size_t pick_bic(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                     const std::vector<Eigen::VectorXd>& path) {
  const double n = static_cast<double>(z.rows());
  std::size_t best = 0;
  double best_bic = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < path.size(); ++k) {
    const double df = static_cast<double>(nonzero_indices(path[k]).size());
    const double bic = -2.0 * logistic_loglik(z * path[k], y) + df * std::log(n);
    if (bic < best_bic) {
      best_bic = bic;
      best = k;
    }
  }
  return best;
}

std::size_t pick_cv(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                    std::span<const double> grid, const LassoOptions& opts) {
  const Eigen::Index n = z.rows();
  const int folds = static_cast<int>(std::min<Eigen::Index>(opts.folds, n));
  if (folds < 2) throw DomainError("cross-validation needs at least two folds");

  // Balanced fold labels, shuffled by Fisher-Yates on the fold stream.
  std::vector<int> label(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) label[static_cast<std::size_t>(i)] = static_cast<int>(i % folds);
  RngStream rng(opts.fold_seed, opts.fold_stream);
  for (std::size_t i = label.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(label[i - 1], label[std::min(j, i - 1)]);
  }

  std::vector<double> deviance(grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
    for (Eigen::Index i = 0; i < n; ++i) {
      (label[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
    }
    const Eigen::MatrixXd z_train = select_rows(z, train);
    const Eigen::MatrixXd z_test = select_rows(z, test);
    const Eigen::VectorXd y_test = select_entries(y, test);
    const auto path = lasso_path(z_train, select_entries(y, train), grid, opts);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      deviance[k] += -2.0 * logistic_loglik(z_test * path[k], y_test);
    }
  }
  return static_cast<std::size_t>(std::min_element(deviance.begin(), deviance.end()) -
                                  deviance.begin());
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::cb:
      return "CB";
    case Method::oracle:
      return "ORACLE";
    case Method::naive:
      return "NAIVE";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  std::string up(name);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "CB") return Method::cb;
  if (up == "ORACLE") return Method::oracle;
  if (up == "NAIVE") return Method::naive;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

Eigen::VectorXd default_beta0() { return (Eigen::VectorXd(4) << -0.4, 0.8, -1.0, 1.5).finished(); }

Eigen::VectorXd default_gamma0() { return (Eigen::VectorXd(4) << 0.3, -0.5, -1.0, 1.5).finished(); }

void DgpConfig::validate() const {
  if (n < 10) throw DomainError("dgp.n must be at least 10");
  if (d < 1) throw DomainError("dgp.d must be at least 1");
  if (last_nonzero(beta0) >= d || last_nonzero(gamma0) >= d) {
    throw DomainError("dgp.d is smaller than the last nonzero coefficient index");
  }
  if (!(std::fabs(rho) < 1.0)) throw DomainError("dgp.rho must satisfy |rho| < 1");
  if (!std::isfinite(theta0)) throw DomainError("dgp.theta0 must be finite");
}

Eigen::VectorXd DgpConfig::beta_full() const { return leading_padded(beta0, d); }

Eigen::VectorXd DgpConfig::gamma_full() const { return leading_padded(gamma0, d); }

std::vector<Eigen::Index> DgpConfig::support() const {
  std::vector<Eigen::Index> s;
  for (Eigen::Index j = 0; j < std::min(d, beta0.size()); ++j) {
    if (beta0[j] != 0.0) s.push_back(j);
  }
  return s;
}

Eigen::MatrixXd gen_design(const DgpConfig& cfg, RngStream& rng) {
  cfg.validate();
  const double innov = std::sqrt(1.0 - cfg.rho * cfg.rho);
  Eigen::MatrixXd z(cfg.n, cfg.d);
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    double prev = rng.normal();
    z(i, 0) = prev;
    for (Eigen::Index j = 1; j < cfg.d; ++j) {
      prev = cfg.rho * prev + innov * rng.normal();
      z(i, j) = prev;
    }
  }
  return z;
}

Eigen::VectorXd gen_binary(const Eigen::VectorXd& eta, RngStream& rng) {
  Eigen::VectorXd out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (!std::isfinite(eta[i])) throw DomainError("gen_binary: non-finite predictor");
    out[i] = bernoulli_draw(rng, logistic(eta[i]));
  }
  return out;
}

Dataset gen_dataset(const DgpConfig& cfg, RngStream& rng) {
  Dataset data;
  data.z = gen_design(cfg, rng);
  const Eigen::VectorXd x = gen_binary(data.z * cfg.gamma_full(), rng);
  data.x = x.cast<int>();
  data.y = gen_binary(cfg.theta0 * x + data.z * cfg.beta_full(), rng);
  data.levels = 1;
  return data;
}

LogisticFit logistic_mle(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (y.size() != n) throw DomainError("logistic_mle: length mismatch");
  if (n == 0) throw EmptyInput("logistic_mle: no observations");
  const double ybar = y.mean();
  if (ybar == 0.0 || ybar == 1.0) throw Separation("outcome is constant");

  LogisticFit fit;
  fit.coef = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = logistic_loglik(eta, y);
  Eigen::VectorXd prob(n);
  Eigen::VectorXd weight(n);
  auto refresh = [&] {
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = logistic(eta[i]);
      weight[i] = prob[i] * (1.0 - prob[i]);
    }
  };
  auto information = [&] {
    const Eigen::MatrixXd wd = weight.cwiseSqrt().asDiagonal() * design;
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    info.selfadjointView<Eigen::Lower>().rankUpdate(wd.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(info.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success) {
      throw FactorizationFailure("observed information is not positive definite");
    }
    return llt;
  };

  refresh();
  bool converged = p == 0;
  for (int it = 1; it <= kNewtonIterations && !converged; ++it) {
    fit.iterations = it;
    const auto llt = information();
    const Eigen::VectorXd step = llt.solve(design.transpose() * (y - prob));
    double scale = 1.0;
    Eigen::VectorXd trial;
    double trial_ll = -std::numeric_limits<double>::infinity();
    int halvings = 0;
    for (;; ++halvings) {
      trial = fit.coef + scale * step;
      trial_ll = logistic_loglik(design * trial, y);
      if (trial_ll >= ll - 1e-12 * (std::fabs(ll) + 1.0)) break;
      if (halvings == kMaxHalvings) throw Nonconvergence("step halving exhausted");
      scale *= 0.5;
    }
    fit.coef = trial;
    check_separation(fit.coef);
    eta = design * fit.coef;
    refresh();
    converged = std::fabs(trial_ll - ll) < 1e-10 * (std::fabs(trial_ll) + 0.1);
    ll = trial_ll;
  }
  // Under separation the coefficients drift slowly; fitted probabilities
  // that are numerically 0 or 1 flag it even before |coef| reaches the bound.
  if (n > 0 && eta.cwiseAbs().maxCoeff() > kSeparationBound) {
    throw Separation("fitted probabilities numerically 0 or 1");
  }
  if (!converged) throw Nonconvergence("Newton-Raphson did not converge in 25 iterations");
  fit.cov = information().solve(Eigen::MatrixXd::Identity(p, p));
  return fit;
}

double wald_multiplier(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

IntervalEstimate oracle_fit(const Dataset& data, std::span<const Eigen::Index> support,
                            double alpha) {
  data.validate();
  if (data.categorical()) throw DomainError("oracle_fit expects a binary treatment");
  Eigen::MatrixXd design(data.n(), 1 + static_cast<Eigen::Index>(support.size()));
  design.col(0) = data.x.cast<double>();
  for (std::size_t k = 0; k < support.size(); ++k) {
    if (support[k] < 0 || support[k] >= data.d()) throw DomainError("support index out of range");
    design.col(static_cast<Eigen::Index>(k) + 1) = data.z.col(support[k]);
  }
  const LogisticFit fit = logistic_mle(design, data.y);
  const double z = wald_multiplier(alpha);
  IntervalEstimate out;
  out.point = fit.coef[0];
  out.se = std::sqrt(fit.cov(0, 0));
  out.lower = out.point - z * out.se;
  out.upper = out.point + z * out.se;
  out.level = 1.0 - alpha;
  return out;
}

double lasso_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& b, double lambda) {
  const double n = static_cast<double>(z.rows());
  return -logistic_loglik(z * b, y) / n + lambda * b.lpNorm<1>();
}

std::vector<double> lasso_grid(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                               const LassoOptions& opts) {
  if (opts.grid_size < 1) throw DomainError("lasso grid needs at least one penalty");
  const double n = static_cast<double>(z.rows());
  const Eigen::VectorXd centered = y.array() - 0.5;
  const double lambda_max =
      z.cols() > 0 ? (z.transpose() * centered).cwiseAbs().maxCoeff() / n : 0.0;
  const double ratio = opts.min_ratio > 0.0 ? opts.min_ratio : (z.rows() < z.cols() ? 0.01 : 1e-4);
  std::vector<double> grid(static_cast<std::size_t>(opts.grid_size));
  if (opts.grid_size == 1) {
    grid[0] = lambda_max;
    return grid;
  }
  for (int k = 0; k < opts.grid_size; ++k) {
    const double t = static_cast<double>(k) / (opts.grid_size - 1);
    grid[static_cast<std::size_t>(k)] = lambda_max * std::pow(ratio, t);
  }
  return grid;
}

Eigen::VectorXd lasso_fit(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double lambda,
                          Eigen::VectorXd start, const LassoOptions& opts) {
  const Eigen::Index n = z.rows();
  const Eigen::Index d = z.cols();
  if (y.size() != n) throw DomainError("lasso_fit: length mismatch");
  if (!(lambda >= 0.0)) throw DomainError("lasso penalty must be non-negative");
  if (start.size() != d) start = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd& b = start;

  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::VectorXd curvature = z.colwise().squaredNorm().transpose() * (0.25 * inv_n);
  Eigen::VectorXd eta = z * b;
  Eigen::VectorXd resid(n);

  // One pass over `coords`; returns the largest weighted squared change.
  auto cycle = [&](const std::vector<Eigen::Index>& coords) {
    double max_change = 0.0;
    for (Eigen::Index j : coords) {
      if (curvature[j] == 0.0) continue;
      for (Eigen::Index i = 0; i < n; ++i) resid[i] = logistic(eta[i]) - y[i];
      const double grad = z.col(j).dot(resid) * inv_n;
      const double u = curvature[j] * b[j] - grad;
      const double next = std::copysign(std::max(std::fabs(u) - lambda, 0.0), u) / curvature[j];
      const double delta = next - b[j];
      if (delta != 0.0) {
        eta += delta * z.col(j);
        b[j] = next;
        max_change = std::max(max_change, curvature[j] * delta * delta);
      }
    }
    if (opts.on_cycle) opts.on_cycle(lasso_objective(z, y, b, lambda));
    return max_change;
  };

  std::vector<Eigen::Index> all(static_cast<std::size_t>(d));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  int cycles = 0;
  while (cycles < opts.max_cycles) {
    ++cycles;
    if (cycle(all) < opts.tol) return b;
    // Iterate on the current active set until it settles, then recheck all.
    const std::vector<Eigen::Index> active = nonzero_indices(b);
    while (cycles < opts.max_cycles) {
      ++cycles;
      if (cycle(active) < opts.tol) break;
    }
  }
  throw Nonconvergence("lasso coordinate descent hit the cycle limit");
}

NaiveResult naive_fit(const Dataset& data, std::span<const double> grid, const LassoOptions& opts,
                      double alpha) {
  if (grid.empty()) throw DomainError("naive_fit needs a nonempty penalty grid");
  data.validate();
  const auto path = lasso_path(data.z, data.y, grid, opts);
  const std::size_t pick = opts.selection == PenaltySelection::cv
                               ? pick_cv(data.z, data.y, grid, opts)
                               : pick_bic(data.z, data.y, path);
  NaiveResult out;
  out.lambda = grid[pick];
  out.selected = nonzero_indices(path[pick]);
  out.interval = oracle_fit(data, out.selected, alpha);
  return out;
}

bool McReport::same_results(const McReport& other) const {
  if (rows.size() != other.rows.size() || replicates.size() != other.replicates.size()) {
    return false;
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    McRow a = rows[k];
    McRow b = other.rows[k];
    a.wall_ms = b.wall_ms = 0.0;
    if (!(a == b)) return false;
  }
  for (std::size_t k = 0; k < replicates.size(); ++k) {
    const auto& a = replicates[k];
    const auto& b = other.replicates[k];
    if (a.cell != b.cell || a.method != b.method || a.rep != b.rep || a.ok != b.ok ||
        a.error != b.error || a.interval.point != b.interval.point ||
        a.interval.se != b.interval.se || a.interval.lower != b.interval.lower ||
        a.interval.upper != b.interval.upper) {
      return false;
    }
  }
  return true;
}

std::uint64_t replicate_stream(std::size_t cell, int rep, unsigned purpose) {
  return (static_cast<std::uint64_t>(cell) << 40) ^
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(rep)) << 8) ^ (purpose & 0xffu);
}

McReport run_mc(std::span<const DgpConfig> cfgs, const McOptions& opts) {
  if (opts.reps < 1) throw DomainError("reps must be at least 1");
  if (opts.methods.empty()) throw DomainError("no methods requested");
  opts.chain.validate();
  opts.theta_prior.validate();
  for (const auto& c : cfgs) c.validate();

  std::vector<SpikeSlabPrior> spike_slab;
  for (const auto& c : cfgs) spike_slab.push_back(derive_spike_slab(c.n, c.d));

  const std::size_t n_methods = opts.methods.size();
  const std::size_t tasks = cfgs.size() * static_cast<std::size_t>(opts.reps);
  std::vector<ReplicateResult> results(tasks * n_methods);

  auto run_task = [&](std::size_t task) {
    const std::size_t cell = task / static_cast<std::size_t>(opts.reps);
    const int rep = static_cast<int>(task % static_cast<std::size_t>(opts.reps));
    const DgpConfig& cfg = cfgs[cell];
    RngStream dgp_rng(cfg.seed, replicate_stream(cell, rep, 0));
    const Dataset data = gen_dataset(cfg, dgp_rng);
    for (std::size_t m = 0; m < n_methods; ++m) {
      ReplicateResult& r = results[task * n_methods + m];
      r.cell = cell;
      r.rep = rep;
      r.method = opts.methods[m];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        switch (r.method) {
          case Method::cb: {
            ChainConfig chain = opts.chain;
            chain.seed = cfg.seed;
            chain.stream_id = replicate_stream(cell, rep, 1);
            const auto draws = run_chain(data, Priors{spike_slab[cell], opts.theta_prior}, chain);
            r.interval = summarize(draws, opts.alpha);
            break;
          }
          case Method::oracle: {
            const auto support = cfg.support();
            r.interval = oracle_fit(data, support, opts.alpha);
            break;
          }
          case Method::naive: {
            LassoOptions lasso = opts.lasso;
            lasso.fold_seed = cfg.seed;
            lasso.fold_stream = replicate_stream(cell, rep, 2);
            const auto grid = lasso_grid(data.z, data.y, lasso);
            r.interval = naive_fit(data, grid, lasso, opts.alpha).interval;
            break;
          }
        }
        r.ok = true;
      } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
      }
      r.wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
  };

  std::atomic<std::size_t> next{0};
  std::atomic<int> done{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      run_task(t);
      const int finished = ++done;
      if (opts.progress) opts.progress(finished, static_cast<int>(tasks));
    }
  };
  const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(tasks)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  McReport report;
  report.replicates = results;
  for (std::size_t cell = 0; cell < cfgs.size(); ++cell) {
    for (std::size_t m = 0; m < n_methods; ++m) {
      std::vector<IntervalEstimate> intervals;
      std::vector<double> points;
      long failures = 0;
      double wall = 0.0;
      for (int rep = 0; rep < opts.reps; ++rep) {
        const auto& r =
            results[(cell * static_cast<std::size_t>(opts.reps) + static_cast<std::size_t>(rep)) *
                        n_methods +
                    m];
        wall += r.wall_ms;
        if (r.ok) {
          intervals.push_back(r.interval);
          points.push_back(r.interval.point);
        } else {
          ++failures;
        }
      }
      McRow row;
      if (!intervals.empty()) {
        row = coverage_stats(intervals, points, cfgs[cell].theta0);
      } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.theta0 = cfgs[cell].theta0;
        row.coverage = row.mc_se = row.length = row.bias = row.signed_bias = nan;
        row.reps = 0;
      }
      row.method = std::string(method_name(opts.methods[m]));
      row.n = static_cast<long>(cfgs[cell].n);
      row.d = static_cast<long>(cfgs[cell].d);
      row.failures = failures;
      row.wall_ms = wall;
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace orthobayes
