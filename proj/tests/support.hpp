#pragma once

// Oracles and small statistics helpers shared by the test binaries. Nothing
// here calls into the library's own formulas, so agreement is evidence.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace obtest {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // unbiased
  double m4 = 0.0;   // fourth central moment
  std::size_t n = 0;

  double sd() const { return std::sqrt(var); }
  double se_mean() const { return std::sqrt(var / static_cast<double>(n)); }
  /// Large-sample standard error of the sample variance.
  double se_var() const { return std::sqrt((m4 - var * var) / static_cast<double>(n)); }
};

inline Moments moments(std::span<const double> x) {
  Moments m;
  m.n = x.size();
  long double s = 0.0L;
  for (double v : x) s += v;
  m.mean = static_cast<double>(s / static_cast<long double>(x.size()));
  long double s2 = 0.0L;
  long double s4 = 0.0L;
  for (double v : x) {
    const long double d = v - m.mean;
    s2 += d * d;
    s4 += d * d * d * d;
  }
  m.var = static_cast<double>(s2 / static_cast<long double>(x.size() - 1));
  m.m4 = static_cast<double>(s4 / static_cast<long double>(x.size()));
  return m;
}

/// PG(1, c) mean from the infinite-convolution representation
///   omega = (1 / 2 pi^2) sum_k g_k / ((k - 1/2)^2 + c^2 / (4 pi^2)),  g_k ~ Exp(1),
/// truncated at `terms` with the integral tail added.
inline double pg_series_mean(double c, long terms = 2000000) {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double a = c * c / (4.0 * pi2);
  long double s = 0.0L;
  for (long k = terms; k >= 1; --k) {
    const long double h = static_cast<long double>(k) - 0.5L;
    s += 1.0L / (h * h + a);
  }
  s += 1.0L / static_cast<long double>(terms);  // tail ~ integral of 1/x^2
  return static_cast<double>(s / (2.0L * pi2));
}

/// PG(1, c) variance from the same representation (Var g_k = 1).
inline double pg_series_var(double c, long terms = 200000) {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double a = c * c / (4.0 * pi2);
  long double s = 0.0L;
  for (long k = terms; k >= 1; --k) {
    const long double h = static_cast<long double>(k) - 0.5L;
    const long double t = 1.0L / (h * h + a);
    s += t * t;
  }
  return static_cast<double>(s / (4.0L * pi2 * pi2));
}

struct Posterior1d {
  double mean = 0.0;
  double sd = 0.0;
};

/// Mean and sd of the density proportional to
///   prod_i p_i^{y_i} (1 - p_i)^{1 - y_i} exp(-theta^2 / (2 lambda)),
///   p_i = 1 / (1 + exp(-(theta xt_i + phi_i))),
/// by adaptive Gauss-Kronrod quadrature around the mode.
inline Posterior1d theta_posterior_quadrature(const Eigen::VectorXd& y, const Eigen::VectorXd& xt,
                                              const Eigen::VectorXd& phi, double lambda) {
  auto log_density = [&](double t) {
    double s = -t * t / (2.0 * lambda);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double eta = t * xt[i] + phi[i];
      const double log1pexp = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
      s += y[i] * eta - log1pexp;
    }
    return s;
  };
  // Mode by repeated grid refinement.
  double lo = -50.0;
  double hi = 50.0;
  for (int pass = 0; pass < 4; ++pass) {
    double best = lo;
    double best_v = -INFINITY;
    const int steps = 400;
    for (int k = 0; k <= steps; ++k) {
      const double t = lo + (hi - lo) * k / steps;
      const double v = log_density(t);
      if (v > best_v) {
        best_v = v;
        best = t;
      }
    }
    const double w = (hi - lo) / steps;
    lo = best - 2 * w;
    hi = best + 2 * w;
  }
  const double mode = 0.5 * (lo + hi);
  const double peak = log_density(mode);
  auto dens = [&](double t) { return std::exp(log_density(t) - peak); };
  using boost::math::quadrature::gauss_kronrod;
  const double step = 1e-3;
  const double curv =
      -(log_density(mode + step) - 2.0 * peak + log_density(mode - step)) / (step * step);
  const double scale = 1.0 / std::sqrt(std::max(curv, 1e-6));
  const double a = mode - 30.0 * scale;
  const double b = mode + 30.0 * scale;
  const double z = gauss_kronrod<double, 61>::integrate(dens, a, b, 20, 1e-13);
  const double m1 =
      gauss_kronrod<double, 61>::integrate([&](double t) { return t * dens(t); }, a, b, 20, 1e-13) / z;
  const double m2 = gauss_kronrod<double, 61>::integrate(
                        [&](double t) { return (t - m1) * (t - m1) * dens(t); }, a, b, 20, 1e-13) /
                    z;
  return {m1, std::sqrt(m2)};
}

/// N(0, var) density at x.
inline double normal_pdf(double x, double var) {
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

/// Empirical covariance of draws stored as rows.
inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& draws) {
  const Eigen::RowVectorXd mu = draws.colwise().mean();
  const Eigen::MatrixXd c = draws.rowwise() - mu;
  return c.transpose() * c / static_cast<double>(draws.rows() - 1);
}

}  // namespace obtest
