#include "orthobayes/randkit.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "orthobayes/error.hpp"

namespace orthobayes {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

constexpr double kPi = std::numbers::pi;
constexpr double kPiSq = kPi * kPi;
// Truncation point splitting the left (inverse-Gaussian) and right
// (exponential) proposals of the J*(1, z) sampler.
constexpr double kTrunc = 0.64;

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Coefficient a_n(x) of the alternating series for the J*(1, 0) density.
double series_coef(int n, double x) {
  const double k = n + 0.5;
  if (x <= kTrunc) {
    return kPi * k * std::pow(2.0 / (kPi * x), 1.5) * std::exp(-2.0 * k * k / x);
  }
  return kPi * k * std::exp(-k * k * kPiSq * x / 2.0);
}

// Inverse-Gaussian IG(mu, 1) truncated to (0, kTrunc).
double truncated_inverse_gaussian(RngStream& rng, double z) {
  const double mu = (z > 0.0) ? 1.0 / z : std::numeric_limits<double>::infinity();
  if (mu > kTrunc) {
    // 1 / chi-square(1) restricted to (0, t), tilted by exp(-z^2 x / 2).
    for (;;) {
      double e1 = 0.0;
      double e2 = 0.0;
      do {
        e1 = rng.exponential();
        e2 = rng.exponential();
      } while (e1 * e1 > 2.0 * e2 / kTrunc);
      const double denom = 1.0 + kTrunc * e1;
      const double x = kTrunc / (denom * denom);
      if (rng.uniform() <= std::exp(-0.5 * z * z * x)) return x;
    }
  }
  for (;;) {
    const double nu = rng.normal();
    const double y = nu * nu;
    double x = mu + 0.5 * mu * mu * y - 0.5 * mu * std::sqrt(4.0 * mu * y + mu * mu * y * y);
    if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    if (x < kTrunc) return x;
  }
}

// Exact J*(1, z) draw, z >= 0 (Devroye's alternating series method as
// adapted by Polson, Scott and Windle, 2013).
double draw_jstar(RngStream& rng, double z) {
  const double k = kPiSq / 8.0 + 0.5 * z * z;
  const double p = kPi / (2.0 * k) * std::exp(-k * kTrunc);
  const double root_inv_t = 1.0 / std::sqrt(kTrunc);
  // 2 exp(-z) * P(IG(1/z, 1) < t); the second term is folded into one
  // exponential so that exp(2z) cannot overflow.
  const double q = 2.0 * (std::exp(-z) * std_normal_cdf(root_inv_t * (kTrunc * z - 1.0)) +
                          std::exp(z + std::log(std_normal_cdf(-root_inv_t * (kTrunc * z + 1.0)))));
  const double right_prob = p / (p + q);

  for (;;) {
    const double x = (rng.uniform() < right_prob) ? kTrunc + rng.exponential() / k
                                                  : truncated_inverse_gaussian(rng, z);
    double s = series_coef(0, x);
    const double y = rng.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= series_coef(n, x);
        if (y <= s) return x;
      } else {
        s += series_coef(n, x);
        if (y > s) break;
      }
    }
  }
}

void require_square(const Eigen::MatrixXd& m, Eigen::Index dim, const char* what) {
  if (m.rows() != dim || m.cols() != dim) {
    throw DomainError(std::string(what) + ": dimension mismatch");
  }
}

Eigen::LLT<Eigen::MatrixXd> factor_precision(const Eigen::MatrixXd& precision) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw FactorizationFailure("precision matrix is not positive definite");
  }
  const auto diag = llt.matrixLLT().diagonal();
  if (!diag.allFinite() || (diag.array() <= 0.0).any()) {
    throw FactorizationFailure("precision matrix is numerically indefinite");
  }
  return llt;
}

Eigen::VectorXd std_normal_vector(RngStream& rng, Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  return z;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {}

void RngStream::refill() {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
      static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
  const auto out = philox4x32_10(ctr, key);
  buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  buffered_ = 2;
  ++counter_;
}

RngStream::result_type RngStream::operator()() {
  if (buffered_ == 0) refill();
  return buffer_[2 - buffered_--];
}

double RngStream::uniform() {
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double scale = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * scale;
  has_spare_normal_ = true;
  return u * scale;
}

double RngStream::exponential() { return -std::log(uniform()); }

double pg_draw(RngStream& rng, double c) {
  // PG(1, c) = J*(1, |c|/2) / 4.
  return 0.25 * draw_jstar(rng, 0.5 * std::fabs(c));
}

double pg_mean(double c) {
  const double a = std::fabs(c);
  if (a < 1e-6) return 0.25 - a * a / 48.0;
  return std::tanh(a / 2.0) / (2.0 * a);
}

Eigen::VectorXd mvn_draw(RngStream& rng, const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& precision) {
  require_square(precision, mean.size(), "mvn_draw");
  const auto llt = factor_precision(precision);
  Eigen::VectorXd z = std_normal_vector(rng, mean.size());
  llt.matrixU().solveInPlace(z);
  return mean + z;
}

Eigen::VectorXd mvn_draw_canonical(RngStream& rng, const Eigen::VectorXd& linear,
                                   const Eigen::MatrixXd& precision) {
  require_square(precision, linear.size(), "mvn_draw_canonical");
  const auto llt = factor_precision(precision);
  Eigen::VectorXd w = llt.matrixL().solve(linear);
  w += std_normal_vector(rng, linear.size());
  llt.matrixU().solveInPlace(w);
  return w;
}

namespace {

void check_low_rank(const LowRankGaussian& g) {
  const auto n = g.phi.rows();
  const auto p = g.phi.cols();
  if (g.prior_var.size() != p || g.alpha.size() != n || g.phi_gram.rows() != n ||
      g.phi_gram.cols() != n) {
    throw DomainError("mvn_draw_low_rank: dimension mismatch");
  }
  if ((g.prior_var.array() <= 0.0).any()) {
    throw DomainError("mvn_draw_low_rank: prior variances must be positive");
  }
}

Eigen::LLT<Eigen::MatrixXd> factor_capacitance(const LowRankGaussian& g) {
  Eigen::MatrixXd cap = g.phi_gram;
  cap.diagonal().array() += 1.0;
  return factor_precision(cap);
}

}  // namespace

Eigen::VectorXd mvn_draw_low_rank(RngStream& rng, const LowRankGaussian& g) {
  check_low_rank(g);
  Eigen::MatrixXd cap = g.phi_gram;
  cap.diagonal().array() += 1.0;
  return mvn_draw_low_rank(rng, g.phi, Eigen::VectorXd::Ones(g.phi.rows()), g.prior_var, g.alpha,
                           cap);
}

Eigen::VectorXd mvn_draw_low_rank(RngStream& rng, const Eigen::MatrixXd& design,
                                  const Eigen::VectorXd& row_scale,
                                  const Eigen::VectorXd& prior_var, const Eigen::VectorXd& alpha,
                                  Eigen::MatrixXd& capacitance) {
  const auto n = design.rows();
  const auto p = design.cols();
  if (row_scale.size() != n || prior_var.size() != p || alpha.size() != n ||
      capacitance.rows() != n || capacitance.cols() != n) {
    throw DomainError("mvn_draw_low_rank: dimension mismatch");
  }
  if ((prior_var.array() <= 0.0).any()) {
    throw DomainError("mvn_draw_low_rank: prior variances must be positive");
  }
  Eigen::VectorXd u(p);
  for (Eigen::Index j = 0; j < p; ++j) u[j] = std::sqrt(prior_var[j]) * rng.normal();
  Eigen::VectorXd rhs = alpha - row_scale.cwiseProduct(design * u);
  for (Eigen::Index i = 0; i < n; ++i) rhs[i] -= rng.normal();
  if (n == 0) return u;
  Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(capacitance);
  if (llt.info() != Eigen::Success || !capacitance.diagonal().allFinite() ||
      (capacitance.diagonal().array() <= 0.0).any()) {
    throw FactorizationFailure("capacitance matrix is not positive definite");
  }
  llt.solveInPlace(rhs);
  rhs.array() *= row_scale.array();
  return u + prior_var.cwiseProduct(design.transpose() * rhs);
}

Eigen::VectorXd low_rank_mean(const LowRankGaussian& g) {
  check_low_rank(g);
  if (g.phi.rows() == 0) return Eigen::VectorXd::Zero(g.phi.cols());
  const auto llt = factor_capacitance(g);
  const Eigen::VectorXd w = llt.solve(g.alpha);
  return g.prior_var.cwiseProduct(g.phi.transpose() * w);
}

int bernoulli_draw(RngStream& rng, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError("bernoulli_draw: probability " + std::to_string(p) + " outside [0,1]");
  }
  return rng.uniform() < p ? 1 : 0;
}

}  // namespace orthobayes
