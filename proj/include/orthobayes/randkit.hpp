#pragma once

#include <array>
#include <cstdint>
#include <limits>

#include <Eigen/Dense>

namespace orthobayes {

/// Philox4x32-10 counter-based block function (Salmon et al., 2011).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// A deterministic random stream keyed by (seed, stream_id).
///
/// The seed is the Philox key; the stream id occupies the upper half of the
/// 128-bit counter and the draw position the lower half, so distinct stream
/// ids never share a counter block. Streams are move-only: copying one would
/// silently duplicate a random sequence.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  RngStream(const RngStream&) = delete;
  RngStream& operator=(const RngStream&) = delete;
  RngStream(RngStream&&) noexcept = default;
  RngStream& operator=(RngStream&&) noexcept = default;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  double normal();
  double exponential();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  /// Number of Philox blocks consumed so far.
  std::uint64_t counter() const { return counter_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_normal_ = false;
};

/// One exact draw from PG(1, c). Uses |c| internally, so pg_draw(rng, c) and
/// pg_draw(rng, -c) consume the stream identically.
double pg_draw(RngStream& rng, double c);

/// Mean of PG(1, c): tanh(c/2) / (2c), with the c -> 0 limit 1/4.
double pg_mean(double c);

/// Draw from N(mean, precision^{-1}) via a Cholesky factor of the precision.
/// Throws FactorizationFailure if the precision is not numerically positive
/// definite.
Eigen::VectorXd mvn_draw(RngStream& rng, const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& precision);

/// Draw from N(precision^{-1} linear, precision^{-1}) (canonical form).
Eigen::VectorXd mvn_draw_canonical(RngStream& rng, const Eigen::VectorXd& linear,
                                   const Eigen::MatrixXd& precision);

/// Gaussian with a diagonal prior and a low-rank data term:
///   precision = phi^T phi + diag(prior_var)^{-1},  linear = phi^T alpha.
///
/// Sampled without forming the p x p precision (Bhattacharya, Chakraborty and
/// Mallick, 2016): only an n x n system I + phi diag(prior_var) phi^T is
/// factored. `phi_gram` must hold phi diag(prior_var) phi^T.
struct LowRankGaussian {
  Eigen::MatrixXd phi;        // n x p
  Eigen::VectorXd prior_var;  // p
  Eigen::VectorXd alpha;      // n
  Eigen::MatrixXd phi_gram;   // n x n
};

Eigen::VectorXd mvn_draw_low_rank(RngStream& rng, const LowRankGaussian& g);

/// The same draw with phi = diag(row_scale) design, for callers that keep
/// the capacitance I + phi diag(prior_var) phi^T themselves. Only the lower
/// triangle of `capacitance` is read, and it is overwritten by its Cholesky
/// factor. Consumes the stream exactly like the struct form.
Eigen::VectorXd mvn_draw_low_rank(RngStream& rng, const Eigen::MatrixXd& design,
                                  const Eigen::VectorXd& row_scale,
                                  const Eigen::VectorXd& prior_var, const Eigen::VectorXd& alpha,
                                  Eigen::MatrixXd& capacitance);

/// Posterior mean of a LowRankGaussian via the Woodbury identity.
Eigen::VectorXd low_rank_mean(const LowRankGaussian& g);

/// 1 with probability p. Throws DomainError if p is outside [0, 1].
int bernoulli_draw(RngStream& rng, double p);

}  // namespace orthobayes
