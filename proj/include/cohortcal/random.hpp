#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace cohortcal {

std::uint64_t splitmix64(std::uint64_t x);

// One reproducible random stream. Streams for different purposes (chains,
// adaptation, synthesis) are derived from a master seed so results do not
// depend on scheduling.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}
  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_id);
  static RandomStream derive(std::uint64_t master, std::uint64_t stream_id) {
    return RandomStream(derive_seed(master, stream_id));
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return normal_(engine_); }
  double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }
  double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

  Eigen::VectorXd normal_vector(Eigen::Index n);
  // mean + L z with L the Cholesky factor of `covariance`.
  Eigen::VectorXd multivariate_normal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance);
  // Sigma ~ W^{-1}(psi, df) via the Bartlett decomposition of Sigma^{-1}.
  Eigen::MatrixXd inverse_wishart(const Eigen::MatrixXd& psi, double df);
  std::vector<double> dirichlet(const std::vector<double>& alpha);
  std::vector<double> multinomial(long n, const std::vector<double>& probs);
  long binomial(long n, double p) { return std::binomial_distribution<long>(n, p)(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace cohortcal
