#include "cohortcal/random.hpp"

#include <algorithm>
#include <cmath>

#include "cohortcal/errors.hpp"

namespace cohortcal {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t RandomStream::derive_seed(std::uint64_t master, std::uint64_t stream_id) {
  return splitmix64(splitmix64(master) + 0x9E3779B97F4A7C15ULL * (stream_id + 1));
}

Eigen::VectorXd RandomStream::normal_vector(Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
  return z;
}

Eigen::VectorXd RandomStream::multivariate_normal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance) {
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw ValidationError("covariance is not symmetric positive definite");
  return mean + llt.matrixL() * normal_vector(mean.size());
}

Eigen::MatrixXd RandomStream::inverse_wishart(const Eigen::MatrixXd& psi, double df) {
  const Eigen::Index d = psi.rows();
  if (!(df > d - 1)) throw ValidationError("inverse-Wishart degrees of freedom too small");
  Eigen::LLT<Eigen::MatrixXd> psi_llt(psi);
  if (psi_llt.info() != Eigen::Success) throw ValidationError("inverse-Wishart scale is not positive definite");
  const Eigen::MatrixXd psi_inv = psi_llt.solve(Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(psi_inv).matrixL();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    A(i, i) = std::sqrt(chi_squared(df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = normal();
  }
  const Eigen::MatrixXd M = L * A;  // lower triangular, W = M M'
  const Eigen::MatrixXd M_inv =
      M.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::MatrixXd sigma = M_inv.transpose() * M_inv;
  return 0.5 * (sigma + sigma.transpose());
}

std::vector<double> RandomStream::dirichlet(const std::vector<double>& alpha) {
  std::vector<double> x(alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) total += x[i] = alpha[i] > 0 ? gamma(alpha[i]) : 0.0;
  if (!(total > 0)) {
    std::fill(x.begin(), x.end(), 0.0);
    x[std::max_element(alpha.begin(), alpha.end()) - alpha.begin()] = 1.0;
    return x;
  }
  for (double& v : x) v /= total;
  return x;
}

std::vector<double> RandomStream::multinomial(long n, const std::vector<double>& probs) {
  std::vector<double> counts(probs.size(), 0.0);
  double remaining_p = 1.0;
  long remaining = n;
  for (std::size_t i = 0; i + 1 < probs.size() && remaining > 0; ++i) {
    const double p = remaining_p > 0 ? std::clamp(probs[i] / remaining_p, 0.0, 1.0) : 0.0;
    const long k = binomial(remaining, p);
    counts[i] = static_cast<double>(k);
    remaining -= k;
    remaining_p -= probs[i];
  }
  if (!probs.empty()) counts.back() += static_cast<double>(remaining);
  return counts;
}

}  // namespace cohortcal
