#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cohortcal/random.hpp"

namespace cohortcal {

// Unnormalized log posterior split into the survey likelihood and everything
// else (priors, Jacobian).
struct TargetValue {
  double likelihood = 0.0;
  double prior = 0.0;
  double total() const { return likelihood + prior; }
};

// Evaluation is stateful (caches), so every chain owns a clone.
class LogTarget {
 public:
  virtual ~LogTarget() = default;
  virtual Eigen::Index dim() const = 0;
  // May throw SolveError; the sampler treats that as a rejected proposal.
  virtual TargetValue evaluate(const Eigen::VectorXd& theta) = 0;
  // The non-likelihood part only; used by likelihood-free blocks.
  virtual double prior_term(const Eigen::VectorXd& theta) = 0;
  virtual std::unique_ptr<LogTarget> clone() const = 0;
};

class FunctionTarget : public LogTarget {
 public:
  using Fn = std::function<double(const Eigen::VectorXd&)>;
  FunctionTarget(Eigen::Index dim, Fn likelihood, Fn prior = {})
      : dim_(dim), likelihood_(std::move(likelihood)), prior_(std::move(prior)) {}

  Eigen::Index dim() const override { return dim_; }
  TargetValue evaluate(const Eigen::VectorXd& theta) override;
  double prior_term(const Eigen::VectorXd& theta) override { return prior_ ? prior_(theta) : 0.0; }
  std::unique_ptr<LogTarget> clone() const override { return std::make_unique<FunctionTarget>(*this); }
  long likelihood_calls() const { return calls_; }

 private:
  Eigen::Index dim_;
  Fn likelihood_, prior_;
  long calls_ = 0;
};

struct Block {
  std::string name;
  std::vector<Eigen::Index> indices;
  Eigen::MatrixXd covariance;
  double scale = 1.0;
  bool likelihood_free = false;  // acceptance ratio needs only prior_term
};

// Throws ValidationError unless the blocks partition [0, dim) and every
// covariance is SPD with the right shape.
void validate_blocks(std::span<const Block> blocks, Eigen::Index dim);

// A block's jump distribution N(0, scale * covariance), factored once.
struct JumpKernel {
  std::vector<Eigen::Index> indices;
  Eigen::MatrixXd lower;
  bool likelihood_free = false;

  static JumpKernel from(const Block& b);
  static JumpKernel from(const Block& b, const Eigen::MatrixXd& covariance, double scale);
};

struct ChainState {
  Eigen::VectorXd theta;
  TargetValue value;
};

struct StepOutcome {
  bool accepted = false;
  bool failed = false;  // proposal raised SolveError
};

StepOutcome metropolis_step(ChainState& state, const JumpKernel& jump, LogTarget& target, RandomStream& rng);

// One Metropolis update per kernel, in order. Adds to accepted[b] and
// failures when given.
void gibbs_sweep(ChainState& state, std::span<const JumpKernel> kernels, LogTarget& target, RandomStream& rng,
                 std::span<long> accepted = {}, long* failures = nullptr);

// Split-R-hat; +infinity when the within-chain variance is zero.
double rhat(const std::vector<std::vector<double>>& chains);
// Multi-chain effective sample size (variogram autocorrelation, Geyer's
// initial monotone sequence). 0 for constant chains.
double ess_mcmc(const std::vector<std::vector<double>>& chains);

Eigen::VectorXd overdispersed_init(const Eigen::VectorXd& center, const Eigen::MatrixXd& covariance, double factor,
                                   RandomStream& rng);

std::vector<long> cull_indices(long length, int per_chain);

struct SamplerConfig {
  int chains = 5;
  int sub_interval = 10;      // Delta_n
  int tail_intervals = 80;    // b
  double target_rate = 0.234;
  double rhat_threshold = 1.3;
  int max_sub_intervals = 2000;
  double beta_step = 1.1;
  double ess_target = 50.0;
  int ess_check_every = 50;
  long max_post_iterations = 200000;
  int cull_per_chain = 40;
  double overdispersion = 5.0;
  std::uint64_t seed = 1;
  int workers = 1;
  std::function<void(const std::string&)> progress;  // status lines, optional

  void validate() const;
};

// State of each block's adaptation at the end of sub-interval k.
struct AdaptationStep {
  int interval = 0;
  std::vector<double> beta;
  std::vector<double> acceptance;
  std::vector<Eigen::MatrixXd> psi;
  std::vector<Eigen::MatrixXd> sample_cov;
  double max_rhat = 0.0;  // 0 before the tail window fills
};

struct Diagnostics {
  std::vector<double> rhat;
  std::vector<double> ess;
  double max_rhat() const;
  double min_ess() const;
};

struct ChainSet {
  Eigen::Index dim = 0;
  std::vector<std::vector<double>> draws;       // per chain, iteration-major
  std::vector<std::vector<double>> log_target;  // per chain
  long burn_in = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> chain_streams;
  std::vector<AdaptationStep> adaptation;
  std::vector<Block> final_blocks;
  std::vector<double> post_acceptance;  // per block
  long solve_failures = 0;
  Diagnostics burn_in_diagnostics;  // over the last b sub-intervals
  Diagnostics diagnostics;          // over the post-burn-in draws

  int chains() const { return static_cast<int>(draws.size()); }
  long length() const { return draws.empty() ? 0 : static_cast<long>(draws[0].size()) / dim; }
  long post_length() const { return length() - burn_in; }
  Eigen::Map<const Eigen::VectorXd> draw(int chain, long iteration) const;
  // draws [from, to) of one component, per chain
  std::vector<std::vector<double>> component(Eigen::Index i, long from, long to) const;
  Diagnostics diagnose(long from, long to) const;
};

// Evenly spaced post-burn-in draws, chain by chain.
std::vector<Eigen::VectorXd> cull(const ChainSet& chains, int per_chain);

// Adaptive Metropolis-within-Gibbs: modified burn-in, then sampling with
// fixed jumps until every component reaches the ESS target. Throws
// NonConvergenceError with the adaptation trace when a phase runs out of
// budget.
ChainSet run_sampler(const LogTarget& target, std::vector<Block> blocks, const std::vector<Eigen::VectorXd>& starts,
                     const SamplerConfig& config);

// Pooled mean-centred covariance of draws [from, to) over all chains.
Eigen::MatrixXd pooled_covariance(const ChainSet& chains, std::span<const Eigen::Index> indices, long from, long to);

}  // namespace cohortcal
