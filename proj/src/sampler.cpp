#include "cohortcal/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "cohortcal/errors.hpp"
#include "cohortcal/numerics.hpp"

namespace cohortcal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

template <class F>
void for_each_chain(int chains, int workers, F&& f) {
  if (workers <= 1 || chains <= 1) {
    for (int c = 0; c < chains; ++c) f(c);
    return;
  }
  const int n = std::min(workers, chains);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> pool;
  for (int t = 0; t < n; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int c = t; c < chains; c += n) f(c);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

TargetValue FunctionTarget::evaluate(const Eigen::VectorXd& theta) {
  TargetValue v;
  v.prior = prior_term(theta);
  if (!std::isfinite(v.prior)) return v;
  ++calls_;
  v.likelihood = likelihood_(theta);
  return v;
}

void validate_blocks(std::span<const Block> blocks, Eigen::Index dim) {
  std::vector<int> seen(static_cast<std::size_t>(dim), 0);
  for (const Block& b : blocks) {
    const auto d = static_cast<Eigen::Index>(b.indices.size());
    if (d == 0) throw ValidationError("block '" + b.name + "' is empty");
    if (b.covariance.rows() != d || b.covariance.cols() != d)
      throw ValidationError("block '" + b.name + "' covariance has the wrong shape");
    if (!(b.scale > 0)) throw ValidationError("block '" + b.name + "' scale must be positive");
    if (Eigen::LLT<Eigen::MatrixXd>(b.covariance).info() != Eigen::Success)
      throw ValidationError("block '" + b.name + "' covariance is not positive definite");
    for (Eigen::Index i : b.indices) {
      if (i < 0 || i >= dim) throw ValidationError("block '" + b.name + "' index out of range");
      ++seen[static_cast<std::size_t>(i)];
    }
  }
  for (int s : seen)
    if (s != 1) throw ValidationError("blocks do not partition the parameter vector");
}

JumpKernel JumpKernel::from(const Block& b) { return from(b, b.covariance, b.scale); }

JumpKernel JumpKernel::from(const Block& b, const Eigen::MatrixXd& covariance, double scale) {
  Eigen::LLT<Eigen::MatrixXd> llt(scale * symmetrize(covariance));
  if (llt.info() != Eigen::Success)
    throw ValidationError("jump covariance of block '" + b.name + "' is not positive definite");
  return {b.indices, llt.matrixL(), b.likelihood_free};
}

StepOutcome metropolis_step(ChainState& state, const JumpKernel& jump, LogTarget& target, RandomStream& rng) {
  const Eigen::VectorXd z = jump.lower * rng.normal_vector(jump.lower.rows());
  Eigen::VectorXd proposal = state.theta;
  for (std::size_t k = 0; k < jump.indices.size(); ++k) proposal[jump.indices[k]] += z[static_cast<Eigen::Index>(k)];
  StepOutcome out;
  TargetValue value;
  if (jump.likelihood_free) {
    value = {state.value.likelihood, target.prior_term(proposal)};
  } else {
    try {
      value = target.evaluate(proposal);
    } catch (const SolveError&) {
      out.failed = true;
    }
  }
  const double u = rng.uniform();
  if (out.failed || !std::isfinite(value.total())) return out;
  if (std::log(u) < value.total() - state.value.total()) {
    state.theta = std::move(proposal);
    state.value = value;
    out.accepted = true;
  }
  return out;
}

void gibbs_sweep(ChainState& state, std::span<const JumpKernel> kernels, LogTarget& target, RandomStream& rng,
                 std::span<long> accepted, long* failures) {
  for (std::size_t b = 0; b < kernels.size(); ++b) {
    const StepOutcome o = metropolis_step(state, kernels[b], target, rng);
    if (o.accepted && !accepted.empty()) ++accepted[b];
    if (o.failed && failures) ++*failures;
  }
}

double rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw ValidationError("R-hat needs at least two chains");
  std::size_t len = chains[0].size();
  for (const auto& c : chains) len = std::min(len, c.size());
  if (len < 4) throw ValidationError("R-hat needs at least four draws per chain");
  const std::size_t n = len / 2;
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    const std::size_t start = c.size() - 2 * n;
    for (int h = 0; h < 2; ++h) {
      const auto first = c.begin() + static_cast<long>(start + h * n);
      const double mean = std::accumulate(first, first + static_cast<long>(n), 0.0) / n;
      double ss = 0.0;
      for (auto it = first; it != first + static_cast<long>(n); ++it) ss += (*it - mean) * (*it - mean);
      means.push_back(mean);
      vars.push_back(ss / (n - 1));
    }
  }
  const double M = static_cast<double>(means.size());
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / M;
  double B = 0.0;
  for (double m : means) B += (m - grand) * (m - grand);
  B *= static_cast<double>(n) / (M - 1);
  const double W = std::accumulate(vars.begin(), vars.end(), 0.0) / M;
  if (!(W > 0)) return kInf;
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

double ess_mcmc(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw ValidationError("ESS of no chains");
  std::size_t len = chains[0].size();
  for (const auto& c : chains) len = std::min(len, c.size());
  if (len * chains.size() < 10) throw ValidationError("ESS needs at least ten draws");
  const std::size_t m = chains.size();
  std::vector<double> means(m), vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto first = chains[j].end() - static_cast<long>(len);
    means[j] = std::accumulate(first, chains[j].end(), 0.0) / len;
    double ss = 0.0;
    for (auto it = first; it != chains[j].end(); ++it) ss += (*it - means[j]) * (*it - means[j]);
    vars[j] = len > 1 ? ss / (len - 1) : 0.0;
  }
  const double n = static_cast<double>(len);
  const double W = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double B = 0.0;
  if (m > 1) {
    for (double mu : means) B += (mu - grand) * (mu - grand);
    B *= n / (m - 1.0);
  }
  const double var_plus = (n - 1.0) / n * W + B / n;
  if (!(var_plus > 0)) return 0.0;
  auto rho = [&](std::size_t t) {
    double v = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double* x = chains[j].data() + (chains[j].size() - len);
      for (std::size_t i = t; i < len; ++i) v += (x[i] - x[i - t]) * (x[i] - x[i - t]);
    }
    v /= static_cast<double>(m) * static_cast<double>(len - t);
    return 1.0 - v / (2.0 * var_plus);
  };
  double sum = 0.0;
  double prev = kInf;
  for (std::size_t k = 0; 2 * k + 1 < len; ++k) {
    double pair = (k == 0 ? 1.0 : rho(2 * k)) + rho(2 * k + 1);
    if (pair < 0) break;
    pair = std::min(pair, prev);
    prev = pair;
    sum += pair;
  }
  const double total = n * static_cast<double>(m);
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(std::max(total, 10.0)));
  return total / tau;
}

Eigen::VectorXd overdispersed_init(const Eigen::VectorXd& center, const Eigen::MatrixXd& covariance, double factor,
                                   RandomStream& rng) {
  if (!(factor >= 0)) throw ValidationError("overdispersion factor must be non-negative");
  if (covariance.rows() != center.size() || covariance.cols() != center.size())
    throw ValidationError("overdispersed start covariance has the wrong shape");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw ValidationError("start covariance is not positive definite");
  if (factor == 0) return center;
  const Eigen::VectorXd z = llt.matrixL() * rng.normal_vector(center.size());
  return center + std::sqrt(factor) * z;
}

std::vector<long> cull_indices(long length, int per_chain) {
  if (per_chain < 1) throw ValidationError("cull size must be positive");
  if (length < per_chain)
    throw ValidationError("chain of length " + std::to_string(length) + " is shorter than the cull size " +
                          std::to_string(per_chain));
  if (per_chain == 1) return {length - 1};
  std::vector<long> idx(static_cast<std::size_t>(per_chain));
  for (int i = 0; i < per_chain; ++i)
    idx[static_cast<std::size_t>(i)] = std::lround(static_cast<double>(i) * (length - 1) / (per_chain - 1));
  return idx;
}

void SamplerConfig::validate() const {
  if (chains < 2) throw ValidationError("sampler needs at least two chains");
  if (sub_interval < 2 || tail_intervals < 1 || max_sub_intervals < tail_intervals)
    throw ValidationError("burn-in interval settings must be positive, with max_sub_intervals >= b");
  if (!(target_rate > 0 && target_rate < 1)) throw ValidationError("target acceptance rate must be in (0, 1)");
  if (!(rhat_threshold > 1)) throw ValidationError("R-hat threshold must exceed 1");
  if (!(beta_step > 1)) throw ValidationError("beta step must exceed 1");
  if (!(ess_target > 0) || ess_check_every < 5 || max_post_iterations < ess_check_every)
    throw ValidationError("ESS stopping settings must be positive");
  if (cull_per_chain < 1) throw ValidationError("cull size must be positive");
  if (!(overdispersion >= 0)) throw ValidationError("overdispersion factor must be non-negative");
}

double Diagnostics::max_rhat() const {
  double r = 0.0;
  for (double x : rhat) r = std::max(r, x);
  return r;
}

double Diagnostics::min_ess() const {
  double e = kInf;
  for (double x : ess) e = std::min(e, x);
  return ess.empty() ? 0.0 : e;
}

Eigen::Map<const Eigen::VectorXd> ChainSet::draw(int chain, long iteration) const {
  return {draws[static_cast<std::size_t>(chain)].data() + iteration * dim, dim};
}

std::vector<std::vector<double>> ChainSet::component(Eigen::Index i, long from, long to) const {
  std::vector<std::vector<double>> out(draws.size());
  for (std::size_t c = 0; c < draws.size(); ++c) {
    out[c].reserve(static_cast<std::size_t>(to - from));
    for (long t = from; t < to; ++t) out[c].push_back(draws[c][static_cast<std::size_t>(t * dim + i)]);
  }
  return out;
}

Diagnostics ChainSet::diagnose(long from, long to) const {
  Diagnostics d;
  for (Eigen::Index i = 0; i < dim; ++i) {
    const auto x = component(i, from, to);
    d.rhat.push_back(rhat(x));
    d.ess.push_back(ess_mcmc(x));
  }
  return d;
}

Eigen::MatrixXd pooled_covariance(const ChainSet& chains, std::span<const Eigen::Index> indices, long from,
                                  long to) {
  const auto d = static_cast<Eigen::Index>(indices.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd x(d);
  long count = 0;
  for (int c = 0; c < chains.chains(); ++c)
    for (long t = from; t < to; ++t) {
      const auto row = chains.draw(c, t);
      for (Eigen::Index k = 0; k < d; ++k) x[k] = row[indices[static_cast<std::size_t>(k)]];
      mean += x;
      ++count;
    }
  mean /= static_cast<double>(count);
  for (int c = 0; c < chains.chains(); ++c)
    for (long t = from; t < to; ++t) {
      const auto row = chains.draw(c, t);
      for (Eigen::Index k = 0; k < d; ++k) x[k] = row[indices[static_cast<std::size_t>(k)]] - mean[k];
      outer.selfadjointView<Eigen::Lower>().rankUpdate(x);
    }
  Eigen::MatrixXd cov = outer.selfadjointView<Eigen::Lower>();
  return cov / static_cast<double>(count - 1);
}

std::vector<Eigen::VectorXd> cull(const ChainSet& chains, int per_chain) {
  const auto idx = cull_indices(chains.post_length(), per_chain);
  std::vector<Eigen::VectorXd> out;
  for (int c = 0; c < chains.chains(); ++c)
    for (long t : idx) out.emplace_back(chains.draw(c, chains.burn_in + t));
  return out;
}

namespace {

struct Runner {
  const SamplerConfig& config;
  ChainSet& set;
  std::vector<std::unique_ptr<LogTarget>> targets;
  std::vector<RandomStream> streams;
  std::vector<ChainState> states;
  std::vector<long> failures;

  // Advances every chain; returns per-block acceptance counts.
  std::vector<long> advance(std::span<const JumpKernel> kernels, int iterations) {
    const std::size_t m = states.size();
    std::vector<std::vector<long>> acc(m, std::vector<long>(kernels.size(), 0));
    for_each_chain(static_cast<int>(m), config.workers, [&](int c) {
      const auto k = static_cast<std::size_t>(c);
      auto& draws = set.draws[k];
      for (int it = 0; it < iterations; ++it) {
        gibbs_sweep(states[k], kernels, *targets[k], streams[k], acc[k], &failures[k]);
        draws.insert(draws.end(), states[k].theta.data(), states[k].theta.data() + states[k].theta.size());
        set.log_target[k].push_back(states[k].value.total());
      }
    });
    std::vector<long> total(kernels.size(), 0);
    for (const auto& a : acc)
      for (std::size_t b = 0; b < a.size(); ++b) total[b] += a[b];
    return total;
  }
};

std::string adaptation_summary(const std::vector<AdaptationStep>& trace, std::span<const Block> blocks) {
  std::ostringstream os;
  os << "sub-intervals run: " << trace.size() << "\n";
  const std::size_t from = trace.size() > 10 ? trace.size() - 10 : 0;
  for (std::size_t k = from; k < trace.size(); ++k) {
    os << "k=" << trace[k].interval << " max_rhat=" << trace[k].max_rhat;
    for (std::size_t b = 0; b < blocks.size(); ++b)
      os << " " << blocks[b].name << "(beta=" << trace[k].beta[b] << ", acc=" << trace[k].acceptance[b] << ")";
    os << "\n";
  }
  return os.str();
}

// Solve logit(rate) = a + slope log(beta) for the target rate over the tail.
double regressed_scale(const std::vector<AdaptationStep>& trace, std::size_t b, int tail, double trials,
                       double target) {
  const std::size_t from = trace.size() - static_cast<std::size_t>(tail);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, lo = kInf, hi = 0;
  const double n = tail;
  for (std::size_t k = from; k < trace.size(); ++k) {
    const double beta = trace[k].beta[b];
    const double x = std::log(beta);
    const double y = logit((trace[k].acceptance[b] * trials + 0.5) / (trials + 1.0));
    sx += x, sy += y, sxx += x * x, sxy += x * y;
    lo = std::min(lo, beta), hi = std::max(hi, beta);
  }
  const double vx = sxx - sx * sx / n;
  const double geometric = std::exp(sx / n);
  if (!(vx > 1e-12)) return geometric;
  const double slope = (sxy - sx * sy / n) / vx;
  const double intercept = (sy - slope * sx) / n;
  if (!(slope < 0)) return geometric;
  return std::clamp(std::exp((logit(target) - intercept) / slope), lo, hi);
}

}  // namespace

ChainSet run_sampler(const LogTarget& target, std::vector<Block> blocks, const std::vector<Eigen::VectorXd>& starts,
                     const SamplerConfig& config) {
  config.validate();
  const Eigen::Index dim = target.dim();
  validate_blocks(blocks, dim);
  const int m = config.chains;
  if (static_cast<int>(starts.size()) != m) throw ValidationError("need one start point per chain");
  const double trials = static_cast<double>(m) * config.sub_interval;
  for (const Block& b : blocks)
    if (static_cast<double>(b.indices.size()) + 1 > trials)
      throw ValidationError("block '" + b.name + "' has too many dimensions for m * Delta_n draws per sub-interval");

  ChainSet set;
  set.dim = dim;
  set.seed = config.seed;
  set.draws.resize(static_cast<std::size_t>(m));
  set.log_target.resize(static_cast<std::size_t>(m));
  Runner run{config, set, {}, {}, {}, std::vector<long>(static_cast<std::size_t>(m), 0)};
  for (int c = 0; c < m; ++c) {
    const auto s = RandomStream::derive_seed(config.seed, static_cast<std::uint64_t>(c));
    set.chain_streams.push_back(s);
    run.streams.emplace_back(s);
    run.targets.push_back(target.clone());
    const Eigen::VectorXd& x = starts[static_cast<std::size_t>(c)];
    if (x.size() != dim) throw ValidationError("start point has the wrong dimension");
    TargetValue v;
    try {
      v = run.targets.back()->evaluate(x);
    } catch (const SolveError& e) {
      throw ValidationError("chain " + std::to_string(c) + " start cannot be evaluated: " + e.what());
    }
    if (!std::isfinite(v.total()))
      throw ValidationError("chain " + std::to_string(c) + " start has a non-finite log target");
    run.states.push_back({x, v});
  }
  RandomStream adapt = RandomStream::derive(config.seed, static_cast<std::uint64_t>(m));

  // Modified burn-in.
  const std::size_t nb = blocks.size();
  std::vector<Eigen::MatrixXd> psi(nb), s_prev(nb);
  std::vector<double> beta(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const auto d = static_cast<Eigen::Index>(blocks[b].indices.size());
    psi[b] = Eigen::MatrixXd::Zero(d, d);
    s_prev[b] = blocks[b].covariance;
    beta[b] = 2.4 / std::sqrt(static_cast<double>(d));
  }
  const long tail_draws = static_cast<long>(config.tail_intervals) * config.sub_interval;
  bool converged = false;
  int k = 0;
  while (k < config.max_sub_intervals) {
    ++k;
    AdaptationStep step;
    step.interval = k;
    std::vector<JumpKernel> kernels;
    for (std::size_t b = 0; b < nb; ++b) {
      psi[b] = symmetrize(psi[b] + trials * s_prev[b]);
      const Eigen::MatrixXd sigma = adapt.inverse_wishart(psi[b], trials * k);
      kernels.push_back(JumpKernel::from(blocks[b], sigma, beta[b]));
    }
    const long from = set.length();
    const auto accepted = run.advance(kernels, config.sub_interval);
    for (std::size_t b = 0; b < nb; ++b) {
      s_prev[b] = pooled_covariance(set, blocks[b].indices, from, set.length());
      const double rate = static_cast<double>(accepted[b]) / trials;
      step.beta.push_back(beta[b]);
      step.acceptance.push_back(rate);
      step.psi.push_back(psi[b]);
      step.sample_cov.push_back(s_prev[b]);
      const double z = (rate - config.target_rate) /
                       std::sqrt(config.target_rate * (1.0 - config.target_rate) / trials);
      if (adapt.uniform() < normal_cdf(z))
        beta[b] *= config.beta_step;
      else
        beta[b] /= config.beta_step;
    }
    if (k >= config.tail_intervals) {
      set.burn_in_diagnostics = set.diagnose(set.length() - tail_draws, set.length());
      step.max_rhat = set.burn_in_diagnostics.max_rhat();
      converged = step.max_rhat < config.rhat_threshold;
    }
    if (config.progress && (k % 10 == 0 || converged)) {
      std::ostringstream os;
      os << "burn-in sub-interval " << k << ", acceptance";
      for (double r : step.acceptance) os << ' ' << std::setprecision(3) << r;
      if (step.max_rhat > 0) os << ", max R-hat " << std::setprecision(4) << step.max_rhat;
      config.progress(os.str());
    }
    set.adaptation.push_back(std::move(step));
    if (converged) break;
  }
  auto total_failures = [&] { return std::accumulate(run.failures.begin(), run.failures.end(), 0L); };
  if (!converged) {
    set.solve_failures = total_failures();
    throw NonConvergenceError("burn-in did not reach R-hat < " + std::to_string(config.rhat_threshold) + " within " +
                                  std::to_string(config.max_sub_intervals) + " sub-intervals",
                              adaptation_summary(set.adaptation, blocks));
  }
  set.burn_in = set.length();

  std::vector<JumpKernel> kernels;
  for (std::size_t b = 0; b < nb; ++b) {
    Block fin = blocks[b];
    fin.covariance = pooled_covariance(set, blocks[b].indices, set.burn_in - tail_draws, set.burn_in);
    if (Eigen::LLT<Eigen::MatrixXd>(fin.covariance).info() != Eigen::Success)
      fin.covariance = psi[b] / (trials * k);
    fin.scale = regressed_scale(set.adaptation, b, config.tail_intervals, trials, config.target_rate);
    kernels.push_back(JumpKernel::from(fin));
    set.final_blocks.push_back(std::move(fin));
  }

  std::vector<long> accepted(nb, 0);
  while (true) {
    const auto a = run.advance(kernels, config.ess_check_every);
    for (std::size_t b = 0; b < nb; ++b) accepted[b] += a[b];
    set.diagnostics = set.diagnose(set.burn_in, set.length());
    if (config.progress) {
      std::ostringstream os;
      os << "post-burn-in " << set.post_length() << " per chain, min ESS " << std::setprecision(4)
         << set.diagnostics.min_ess() << ", max R-hat " << set.diagnostics.max_rhat();
      config.progress(os.str());
    }
    if (set.post_length() >= config.cull_per_chain && set.diagnostics.min_ess() >= config.ess_target &&
        set.diagnostics.max_rhat() < config.rhat_threshold)
      break;
    if (set.post_length() >= config.max_post_iterations) {
      std::ostringstream os;
      os << "post-burn-in draws per chain: " << set.post_length() << ", min ESS " << set.diagnostics.min_ess()
         << ", max R-hat " << set.diagnostics.max_rhat() << "\n";
      throw NonConvergenceError("sampler did not reach the ESS target within the iteration budget", os.str());
    }
  }
  for (std::size_t b = 0; b < nb; ++b)
    set.post_acceptance.push_back(static_cast<double>(accepted[b]) / (static_cast<double>(m) * set.post_length()));
  set.solve_failures = total_failures();
  return set;
}

}  // namespace cohortcal
