#include "cohortcal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "cohortcal/errors.hpp"
#include "cohortcal/numerics.hpp"

namespace cohortcal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void say(const Progress& progress, const std::string& msg) {
  if (progress) progress(msg);
}

std::vector<Eigen::Index> range(Eigen::Index begin, Eigen::Index size) {
  std::vector<Eigen::Index> v(static_cast<std::size_t>(size));
  for (Eigen::Index i = 0; i < size; ++i) v[static_cast<std::size_t>(i)] = begin + i;
  return v;
}

Eigen::MatrixXd sub(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) out(a, b) = m(idx[a], idx[b]);
  return out;
}

Eigen::VectorXd hazard_mean(const CalibrationProblem& problem) {
  return problem.priors().hazard.mean(problem.sex());
}

}  // namespace

std::shared_ptr<const CalibrationProblem> make_problem(const ModelSpec& spec, Sex sex,
                                                       const std::vector<SurveyCell>& cells,
                                                       std::shared_ptr<const MortalityTable> mortality,
                                                       const HazardRatioPrior& hazard) {
  std::vector<SurveyCell> mine;
  for (const auto& c : cells)
    if (c.sex == sex) mine.push_back(c);
  if (mine.empty()) throw ValidationError("no survey cells for " + std::string(to_string(sex)));
  PriorSet priors{hazard, build_init_penalty(spec, mine), build_quit_penalty(spec, mine)};
  return std::make_shared<const CalibrationProblem>(spec, sex, std::move(mine), std::move(mortality),
                                                    std::move(priors));
}

PosteriorTarget::PosteriorTarget(std::shared_ptr<const CalibrationProblem> problem)
    : problem_(std::move(problem)), evaluator_(*problem_) {}

double PosteriorTarget::prior_term(const Eigen::VectorXd& theta) {
  const auto& layout = problem_->layout();
  const double lp = problem_->log_prior(layout.from_coordinates(theta));
  return std::isfinite(lp) ? lp + layout.log_jacobian(theta) : kNegInf;
}

TargetValue PosteriorTarget::evaluate(const Eigen::VectorXd& theta) {
  TargetValue v;
  v.prior = prior_term(theta);
  if (!std::isfinite(v.prior)) return {0.0, kNegInf};
  v.likelihood = evaluator_.log_likelihood(problem_->layout().from_coordinates(theta));
  return v;
}

double PosteriorTarget::log_posterior(const Eigen::VectorXd& theta) {
  if (!theta.allFinite()) return kNegInf;
  try {
    const double v = evaluate(theta).total();
    return std::isnan(v) ? kNegInf : v;
  } catch (const SolveError&) {
    return kNegInf;
  }
}

Eigen::VectorXd initial_coordinates(const CalibrationProblem& problem) {
  const ModelSpec& spec = problem.spec();
  ParameterVector p = ParameterVector::zeros(spec);
  const int youngest =
      std::min_element(problem.cells().begin(), problem.cells().end(), [](const auto& a, const auto& b) {
        return a.age < b.age;
      })->age;
  double ever = 0.0, weight = 0.0;
  for (const auto& c : problem.cells()) {
    if (c.age > youngest + 15) continue;
    ever += c.n_eff * (1.0 - c.proportions[0]);
    weight += c.n_eff;
  }
  p.p_former = 0.15;
  p.init_intercept = logit(std::clamp(ever / weight, 0.02, 0.98));
  p.quit_intercept = std::log(0.02);
  p.switch_rates.setConstant(0.01);
  const Eigen::VectorXd h = hazard_mean(problem);
  p.hr_current = h.head(spec.hr_group_count()).array().exp();
  p.hr_former = h.tail(spec.hr_group_count()).array().exp();
  Eigen::VectorXd theta = problem.layout().to_coordinates(p);
  theta.head(h.size()) = h;
  return theta;
}

MapEstimate find_map(const CalibrationProblem& problem, const Progress& progress) {
  const ParameterLayout& layout = problem.layout();
  const Eigen::Index dim = layout.size(), nh = layout.hazard_size();
  std::shared_ptr<const CalibrationProblem> handle(&problem, [](const CalibrationProblem*) {});
  PosteriorTarget target(handle);

  MapEstimate map;
  map.theta = initial_coordinates(problem);
  map.fixed.assign(static_cast<std::size_t>(dim), false);
  for (Eigen::Index i = 0; i < nh; ++i) map.fixed[static_cast<std::size_t>(i)] = true;
  const Eigen::VectorXd hr = map.theta.head(nh);
  auto embed = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd theta(dim);
    theta << hr, x;
    return theta;
  };
  const Objective f = [&](const Eigen::VectorXd& x) { return -target.log_posterior(embed(x)); };

  Eigen::VectorXd x = map.theta.tail(dim - nh);
  double best = f(x);
  if (!std::isfinite(best)) throw ValidationError("posterior is not finite at the initial point");
  for (int round = 0; round < 6; ++round) {
    const MinimizeResult r = minimize_bfgs(f, x);
    map.restarts = round + 1;
    const double gain = best - r.f;
    x = r.x;
    best = r.f;
    std::ostringstream os;
    os << to_string(problem.sex()) << " MAP round " << round + 1 << ": -log posterior " << std::setprecision(10)
       << r.f << " after " << r.iterations << " iterations (" << r.message << ")";
    say(progress, os.str());
    if (r.converged && gain < 1e-6 * std::max(1.0, std::abs(best))) {
      map.converged = true;
      break;
    }
  }
  map.theta = embed(x);
  map.log_posterior = -best;

  say(progress, std::string(to_string(problem.sex())) + " MAP Hessian");
  Eigen::MatrixXd H = richardson_hessian(f, x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
  Eigen::VectorXd ev = eig.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  if (ev.minCoeff() <= 1e-10 * top) {
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = std::max(std::abs(ev(i)), 1e-8 * top);
    H = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
    map.hessian_repaired = true;
  }
  map.hessian = H;
  map.covariance = Eigen::MatrixXd::Zero(dim, dim);
  map.covariance.topLeftCorner(nh, nh) = problem.priors().hazard.covariance(problem.sex());
  map.covariance.bottomRightCorner(dim - nh, dim - nh) =
      eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  return map;
}

std::vector<Block> calibration_blocks(const CalibrationProblem& problem, const MapEstimate& map) {
  const ParameterLayout& layout = problem.layout();
  std::vector<Block> blocks;
  auto add = [&](std::string name, Eigen::Index begin, Eigen::Index size, bool lf) {
    Block b;
    b.name = std::move(name);
    b.indices = range(begin, size);
    b.covariance = sub(map.covariance, b.indices);
    b.likelihood_free = lf;
    blocks.push_back(std::move(b));
  };
  add("hazard_ratios", layout.hazard_begin(), layout.hazard_size(), false);
  add("model", layout.model_begin(), layout.model_size(), false);
  add("nuisance", layout.nuisance_begin(), layout.nuisance_size(), true);
  return blocks;
}

std::vector<Eigen::VectorXd> chain_starts(const CalibrationProblem& problem, const MapEstimate& map,
                                          const SamplerConfig& config) {
  std::shared_ptr<const CalibrationProblem> handle(&problem, [](const CalibrationProblem*) {});
  PosteriorTarget target(handle);
  std::vector<Eigen::VectorXd> starts;
  for (int c = 0; c < config.chains; ++c) {
    RandomStream rng = RandomStream::derive(config.seed, 1000 + static_cast<std::uint64_t>(c));
    bool found = false;
    for (int attempt = 0; attempt < 200 && !found; ++attempt) {
      Eigen::VectorXd theta = overdispersed_init(map.theta, map.covariance, config.overdispersion, rng);
      if (std::isfinite(target.log_posterior(theta))) {
        starts.push_back(std::move(theta));
        found = true;
      }
    }
    if (!found)
      throw NonConvergenceError("no overdispersed start with a finite posterior for chain " + std::to_string(c),
                                "200 draws around the MAP were all outside the support or unsolvable");
  }
  return starts;
}

CalibrationResult calibrate(std::shared_ptr<const CalibrationProblem> problem, const SamplerConfig& config,
                            const Progress& progress) {
  config.validate();
  CalibrationResult res;
  res.sex = problem->sex();
  res.map = find_map(*problem, progress);
  const auto blocks = calibration_blocks(*problem, res.map);
  const auto starts = chain_starts(*problem, res.map, config);
  SamplerConfig cfg = config;
  if (!cfg.progress && progress) {
    const std::string tag(to_string(problem->sex()));
    cfg.progress = [progress, tag](const std::string& s) { progress(tag + " " + s); };
  }
  res.chains = run_sampler(PosteriorTarget(problem), blocks, starts, cfg);
  res.sample.chains = res.chains.chains();
  res.sample.per_chain = config.cull_per_chain;
  res.sample.seed = config.seed;
  for (const auto& theta : cull(res.chains, config.cull_per_chain))
    res.sample.draws.push_back(problem->layout().from_coordinates(theta));
  return res;
}

std::vector<ProfileCurve> profile_all(const CalibrationProblem& problem, const MapEstimate& map,
                                      const ProfilingSettings& settings, const Progress& progress) {
  std::shared_ptr<const CalibrationProblem> handle(&problem, [](const CalibrationProblem*) {});
  PosteriorTarget target(handle);
  const Objective log_post = [&](const Eigen::VectorXd& theta) { return target.log_posterior(theta); };
  ProfileOptions opt;
  opt.half_width_sd = settings.half_width_sd;
  opt.grid_points = settings.grid_points;
  opt.use_predictor = settings.use_predictor;
  opt.alpha = settings.alpha;
  opt.frozen.assign(static_cast<std::size_t>(map.theta.size()), false);
  if (settings.freeze_hazard_ratios) {
    opt.frozen = map.fixed;
    Eigen::MatrixXd full = Eigen::MatrixXd::Identity(map.theta.size(), map.theta.size());
    const Eigen::Index nf = map.hessian.rows();
    full.bottomRightCorner(nf, nf) = map.hessian;
    opt.hessian = std::move(full);
  }
  std::vector<ProfileCurve> out;
  for (Eigen::Index i = 0; i < map.theta.size(); ++i) {
    if (opt.frozen[static_cast<std::size_t>(i)]) continue;
    say(progress, std::string(to_string(problem.sex())) + " profile " + problem.layout().names()[i]);
    out.push_back(profile_posterior(log_post, map.theta, i, opt));
  }
  return out;
}

PriorMarginal coordinate_prior(const CalibrationProblem& problem, Eigen::Index i) {
  const ParameterLayout& layout = problem.layout();
  PriorMarginal m;
  auto normal = [&m](double mean, double sd) {
    m.mean = mean;
    m.sd = sd;
    m.pdf = [mean, sd](double x) {
      const double z = (x - mean) / sd;
      return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
    };
  };
  if (i >= layout.hazard_begin() && i < layout.hazard_begin() + layout.hazard_size()) {
    const auto& h = problem.priors().hazard;
    normal(h.mean(problem.sex())(i), std::sqrt(h.covariance(problem.sex())(i, i)));
  } else if (i == layout.model_begin()) {
    normal(FormerSharePrior::mean(), FormerSharePrior::sd());
  } else {
    m.proper = false;
  }
  return m;
}

double sample_dic(const CalibrationProblem& problem, const PosteriorSample& sample) {
  LikelihoodEvaluator ev(problem);
  return dic(std::span<const ParameterVector>(sample.draws),
             std::function<double(const ParameterVector&)>([&ev](const ParameterVector& p) {
               return ev.log_likelihood(p);
             }));
}

}  // namespace cohortcal
