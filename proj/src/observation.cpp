#include "cohortcal/observation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "cohortcal/errors.hpp"
#include "cohortcal/numerics.hpp"

namespace cohortcal {

namespace {

constexpr double kClamp = 1e-12;

// -1 never, -2 current, -3 unresolved ex, j >= 0 ex by group.
int parse_category(const std::string& c, int groups) {
  if (c == "never") return -1;
  if (c == "current") return -2;
  if (c == "ex") return -3;
  if (c.rfind("ex:", 0) == 0) {
    std::size_t used = 0;
    int j = -1;
    try {
      j = std::stoi(c.substr(3), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == c.size() - 3 && j >= 0 && j < groups) return j;
  }
  throw ValidationError("unknown category '" + c + "'");
}

}  // namespace

double effective_sample_size(std::span<const double> weights) {
  if (weights.empty()) throw ValidationError("effective sample size of an empty weight list");
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    if (!(w > 0) || !std::isfinite(w)) throw ValidationError("weights must be positive and finite");
    s += w;
    s2 += w * w;
  }
  return s * s / s2;
}

SurveyCellTable build_cell_table(std::vector<SurveyRow> rows, int quit_groups, bool use_weights) {
  struct Acc {
    SurveyCell cell;
    std::vector<double> weight;
    double wsq = 0.0;
    bool grouped = false, ungrouped = false;
  };
  using Key = std::tuple<std::string, int, int, int>;
  std::map<Key, std::size_t> index;
  std::vector<Acc> acc;
  std::set<std::tuple<std::string, int, int, int, std::string>> seen;
  const std::size_t ncat = static_cast<std::size_t>(quit_groups) + 2;

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SurveyRow& r = rows[i];
    const std::string where = "survey row " + std::to_string(i + 1) + ": ";
    int cat = 0;
    try {
      cat = parse_category(r.category, quit_groups);
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    if (r.survey_id.empty() || r.survey_id.find(',') != std::string::npos)
      throw ValidationError(where + "survey_id must be non-empty and contain no commas");
    if (!std::isfinite(r.count) || r.count < 0) throw ValidationError(where + "count must be non-negative");
    if (!std::isfinite(r.weight_sum) || r.weight_sum < 0 || !std::isfinite(r.weight_sq_sum) || r.weight_sq_sum < 0)
      throw ValidationError(where + "weight sums must be non-negative");
    if ((r.count > 0) != (r.weight_sum > 0) || (r.count > 0) != (r.weight_sq_sum > 0))
      throw ValidationError(where + "weights must be positive exactly when count is positive");
    if (r.count > 0 && r.weight_sum * r.weight_sum > r.count * r.weight_sq_sum * (1 + 1e-9))
      throw ValidationError(where + "weight sums imply an effective size above the count");
    if (!seen.emplace(r.survey_id, static_cast<int>(r.sex), r.age, r.birth_year, r.category).second)
      throw ValidationError(where + "duplicate (survey, sex, age, birth_year, category)");

    const Key key{r.survey_id, static_cast<int>(r.sex), r.age, r.birth_year};
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, acc.size()).first;
      Acc a;
      a.cell.survey_id = r.survey_id;
      a.cell.sex = r.sex;
      a.cell.age = r.age;
      a.cell.birth_year = r.birth_year;
      a.cell.counts.assign(ncat, 0.0);
      a.weight.assign(ncat, 0.0);
      acc.push_back(std::move(a));
    }
    Acc& a = acc[it->second];
    std::size_t slot = 0;
    if (cat == -1) slot = 0;
    else if (cat == -2) slot = 1;
    else if (cat == -3) {
      slot = 2;
      a.ungrouped = true;
    } else {
      slot = 2 + static_cast<std::size_t>(cat);
      a.grouped = true;
    }
    if (a.grouped && a.ungrouped)
      throw ValidationError(where + "cell mixes 'ex' with age-at-quit resolved 'ex:<group>' rows");
    a.cell.counts[slot] += r.count;
    a.weight[slot] += r.weight_sum;
    a.wsq += r.weight_sq_sum;
  }

  SurveyCellTable table;
  table.rows = std::move(rows);
  for (Acc& a : acc) {
    SurveyCell& c = a.cell;
    c.by_group = a.grouped;
    if (!c.by_group) {
      c.counts.resize(3);
      a.weight.resize(3);
    }
    c.n = 0.0;
    for (double x : c.counts) c.n += x;
    if (c.n <= 0) continue;
    double wtot = 0.0;
    for (double w : a.weight) wtot += w;
    c.proportions.resize(c.counts.size());
    for (std::size_t j = 0; j < c.counts.size(); ++j)
      c.proportions[j] = use_weights ? a.weight[j] / wtot : c.counts[j] / c.n;
    c.n_eff = use_weights ? std::min(c.n, wtot * wtot / a.wsq) : c.n;
    table.cells.push_back(std::move(c));
  }
  return table;
}

std::vector<double> model_vector(const SurveyCell& cell, const CellProbabilities& m) {
  if (!cell.by_group) return {m.triple[0], m.triple[1], m.triple[2]};
  if (m.former_by_group.size() + 2 != cell.categories())
    throw ValidationError("cell categories do not match the model's age-at-quit groups");
  std::vector<double> v{m.triple[0], m.triple[1]};
  v.insert(v.end(), m.former_by_group.begin(), m.former_by_group.end());
  return v;
}

std::vector<double> clamp_probabilities(std::span<const double> m) {
  std::vector<double> v(m.begin(), m.end());
  double total = 0.0;
  for (double& x : v) {
    if (!std::isfinite(x)) throw ValidationError("non-finite model probability");
    x = std::clamp(x, kClamp, 1.0 - kClamp);
    total += x;
  }
  for (double& x : v) x /= total;
  return v;
}

double dirichlet_log_likelihood(std::span<const double> p, double n_eff, std::span<const double> m) {
  if (p.size() != m.size()) throw ValidationError("model and observed category counts differ");
  const std::vector<double> mc = clamp_probabilities(m);
  double alpha_total = 0.0, value = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double alpha = 1.0 + p[j] * n_eff;
    alpha_total += alpha;
    value += (alpha - 1.0) * std::log(mc[j]) - std::lgamma(alpha);
  }
  return value + std::lgamma(alpha_total);
}

double cell_log_likelihood(const SurveyCell& cell, std::span<const double> m) {
  return dirichlet_log_likelihood(cell.proportions, cell.n_eff, m);
}

double total_log_likelihood(std::span<const SurveyCell> cells, std::span<const std::vector<double>> m) {
  if (cells.size() != m.size()) throw ValidationError("model probabilities not aligned with survey cells");
  std::vector<double> terms(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) terms[i] = cell_log_likelihood(cells[i], m[i]);
  return pairwise_sum(terms);
}

double dirichlet_multinomial_concentration(double n, double n_eff) {
  if (!(n_eff > 1)) throw ValidationError("effective sample size must exceed 1 for predictive sampling");
  if (n_eff >= n) return std::numeric_limits<double>::infinity();
  return n * (n_eff - 1.0) / (n - n_eff);
}

std::vector<double> predictive_counts_sample(double n, double n_eff, std::span<const double> m, RandomStream& rng) {
  const double alpha0 = dirichlet_multinomial_concentration(n, n_eff);
  std::vector<double> probs(m.begin(), m.end());
  double total = 0.0;
  for (double& x : probs) {
    if (!(x >= 0) || !std::isfinite(x)) throw ValidationError("model probabilities must be finite and >= 0");
    total += x;
  }
  for (double& x : probs) x /= total;
  if (std::isfinite(alpha0)) {
    std::vector<double> alpha(probs.size());
    for (std::size_t j = 0; j < probs.size(); ++j) alpha[j] = probs[j] * alpha0;
    probs = rng.dirichlet(alpha);
  }
  return rng.multinomial(std::lround(n), probs);
}

void HazardRatioPrior::set(Sex sex, Eigen::VectorXd mean, Eigen::MatrixXd covariance) {
  const Eigen::Index n = 2 * static_cast<Eigen::Index>(age_groups_.size());
  if (mean.size() != n || covariance.rows() != n || covariance.cols() != n)
    throw ValidationError("hazard-ratio prior dimensions do not match 2 x age groups");
  if (!mean.allFinite() || !covariance.allFinite()) throw ValidationError("hazard-ratio prior not finite");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-10 * covariance.cwiseAbs().maxCoeff())
    throw ValidationError("hazard-ratio prior covariance is not symmetric");
  Block b{std::move(mean), covariance, Eigen::LLT<Eigen::MatrixXd>(covariance)};
  if (b.llt.info() != Eigen::Success)
    throw ValidationError("hazard-ratio prior covariance is not positive definite (Cholesky failed) for " +
                          std::string(to_string(sex)));
  blocks_[index(sex)] = std::move(b);
}

const HazardRatioPrior::Block& HazardRatioPrior::block(Sex sex) const {
  if (!blocks_[index(sex)]) throw ValidationError("no hazard-ratio prior for " + std::string(to_string(sex)));
  return *blocks_[index(sex)];
}

const Eigen::VectorXd& HazardRatioPrior::mean(Sex sex) const { return block(sex).mean; }
const Eigen::MatrixXd& HazardRatioPrior::covariance(Sex sex) const { return block(sex).cov; }

double HazardRatioPrior::log_density(Sex sex, const Eigen::VectorXd& log_hr) const {
  const Block& b = block(sex);
  const Eigen::VectorXd z = b.llt.matrixL().solve(log_hr - b.mean);
  return -0.5 * z.squaredNorm();
}

PenaltyPrior::PenaltyPrior(Eigen::MatrixXd X, Eigen::VectorXd W) {
  if (X.rows() != W.size() || X.rows() == 0) throw ValidationError("penalty design has no rows");
  const double w = W.sum();
  if (!(w > 0)) throw ValidationError("penalty weights sum to zero");
  unit_precision_ = X.transpose() * W.asDiagonal() * X / w;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(unit_precision_);
  const double hi = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(hi, 1e-300)))
    throw ValidationError("penalty design X'WX is singular");
}

double PenaltyPrior::log_density(const Eigen::VectorXd& z, double sigma) const {
  if (z.size() != dim()) throw ValidationError("penalty coefficient length mismatch");
  return static_cast<double>(dim()) * std::log(sigma) - 0.5 * sigma * sigma * z.dot(unit_precision_ * z);
}

PenaltyPrior build_init_penalty(const ModelSpec& spec, std::span<const SurveyCell> cells, int max_age) {
  const SplineBasis basis = spec.init_basis();
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> weights;
  for (const SurveyCell& c : cells) {
    if (c.age > max_age) continue;
    Eigen::VectorXd x(1 + basis.df());
    x[0] = 1.0;
    x.tail(basis.df()) = basis.eval(c.birth_year);
    rows.push_back(x);
    weights.push_back(c.n_eff * c.proportions[0]);
  }
  Eigen::MatrixXd X(rows.size(), 1 + basis.df());
  for (std::size_t i = 0; i < rows.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  try {
    return PenaltyPrior(X, Eigen::Map<Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size())));
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("initiation prior: ") + e.what());
  }
}

PenaltyPrior build_quit_penalty(const ModelSpec& spec, std::span<const SurveyCell> cells) {
  const SplineBasis age = spec.quit_age_basis();
  const SplineBasis year = spec.quit_year_basis();
  const Eigen::Index d = 1 + age.df() + year.df();
  Eigen::MatrixXd X(cells.size(), d);
  Eigen::VectorXd W(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const SurveyCell& c = cells[i];
    const double t = spec.quit_time_axis == QuitTimeAxis::calendar_year ? c.birth_year + c.age : c.birth_year;
    Eigen::VectorXd x(d);
    x[0] = 1.0;
    x.segment(1, age.df()) = age.eval(c.age);
    x.tail(year.df()) = year.eval(t);
    X.row(static_cast<Eigen::Index>(i)) = x.transpose();
    W[static_cast<Eigen::Index>(i)] = c.n_eff * c.proportions[1];
  }
  try {
    return PenaltyPrior(X, W);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("quit-rate prior: ") + e.what());
  }
}

double FormerSharePrior::mean() { return logit(0.3); }
double FormerSharePrior::sd() { return (logit(0.3) - logit(0.02)) / 1.6448536269514722; }

double log_prior(const ParameterVector& p, const ModelSpec& spec, Sex sex, const PriorSet& priors) {
  if (!(p.p_former > 0.0 && p.p_former < 0.5)) return -std::numeric_limits<double>::infinity();
  const Eigen::Index H = spec.hr_group_count();
  Eigen::VectorXd log_hr(2 * H);
  log_hr << p.hr_current.array().log().matrix(), p.hr_former.array().log().matrix();
  double lp = priors.hazard.log_density(sex, log_hr);
  const double u = (logit(2.0 * p.p_former) - FormerSharePrior::mean()) / FormerSharePrior::sd();
  lp -= 0.5 * u * u;
  for (Eigen::Index j = 0; j < p.switch_rates.size(); ++j) lp -= 0.5 * std::log(p.switch_rates[j]);
  lp -= std::log(p.sigma_init) + std::log(p.sigma_quit);
  Eigen::VectorXd zi(1 + p.init_weights.size());
  zi << p.init_intercept, p.init_weights;
  Eigen::VectorXd zq(1 + p.quit_age_weights.size() + p.quit_year_weights.size());
  zq << p.quit_intercept, p.quit_age_weights, p.quit_year_weights;
  lp += priors.init.log_density(zi, p.sigma_init) + priors.quit.log_density(zq, p.sigma_quit);
  return lp;
}

CalibrationProblem::CalibrationProblem(ModelSpec spec, Sex sex, std::vector<SurveyCell> cells,
                                       std::shared_ptr<const MortalityTable> mortality, PriorSet priors)
    : spec_(std::move(spec)), sex_(sex), mortality_(std::move(mortality)), priors_(std::move(priors)),
      layout_(spec_) {
  spec_.validate();
  if (!mortality_) throw ValidationError("calibration requires a mortality table");
  if (priors_.hazard.age_groups() != spec_.hr_age_groups)
    throw ValidationError("hazard-ratio prior age groups differ from the model's");
  if (!priors_.hazard.has(sex_)) throw ValidationError("no hazard-ratio prior for " + std::string(to_string(sex_)));
  if (priors_.init.dim() != 1 + spec_.df_init ||
      priors_.quit.dim() != 1 + spec_.df_quit_age + spec_.df_quit_year)
    throw ValidationError("penalty prior dimensions do not match the model");
  std::map<int, std::size_t> by_year;
  for (SurveyCell& c : cells) {
    if (c.sex != sex_) continue;
    if (c.age < spec_.start_age || c.age > spec_.end_age)
      throw ValidationError("survey cell age " + std::to_string(c.age) + " outside the model age range");
    if (c.by_group && static_cast<int>(c.categories()) != spec_.quit_group_count() + 2)
      throw ValidationError("survey cell age-at-quit groups do not match the model");
    auto it = by_year.find(c.birth_year);
    if (it == by_year.end()) {
      it = by_year.emplace(c.birth_year, cohorts_.size()).first;
      cohorts_.push_back({c.birth_year, c.age});
    }
    cohorts_[it->second].max_age = std::max(cohorts_[it->second].max_age, c.age);
    cell_cohort_.push_back(it->second);
    cells_.push_back(std::move(c));
  }
}

double CalibrationProblem::log_prior(const ParameterVector& p) const {
  return cohortcal::log_prior(p, spec_, sex_, priors_);
}

double CalibrationProblem::log_likelihood(const ParameterVector& p) const {
  LikelihoodEvaluator e(*this);
  return e.log_likelihood(p);
}

std::vector<CellProbabilities> CalibrationProblem::proportions(const ParameterVector& p) const {
  LikelihoodEvaluator e(*this);
  return e.proportions(p);
}

double CalibrationProblem::log_posterior(const ParameterVector& p) const {
  const double lp = log_prior(p);
  if (!std::isfinite(lp)) return lp;
  return lp + log_likelihood(p);
}

void LikelihoodEvaluator::refresh(const ParameterVector& p) {
  std::vector<double> key{p.p_former, p.init_intercept, p.quit_intercept};
  for (const Eigen::VectorXd* v : {&p.init_weights, &p.quit_age_weights, &p.quit_year_weights, &p.switch_rates})
    key.insert(key.end(), v->data(), v->data() + v->size());
  if (!cache_[0].solvers.empty() && key == cache_[0].key) return;
  if (!cache_[1].solvers.empty() && key == cache_[1].key) {
    std::swap(cache_[0], cache_[1]);
    return;
  }
  std::vector<CohortSolver> solvers;
  for (const auto& c : problem_->cohorts()) solvers.emplace_back(problem_->spec(), p, c.birth_year, c.max_age);
  cache_[1] = std::move(cache_[0]);
  cache_[0] = {std::move(key), std::move(solvers)};
  ++builds_;
}

std::vector<CellProbabilities> LikelihoodEvaluator::proportions(const ParameterVector& p) {
  p.validate(problem_->spec());
  refresh(p);
  std::vector<CohortTrajectory> traj;
  traj.reserve(cache_[0].solvers.size());
  for (const CohortSolver& s : cache_[0].solvers)
    traj.push_back(s.solve(problem_->mortality(), problem_->sex(), p.hr_current, p.hr_former));
  std::vector<CellProbabilities> out;
  out.reserve(problem_->cells().size());
  for (std::size_t i = 0; i < problem_->cells().size(); ++i)
    out.push_back(cell_probabilities(traj[problem_->cell_cohort()[i]], problem_->cells()[i].age));
  return out;
}

double LikelihoodEvaluator::log_likelihood(const ParameterVector& p) {
  const auto probs = proportions(p);
  const auto& cells = problem_->cells();
  std::vector<double> terms(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) terms[i] = cell_log_likelihood(cells[i], model_vector(cells[i], probs[i]));
  return pairwise_sum(terms);
}

}  // namespace cohortcal
