#include "cohortcal/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace cohortcal {

InitialState initial_state(const ModelSpec& spec, double p_init, double p_former, double quit_rate_at_start) {
  if (!(p_former >= 0.0 && p_former <= 0.5)) throw ValidationError("P_F must lie in [0, 0.5]");
  if (!(p_init >= 0.0 && p_init <= 1.0)) throw ValidationError("P_I must lie in [0, 1]");
  if (!(quit_rate_at_start >= 0.0)) throw ValidationError("quit rate at start age must be non-negative");
  InitialState s;
  s.never = 1.0 - p_init;
  s.current = p_init * (1.0 - p_former);
  const double quit_side = p_init * p_former;
  s.recent = std::min(quit_side, s.current * std::expm1(quit_rate_at_start * spec.delay_k));
  s.former = quit_side - s.recent;
  return s;
}

int CohortTrajectory::row(int age) const {
  if (age < start_age || age > end_age)
    throw ValidationError("age " + std::to_string(age) + " outside simulated range");
  return age - start_age;
}

double CohortTrajectory::alive(int age) const {
  const int r = row(age);
  return never[r] + current[r] + recent.row(r).sum() + former.row(r).sum() + reported.row(r).sum();
}

double solve_never_mortality(double mu, const MortalityShares& rho, double hr_current, double hr_former,
                             const SecantOptions& opt) {
  if (mu < 0 || rho.never < 0 || rho.current < 0 || rho.former < 0 || !(hr_current > 0) || !(hr_former > 0))
    throw ValidationError("invalid never-smoker mortality inputs");
  return detail::solve_never_mortality_impl(mu, hr_current, hr_former, [&](double) { return rho; }, opt,
                                            nullptr);
}

double solve_never_mortality(double mu, double hr_current, double hr_former,
                             const std::function<MortalityShares(double)>& shares, const SecantOptions& opt,
                             double* residual) {
  if (mu < 0 || !(hr_current > 0) || !(hr_former > 0)) throw ValidationError("invalid never-smoker mortality inputs");
  return detail::solve_never_mortality_impl(mu, hr_current, hr_former, shares, opt, residual);
}

CohortSolver::CohortSolver(const ModelSpec& spec, const ParameterVector& params, int birth_year, int max_age)
    : spec_(spec),
      birth_year_(birth_year),
      max_age_(max_age),
      groups_(spec.quit_group_count()),
      a0_(spec.start_age),
      k_(spec.delay_k) {
  if (max_age < spec.start_age || max_age > spec.end_age)
    throw ValidationError("cohort max age outside [start_age, end_age]");
  params.validate(spec);

  const auto span_of = [](const Eigen::VectorXd& v) {
    return std::span<const double>(v.data(), static_cast<std::size_t>(v.size()));
  };
  const SplineBasis init_basis = spec.init_basis();
  const SplineBasis age_basis = spec.quit_age_basis();
  const SplineBasis year_basis = spec.quit_year_basis();
  rate_.emplace(params.quit_intercept, age_basis.bind(span_of(params.quit_age_weights)),
                year_basis.bind(span_of(params.quit_year_weights)));

  const double p_init = logistic(params.init_intercept + init_basis.value(birth_year, span_of(params.init_weights)));
  lambda0_ = quit_rate_at(a0_);
  init_ = initial_state(spec, p_init, params.p_former, lambda0_);
  const double pre_mass = init_.current * std::expm1(lambda0_ * k_);
  pre_scale_ = pre_mass > 0 ? init_.recent / pre_mass : 0.0;

  switch_ = Eigen::VectorXd::Zero(groups_);
  for (int j = 0; j < spec.switching_group_count(); ++j) switch_[j] = params.switch_rates[j];

  for (double x : age_basis.breakpoints()) breaks_.push_back(x);
  if (spec.quit_time_axis == QuitTimeAxis::calendar_year)
    for (double x : year_basis.breakpoints()) breaks_.push_back(x - birth_year);
  breaks_.push_back(a0_);
  std::sort(breaks_.begin(), breaks_.end());

  group_lo_.push_back(-1e300);
  for (double b : spec.age_at_quit_breaks) group_lo_.push_back(b);

  const int n_years = max_age - spec.start_age;
  cum_int_.assign(n_years + 1, 0.0);
  auto rate = [this](double s) { return quit_rate_at(s); };
  for (int i = 0; i < n_years; ++i)
    cum_int_[i + 1] = cum_int_[i] + gauss_legendre_split(rate, a0_ + i, a0_ + i + 1, breaks_);

  // Panel boundaries inside each year: quit-rate kinks at the node itself and
  // k years earlier, group boundaries and the start age k years earlier.
  std::vector<double> kinks = breaks_;
  for (double x : breaks_) kinks.push_back(x + k_);
  for (std::size_t j = 1; j < group_lo_.size(); ++j) kinks.push_back(group_lo_[j] + k_);
  std::sort(kinks.begin(), kinks.end());

  years_.resize(n_years);
  std::vector<QuadNode> nodes;
  for (int i = 0; i < n_years; ++i) {
    const double a = a0_ + i;
    Year& y = years_[i];
    nodes.clear();
    append_gauss_nodes(a, a + 1.0, kinks, nodes);
    const std::size_t n = nodes.size();
    y.offset.resize(n);
    y.weight.resize(n);
    y.alive_smoking.resize(n);
    y.source.assign(n * groups_, 0.0);
    for (std::size_t q = 0; q < n; ++q) {
      const double u = nodes[q].x;
      y.offset[q] = u - a;
      y.weight[q] = nodes[q].w;
      double window = 0.0;
      for (int j = 0; j < groups_; ++j) window += window_mass(u - k_, u, j);
      y.alive_smoking[q] = survival(u) + window;
      y.source[q * groups_ + spec.quit_group_of(u - k_)] = quit_density(u - k_);
    }
    y.current_end = survival(a + 1.0);
    y.recent_end.resize(groups_);
    for (int j = 0; j < groups_; ++j) y.recent_end[j] = window_mass(a + 1.0 - k_, a + 1.0, j);
  }
}

double CohortSolver::quit_rate_at(double age) const {
  if (age < a0_) return lambda0_;
  const double year = spec_.quit_time_axis == QuitTimeAxis::calendar_year ? birth_year_ + age : birth_year_;
  return (*rate_)(age, year);
}

double CohortSolver::cumulative_quit(double s) const {
  if (s <= a0_) return -lambda0_ * (a0_ - s);
  const int n = static_cast<int>(cum_int_.size()) - 1;
  int i = std::min(static_cast<int>(std::floor(s - a0_)), n);
  double lo = a0_ + i;
  double total = cum_int_[i];
  auto rate = [this](double x) { return quit_rate_at(x); };
  while (s - lo > 1.0) {  // only reachable past max_age
    total += gauss_legendre_split(rate, lo, lo + 1.0, breaks_);
    lo += 1.0;
  }
  return s > lo ? total + gauss_legendre_split(rate, lo, s, breaks_) : total;
}

double CohortSolver::survival(double s) const { return std::exp(-cumulative_quit(s)); }

double CohortSolver::quit_density(double s) const {
  const double g = quit_rate_at(s) * survival(s);
  return s < a0_ ? pre_scale_ * g : g;
}

double CohortSolver::window_mass(double s1, double s2, int group) const {
  const double lo = std::max(s1, group_lo_[group]);
  const double hi = group + 1 < groups_ ? std::min(s2, group_lo_[group + 1]) : s2;
  if (!(hi > lo)) return 0.0;
  double mass = 0.0;
  if (lo < a0_) mass += pre_scale_ * (survival(lo) - survival(std::min(hi, a0_)));
  if (hi > a0_) mass += survival(std::max(lo, a0_)) - survival(hi);
  return mass;
}

CohortTrajectory CohortSolver::solve(const MortalityTable& mortality, Sex sex, const Eigen::VectorXd& hr_current,
                                     const Eigen::VectorXd& hr_former, const SecantOptions& opt) const {
  const int G = groups_;
  CohortTrajectory t;
  t.sex = sex;
  t.birth_year = birth_year_;
  t.start_age = spec_.start_age;
  t.end_age = max_age_;
  const int rows = t.rows();
  t.never.resize(rows);
  t.current.resize(rows);
  t.recent = Eigen::MatrixXd::Zero(rows, G);
  t.former = Eigen::MatrixXd::Zero(rows, G);
  t.reported = Eigen::MatrixXd::Zero(rows, G);
  t.never_mortality.resize(rows - 1);
  t.secant_residual.resize(rows - 1);

  const double c0 = init_.current;
  double never = init_.never;
  double log_current_survival = 0.0;  // -M_C(a)
  std::vector<double> former(G, 0.0), reported(G, 0.0);
  former[0] = init_.former;
  t.never[0] = never;
  t.current[0] = c0;
  t.recent(0, 0) = init_.recent;
  t.former(0, 0) = init_.former;

  std::vector<double> flow;  // node-major: base e^{-hC m u} times source, per group
  std::vector<double> ec;
  for (int i = 0; i + 1 < rows; ++i) {
    const int age = spec_.start_age + i;
    const Year& y = years_[i];
    const std::size_t n = y.offset.size();
    const double mu = mortality.rate(sex, age, birth_year_ + age);
    const int hg = spec_.hr_group_of(age);
    const double hc = hr_current[hg];
    const double hf = hr_former[hg];
    const double base = c0 * std::exp(log_current_survival);
    ec.resize(n);
    flow.resize(n * G);

    auto prepare = [&](double m) {
      for (std::size_t q = 0; q < n; ++q) {
        ec[q] = base * std::exp(-hc * m * y.offset[q]);
        for (int j = 0; j < G; ++j) flow[q * G + j] = y.weight[q] * ec[q] * y.source[q * G + j];
      }
    };
    auto shares = [&](double m) {
      prepare(m);
      MortalityShares s;
      double ec_sum = 0.0;
      for (std::size_t q = 0; q < n; ++q) ec_sum += y.weight[q] * ec[q] * y.alive_smoking[q];
      s.current = ec_sum;
      s.never = never * decay_exposure(m, 1.0);
      s.former = 0.0;
      for (int j = 0; j < G; ++j) {
        const double r = switch_[j] + hf * m;
        double ef = former[j] * decay_exposure(r, 1.0);
        for (std::size_t q = 0; q < n; ++q) ef += flow[q * G + j] * decay_exposure(r, 1.0 - y.offset[q]);
        s.former += ef;
        if (switch_[j] > 0.0) {
          double src = former[j] * transfer_exposure(r, m, 1.0);
          for (std::size_t q = 0; q < n; ++q) src += flow[q * G + j] * transfer_exposure(r, m, 1.0 - y.offset[q]);
          s.never += reported[j] * decay_exposure(m, 1.0) + switch_[j] * src;
        } else {
          s.never += reported[j] * decay_exposure(m, 1.0);
        }
      }
      return s;
    };

    double residual = 0.0;
    const double m = detail::solve_never_mortality_impl(mu, hc, hf, shares, opt, &residual);
    prepare(m);
    t.never_mortality[i] = m;
    t.secant_residual[i] = residual;

    never *= std::exp(-m);
    for (int j = 0; j < G; ++j) {
      const double r = switch_[j] + hf * m;
      double f_next = former[j] * std::exp(-r);
      double r_next = reported[j] * std::exp(-m);
      if (switch_[j] > 0.0) {
        double src = former[j] * transfer_kernel(r, m, 1.0);
        for (std::size_t q = 0; q < n; ++q) src += flow[q * G + j] * transfer_kernel(r, m, 1.0 - y.offset[q]);
        r_next += switch_[j] * src;
      }
      for (std::size_t q = 0; q < n; ++q) f_next += flow[q * G + j] * std::exp(-r * (1.0 - y.offset[q]));
      former[j] = f_next;
      reported[j] = r_next;
    }
    log_current_survival -= hc * m;
    const double smoking_scale = c0 * std::exp(log_current_survival);
    t.never[i + 1] = never;
    t.current[i + 1] = smoking_scale * y.current_end;
    for (int j = 0; j < G; ++j) {
      t.recent(i + 1, j) = smoking_scale * y.recent_end[j];
      t.former(i + 1, j) = former[j];
      t.reported(i + 1, j) = reported[j];
    }
  }
  return t;
}

CohortTrajectory solve_cohort(const ModelSpec& spec, const ParameterVector& params, const MortalityTable& mortality,
                              Sex sex, int birth_year, std::optional<int> max_age, const SecantOptions& opt) {
  const CohortSolver solver(spec, params, birth_year, max_age.value_or(spec.end_age));
  return solver.solve(mortality, sex, params.hr_current, params.hr_former, opt);
}

CellProbabilities cell_probabilities(const CohortTrajectory& traj, int age) {
  const int r = traj.row(age);
  const double never = traj.never[r] + traj.reported.row(r).sum();
  const double current = traj.current[r] + traj.recent.row(r).sum();
  const double ex = traj.former.row(r).sum();
  const double total = never + current + ex;
  if (!(total > 0)) throw SolveError("cohort has no surviving mass at age " + std::to_string(age));
  CellProbabilities p;
  p.triple = {never / total, current / total, ex / total};
  p.former_by_group.resize(traj.former.cols());
  for (Eigen::Index j = 0; j < traj.former.cols(); ++j) p.former_by_group[j] = traj.former(r, j) / total;
  return p;
}

std::vector<CellProbabilities> model_proportions_map(const ModelSpec& spec, const ParameterVector& params,
                                                     const MortalityTable& mortality, std::span<const CellKey> cells) {
  std::map<std::pair<int, int>, int> oldest;  // (sex, birth year) -> max age
  for (const CellKey& c : cells) {
    if (c.age < spec.start_age || c.age > spec.end_age)
      throw ValidationError("cell age " + std::to_string(c.age) + " outside simulated range");
    auto key = std::make_pair(static_cast<int>(c.sex), c.birth_year);
    auto it = oldest.find(key);
    if (it == oldest.end()) oldest.emplace(key, c.age);
    else it->second = std::max(it->second, c.age);
  }
  std::map<std::pair<int, int>, CohortTrajectory> trajectories;
  for (const auto& [key, age] : oldest)
    trajectories.emplace(key, solve_cohort(spec, params, mortality, static_cast<Sex>(key.first), key.second, age));
  std::vector<CellProbabilities> out;
  out.reserve(cells.size());
  for (const CellKey& c : cells)
    out.push_back(cell_probabilities(trajectories.at({static_cast<int>(c.sex), c.birth_year}), c.age));
  return out;
}

}  // namespace cohortcal
