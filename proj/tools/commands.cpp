#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cohortcal/calibration.hpp"
#include "cohortcal/data_io.hpp"
#include "cohortcal/errors.hpp"
#include "cohortcal/summaries.hpp"

namespace cohortcal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

namespace {

std::string hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void log(const std::string& msg) { std::cerr << "[cohortcal] " << msg << std::endl; }

struct Context {
  RunOptions opt;
  CalibrationConfig config;
  std::string started;
  std::map<std::string, fs::path> inputs;  // role -> file
};

Context open(const RunOptions& opt) {
  Context ctx;
  ctx.opt = opt;
  ctx.started = utc_now();
  ctx.config = load_config(opt.config, false);
  if (opt.seed) ctx.config.sampler.seed = *opt.seed;
  if (opt.workers) {
    if (*opt.workers < 1) throw ValidationError("--workers must be at least 1");
    ctx.config.sampler.workers = *opt.workers;
  }
  if (!opt.data.empty()) {
    ctx.config.io.survey = opt.data / "survey.csv";
    ctx.config.io.mortality = opt.data / "mortality.csv";
    ctx.config.io.hr_prior = opt.data / "hr_prior.csv";
  }
  ctx.inputs["config"] = opt.config;
  fs::create_directories(opt.out);
  return ctx;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing input " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_manifest(const Context& ctx, const std::string& subcommand) {
  json m;
  m["subcommand"] = subcommand;
  m["config_hash"] = hex(fnv1a(ctx.opt.config));
  m["seed"] = ctx.config.sampler.seed;
  m["model"] = ctx.config.model.label;
  for (const auto& [role, path] : ctx.inputs)
    m["inputs"][role] = {{"path", fs::absolute(path).lexically_normal().string()}, {"fnv1a", hex(fnv1a(path))}};
  m["started"] = ctx.started;
  m["finished"] = utc_now();
  write_json(ctx.opt.out / "manifest.json", m);
}

// The upstream run must have been produced from the same survey data.
json check_upstream(const fs::path& dir, const Context& ctx) {
  const json m = read_json(dir / "manifest.json");
  if (!ctx.config.io.survey.empty() && m.contains("inputs") && m["inputs"].contains("survey")) {
    const std::string have = hex(fnv1a(ctx.config.io.survey));
    if (m["inputs"]["survey"].value("fnv1a", "") != have)
      throw ValidationError("manifest mismatch: " + dir.string() + " was produced from different survey data");
  }
  return m;
}

struct Inputs {
  SurveyCellTable survey;
  std::shared_ptr<const MortalityTable> mortality;
  HazardRatioPrior hazard;
};

Inputs load_inputs(Context& ctx, const ModelSpec& spec) {
  const IoSettings& io = ctx.config.io;
  for (const auto& [role, path] :
       {std::pair<const char*, fs::path>{"survey", io.survey}, {"mortality", io.mortality}, {"hr_prior", io.hr_prior}}) {
    if (path.empty()) throw ValidationError(std::string("config: io.") + role + " is required (or pass --data)");
    if (!fs::exists(path)) throw IoError(std::string("missing input ") + role + ": " + path.string());
    ctx.inputs[role] = path;
  }
  Inputs in;
  in.survey = load_survey_table(io.survey, spec, io.use_weights);
  in.mortality = std::make_shared<const MortalityTable>(load_mortality(io.mortality));
  in.hazard = load_hr_prior(io.hr_prior);
  return in;
}

std::string tag(Sex s) { return std::string(to_string(s)); }

Progress progress_for(const std::string& prefix) {
  return [prefix](const std::string& s) { log(prefix + s); };
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = rows.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k));
  return m;
}

json map_json(const CalibrationProblem& problem, const MapEstimate& map) {
  const auto& v = map.theta;
  return {{"names", problem.layout().names()},
          {"theta", std::vector<double>(v.data(), v.data() + v.size())},
          {"fixed", map.fixed},
          {"log_posterior", map.log_posterior},
          {"converged", map.converged},
          {"restarts", map.restarts},
          {"hessian_repaired", map.hessian_repaired},
          {"hessian", matrix_json(map.hessian)},
          {"covariance", matrix_json(map.covariance)}};
}

MapEstimate map_from(const json& j, const CalibrationProblem& problem) {
  MapEstimate m;
  const auto theta = j.at("theta").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(theta.size()) != problem.layout().size() ||
      j.at("names").get<std::vector<std::string>>() != problem.layout().names())
    throw ValidationError("MAP file does not match the configured model");
  m.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
  m.fixed = j.at("fixed").get<std::vector<bool>>();
  m.log_posterior = j.at("log_posterior").get<double>();
  m.converged = j.at("converged").get<bool>();
  m.hessian = matrix_from(j.at("hessian"));
  m.covariance = matrix_from(j.at("covariance"));
  return m;
}

void write_chains(const fs::path& path, const CalibrationProblem& problem, const ChainSet& set) {
  CsvTable t;
  t.header = {"chain", "iteration"};
  for (const auto& n : problem.layout().names()) t.header.push_back(n);
  t.header.push_back("log_posterior");
  for (int c = 0; c < set.chains(); ++c)
    for (long it = 0; it < set.length(); ++it) {
      std::vector<std::string> row{std::to_string(c), std::to_string(it)};
      const auto d = set.draw(c, it);
      for (Eigen::Index i = 0; i < d.size(); ++i) row.push_back(format_double(d(i)));
      row.push_back(format_double(set.log_target[static_cast<std::size_t>(c)][static_cast<std::size_t>(it)]));
      t.rows.push_back(std::move(row));
    }
  write_csv(path, t);
}

void write_diagnostics(const fs::path& path, const CalibrationProblem& problem, const CalibrationResult& r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const ChainSet& s = r.chains;
  out << std::setprecision(6);
  out << "sex: " << tag(r.sex) << "\n";
  out << "chains: " << s.chains() << "\n";
  out << "burn_in_iterations: " << s.burn_in << "\n";
  out << "burn_in_sub_intervals: " << s.adaptation.size() << "\n";
  out << "post_iterations: " << s.post_length() << "\n";
  out << "solve_failures: " << s.solve_failures << "\n";
  out << "map_converged: " << (r.map.converged ? "true" : "false") << "\n";
  out << "map_hessian_repaired: " << (r.map.hessian_repaired ? "true" : "false") << "\n";
  out << "max_rhat: " << s.diagnostics.max_rhat() << "\n";
  out << "min_ess: " << s.diagnostics.min_ess() << "\n";
  out << "blocks:\n";
  for (std::size_t b = 0; b < s.final_blocks.size(); ++b)
    out << "  " << s.final_blocks[b].name << ": scale " << s.final_blocks[b].scale << ", acceptance "
        << s.post_acceptance[b] << "\n";
  out << "components:\n";
  for (Eigen::Index i = 0; i < s.dim; ++i)
    out << "  " << problem.layout().names()[i] << ": rhat " << s.diagnostics.rhat[static_cast<std::size_t>(i)]
        << ", ess " << s.diagnostics.ess[static_cast<std::size_t>(i)] << "\n";
  out << "adaptation:\n";
  for (const auto& a : s.adaptation) {
    out << "  k " << a.interval << " max_rhat " << a.max_rhat;
    for (std::size_t b = 0; b < a.beta.size(); ++b) out << " beta " << a.beta[b] << " acc " << a.acceptance[b];
    out << "\n";
  }
}

ModelSpec run_model(const fs::path& dir) { return spec_from_json(read_json(dir / "model.json")); }

std::vector<ParameterVector> run_draws(const fs::path& dir, const ModelSpec& spec, Sex sex) {
  return read_parameter_draws(dir / ("posterior_" + tag(sex) + ".csv"), spec);
}

std::vector<int> every(int from, int to, int step) {
  std::vector<int> v;
  for (int x = from; x <= to; x += step) v.push_back(x);
  return v;
}

}  // namespace

void cmd_simulate(const RunOptions& opt) {
  Context ctx = open(opt);
  const CalibrationConfig& c = ctx.config;
  if (!c.synthetic) throw ValidationError("simulate requires a 'synthetic' config section");
  const SyntheticSettings& syn = *c.synthetic;
  const auto& births = syn.design.birth_years;
  const int year_lo = *std::min_element(births.begin(), births.end());

  MortalityTable mortality;
  if (!c.io.mortality.empty()) {
    mortality = load_mortality(c.io.mortality);
    ctx.inputs["mortality"] = c.io.mortality;
  } else {
    mortality = MortalityTable::gompertz(c.model.start_age, c.model.end_age, year_lo, syn.mortality_year_hi);
  }

  HazardRatioPrior hazard(c.model.hr_age_groups);
  if (!c.io.hr_prior.empty()) {
    hazard = load_hr_prior(c.io.hr_prior);
    ctx.inputs["hr_prior"] = c.io.hr_prior;
  } else {
    std::map<Sex, ParameterVector> truth;
    for (Sex s : c.sexes) truth[s] = syn.truth.at(s);
    RandomStream rng = RandomStream::derive(c.sampler.seed, 1);
    hazard = synthetic_hr_prior(c.model, truth, syn.hr_prior_sd, rng);
  }

  log("simulating " + std::to_string(syn.design.waves.size()) + " waves x " + std::to_string(births.size()) +
      " cohorts");
  RandomStream rng = RandomStream::derive(c.sampler.seed, 2);
  const SurveyCellTable table = generate_synthetic(c.model, syn.truth, mortality, syn.design, rng);
  write_survey_rows(opt.out / "survey.csv", table.rows);
  write_mortality(opt.out / "mortality.csv", mortality);
  write_hr_prior(opt.out / "hr_prior.csv", hazard);
  json truth{{"model", spec_to_json(c.model)}};
  for (const auto& [sex, p] : syn.truth) truth["truth"][tag(sex)] = params_to_json(p);
  write_json(opt.out / "truth.json", truth);
  write_manifest(ctx, "simulate");
  log("wrote " + std::to_string(table.cells.size()) + " cells to " + opt.out.string());
}

void cmd_calibrate(const RunOptions& opt) {
  Context ctx = open(opt);
  const CalibrationConfig& c = ctx.config;
  const Inputs in = load_inputs(ctx, c.model);
  write_json(opt.out / "model.json", spec_to_json(c.model));
  for (Sex sex : c.sexes) {
    const auto problem = make_problem(c.model, sex, in.survey.cells, in.mortality, in.hazard);
    log(tag(sex) + ": " + std::to_string(problem->cells().size()) + " cells, " +
        std::to_string(problem->cohorts().size()) + " cohorts, " + std::to_string(problem->layout().size()) +
        " parameters");
    CalibrationResult r;
    try {
      r = calibrate(problem, c.sampler, progress_for(""));
    } catch (const NonConvergenceError& e) {
      std::ofstream(opt.out / ("diagnostics_" + tag(sex) + ".txt")) << "error: " << e.what() << "\n" << e.details();
      write_manifest(ctx, "calibrate");
      throw;
    }
    write_json(opt.out / ("map_" + tag(sex) + ".json"), map_json(*problem, r.map));
    write_chains(opt.out / ("chains_" + tag(sex) + ".csv"), *problem, r.chains);
    write_parameter_draws(opt.out / ("posterior_" + tag(sex) + ".csv"), c.model, r.sample.draws,
                          r.sample.per_chain);
    write_diagnostics(opt.out / ("diagnostics_" + tag(sex) + ".txt"), *problem, r);
    std::ostringstream os;
    os << tag(sex) << ": max R-hat " << r.chains.diagnostics.max_rhat() << ", min ESS "
       << r.chains.diagnostics.min_ess() << ", " << r.sample.draws.size() << " culled draws";
    log(os.str());
  }
  write_manifest(ctx, "calibrate");
}

void cmd_profile(const RunOptions& opt) {
  Context ctx = open(opt);
  const CalibrationConfig& c = ctx.config;
  const Inputs in = load_inputs(ctx, c.model);
  CsvTable report;
  report.header = {"sex", "component", "classification", "confidence_level", "map_value", "sd", "all_converged"};
  for (Sex sex : c.sexes) {
    const auto problem = make_problem(c.model, sex, in.survey.cells, in.mortality, in.hazard);
    MapEstimate map;
    if (!opt.map.empty()) {
      check_upstream(opt.map, ctx);
      const fs::path file = opt.map / ("map_" + tag(sex) + ".json");
      map = map_from(read_json(file), *problem);
      ctx.inputs["map_" + tag(sex)] = file;
    } else {
      map = find_map(*problem, progress_for(""));
    }
    const auto curves = profile_all(*problem, map, c.profiling, progress_for(""));
    CsvTable grid;
    grid.header = {"component", "t", "pd", "iterations", "converged"};
    for (const auto& cv : curves) {
      const std::string name = problem->layout().names()[cv.component];
      for (std::size_t g = 0; g < cv.t.size(); ++g)
        grid.rows.push_back({name, format_double(cv.t[g]), format_double(cv.pd[g]), std::to_string(cv.iterations[g]),
                             cv.converged[g] ? "true" : "false"});
      report.rows.push_back({tag(sex), name, std::string(to_string(cv.classification)),
                             format_double(cv.confidence_level), format_double(cv.map_value), format_double(cv.sd),
                             cv.all_converged() ? "true" : "false"});
    }
    write_csv(opt.out / ("profile_" + tag(sex) + ".csv"), grid);
  }
  write_csv(opt.out / "profile_report.csv", report);
  write_manifest(ctx, "profile");
}

void cmd_overlap(const RunOptions& opt) {
  Context ctx = open(opt);
  const CalibrationConfig& c = ctx.config;
  if (opt.posterior.empty()) throw ValidationError("overlap requires --posterior DIR");
  const Inputs in = load_inputs(ctx, c.model);
  check_upstream(opt.posterior, ctx);
  const ModelSpec spec = run_model(opt.posterior);
  CsvTable t;
  t.header = {"sex", "component", "statistic", "weak"};
  for (Sex sex : c.sexes) {
    const auto problem = make_problem(spec, sex, in.survey.cells, in.mortality, in.hazard);
    const auto draws = run_draws(opt.posterior, spec, sex);
    ctx.inputs["posterior_" + tag(sex)] = opt.posterior / ("posterior_" + tag(sex) + ".csv");
    const auto& layout = problem->layout();
    for (Eigen::Index i = 0; i < layout.size(); ++i) {
      const PriorMarginal prior = coordinate_prior(*problem, i);
      if (!prior.proper) continue;
      std::vector<double> x;
      for (const auto& p : draws) x.push_back(layout.to_coordinates(p)(i));
      const OverlapResult r = overlap(prior, x);
      t.rows.push_back({tag(sex), layout.names()[i], format_double(r.statistic), r.weak ? "true" : "false"});
    }
  }
  write_csv(opt.out / "overlap.csv", t);
  write_manifest(ctx, "overlap");
}

void cmd_dic(const RunOptions& opt) {
  Context ctx = open(opt);
  const CalibrationConfig& c = ctx.config;
  if (opt.runs.empty()) throw ValidationError("dic requires at least one --run DIR");
  struct Entry {
    std::string model;
    Sex sex;
    double dic;
  };
  std::vector<Entry> entries;
  std::optional<Inputs> in;
  for (std::size_t k = 0; k < opt.runs.size(); ++k) {
    const fs::path& dir = opt.runs[k];
    check_upstream(dir, ctx);
    const ModelSpec spec = run_model(dir);
    in = load_inputs(ctx, spec);
    for (Sex sex : c.sexes) {
      const auto problem = make_problem(spec, sex, in->survey.cells, in->mortality, in->hazard);
      PosteriorSample sample;
      sample.draws = run_draws(dir, spec, sex);
      ctx.inputs["run" + std::to_string(k) + "_" + tag(sex)] = dir / ("posterior_" + tag(sex) + ".csv");
      entries.push_back({spec.label, sex, sample_dic(*problem, sample)});
      log("DIC " + spec.label + " " + tag(sex) + ": " + format_double(entries.back().dic));
    }
  }
  CsvTable t;
  t.header = {"model", "sex", "dic", "delta_from_best"};
  for (const auto& e : entries) {
    double best = e.dic;
    for (const auto& o : entries)
      if (o.sex == e.sex) best = std::min(best, o.dic);
    t.rows.push_back({e.model, tag(e.sex), format_double(e.dic), format_double(e.dic - best)});
  }
  write_csv(opt.out / "dic.csv", t);
  write_manifest(ctx, "dic");
}

void cmd_summarize(const RunOptions& opt) {
  Context ctx = open(opt);
  const CalibrationConfig& c = ctx.config;
  if (opt.posterior.empty()) throw ValidationError("summarize requires --posterior DIR");
  const Inputs in = load_inputs(ctx, c.model);
  check_upstream(opt.posterior, ctx);
  const ModelSpec spec = run_model(opt.posterior);

  SamplesBySex samples;
  int birth_lo = std::numeric_limits<int>::max(), birth_hi = std::numeric_limits<int>::min();
  int year_lo = birth_lo, year_hi = birth_hi;
  for (const auto& cell : in.survey.cells) {
    birth_lo = std::min(birth_lo, cell.birth_year);
    birth_hi = std::max(birth_hi, cell.birth_year);
    year_lo = std::min(year_lo, cell.birth_year + cell.age);
    year_hi = std::max(year_hi, cell.birth_year + cell.age);
  }
  if (in.survey.cells.empty()) throw ValidationError("survey has no cells");
  std::vector<SummaryRow> predictive, residuals;
  for (Sex sex : c.sexes) {
    samples[sex] = run_draws(opt.posterior, spec, sex);
    ctx.inputs["posterior_" + tag(sex)] = opt.posterior / ("posterior_" + tag(sex) + ".csv");
    const auto problem = make_problem(spec, sex, in.survey.cells, in.mortality, in.hazard);
    RandomStream rng = RandomStream::derive(c.sampler.seed, 7 + static_cast<std::uint64_t>(sex == Sex::male));
    const auto rows = predictive_table(*problem, samples[sex], rng);
    predictive.insert(predictive.end(), rows.begin(), rows.end());

    const ParameterVector mean = posterior_mean(samples[sex]);
    const auto probs = problem->proportions(mean);
    for (const auto& f : residual_summary(problem->cells(), probs))
      residuals.push_back({"residual_" + f.name, tag(sex), {f.mean, f.mean - f.sd, f.mean + f.sd}, std::nullopt});
  }
  write_summary(opt.out / "initiation.csv", initiation_table(spec, samples, every(birth_lo, birth_hi, 10)));
  write_summary(opt.out / "quit_rates.csv",
                quit_rate_table(spec, samples, {30, 50, 70}, every(year_lo - year_lo % 10 + 10, year_hi, 10)));
  write_summary(opt.out / "switch_rates.csv", switch_rate_table(spec, samples));
  write_summary(opt.out / "predictive.csv", predictive);
  write_summary(opt.out / "residuals.csv", residuals);
  write_manifest(ctx, "summarize");
}

}  // namespace cohortcal::cli
