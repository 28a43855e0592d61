#include "cohortcal/data_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "cohortcal/cohort.hpp"
#include "cohortcal/errors.hpp"
#include "cohortcal/numerics.hpp"

namespace cohortcal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + " line " + std::to_string(line) + ": ";
}

double parse_number(const std::string& s, const std::string& ctx) {
  if (s.empty()) throw ValidationError(ctx + "empty numeric field");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw ValidationError(ctx + "not a number: '" + s + "'");
  return v;
}

int parse_int(const std::string& s, const std::string& ctx) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw ValidationError(ctx + "not an integer: '" + s + "'");
  return v;
}

Sex parse_sex_at(const std::string& s, const std::string& ctx) {
  try {
    return parse_sex(s);
  } catch (const ValidationError& e) {
    throw ValidationError(ctx + e.what());
  }
}

void require_header(const CsvTable& t, const std::vector<std::string>& expected, const fs::path& path) {
  if (t.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw ValidationError(path.string() + ": expected header '" + want + "'");
  }
}

std::string hr_component(char kind, int age) { return std::string(1, kind) + ":" + std::to_string(age); }

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  std::size_t n = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw ValidationError(where(path, n) + "expected " + std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.lines.push_back(n);
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  if (!have_header) throw ValidationError(path.string() + ": missing header row");
  return t;
}

void write_csv(const fs::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  auto put = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
    out << '\n';
  };
  put(table.header);
  for (const auto& r : table.rows) put(r);
  if (!out) throw IoError("write failure on " + path.string());
}

namespace {
const std::vector<std::string> kSurveyHeader{"survey_id", "sex",   "age",        "birth_year",
                                             "category",  "count", "weight_sum", "weight_sq_sum"};
const std::vector<std::string> kMortalityHeader{"sex", "year", "age", "rate"};
}  // namespace

std::vector<SurveyRow> read_survey_rows(const fs::path& path) {
  const CsvTable t = read_csv(path);
  require_header(t, kSurveyHeader, path);
  std::vector<SurveyRow> rows;
  rows.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const std::string ctx = where(path, t.lines[i]);
    SurveyRow r;
    r.survey_id = f[0];
    r.sex = parse_sex_at(f[1], ctx);
    r.age = parse_int(f[2], ctx);
    r.birth_year = parse_int(f[3], ctx);
    r.category = f[4];
    r.count = parse_number(f[5], ctx);
    if (f[6].empty() != f[7].empty()) throw ValidationError(ctx + "weight_sum and weight_sq_sum must both be given");
    r.weight_sum = f[6].empty() ? r.count : parse_number(f[6], ctx);
    r.weight_sq_sum = f[7].empty() ? r.count : parse_number(f[7], ctx);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_survey_rows(const fs::path& path, const std::vector<SurveyRow>& rows) {
  CsvTable t;
  t.header = kSurveyHeader;
  for (const auto& r : rows)
    t.rows.push_back({r.survey_id, std::string(to_string(r.sex)), std::to_string(r.age), std::to_string(r.birth_year),
                      r.category, format_double(r.count), format_double(r.weight_sum),
                      format_double(r.weight_sq_sum)});
  write_csv(path, t);
}

SurveyCellTable load_survey_table(const fs::path& path, const ModelSpec& spec, bool use_weights) {
  auto rows = read_survey_rows(path);
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].age < spec.start_age || rows[i].age > spec.end_age)
      throw ValidationError(path.string() + ": survey row " + std::to_string(i + 1) + ": age " +
                            std::to_string(rows[i].age) + " outside [" + std::to_string(spec.start_age) + ", " +
                            std::to_string(spec.end_age) + "]");
  SurveyCellTable table = build_cell_table(std::move(rows), spec.quit_group_count(), use_weights);
  for (const auto& c : table.cells) {
    double s = 0.0;
    for (double p : c.proportions) s += p;
    if (!(std::abs(s - 1.0) <= 1e-9))
      throw ValidationError(path.string() + ": cell (" + c.survey_id + ", age " + std::to_string(c.age) +
                            ", born " + std::to_string(c.birth_year) + ") proportions do not sum to 1");
  }
  return table;
}

MortalityTable load_mortality(const fs::path& path) {
  const CsvTable t = read_csv(path);
  require_header(t, kMortalityHeader, path);
  std::vector<MortalityRow> rows;
  rows.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    const std::string ctx = where(path, t.lines[i]);
    rows.push_back({parse_sex_at(f[0], ctx), parse_int(f[1], ctx), parse_int(f[2], ctx), parse_number(f[3], ctx)});
  }
  if (rows.empty()) throw ValidationError(path.string() + ": no mortality rows");
  try {
    return MortalityTable::from_rows(rows);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_mortality(const fs::path& path, const MortalityTable& table) {
  CsvTable t;
  t.header = kMortalityHeader;
  for (const auto& r : table.rows())
    t.rows.push_back({std::string(to_string(r.sex)), std::to_string(r.year), std::to_string(r.age),
                      format_double(r.rate)});
  write_csv(path, t);
}

HazardRatioPrior load_hr_prior(const fs::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() < 5 || t.header[0] != "sex" || t.header[1] != "component" || t.header[2] != "mean")
    throw ValidationError(path.string() + ": expected header 'sex,component,mean,<C:age...>,<F:age...>'");
  const std::size_t d = t.header.size() - 3;
  if (d % 2 != 0) throw ValidationError(path.string() + ": odd number of hazard-ratio components");
  const std::size_t h = d / 2;
  std::vector<int> groups;
  for (std::size_t j = 0; j < d; ++j) {
    const std::string& name = t.header[3 + j];
    const char kind = j < h ? 'C' : 'F';
    if (name.size() < 3 || name[0] != kind || name[1] != ':')
      throw ValidationError(path.string() + ": covariance column '" + name + "' out of order");
    const int age = parse_int(name.substr(2), path.string() + ": ");
    if (j < h) groups.push_back(age);
    else if (age != groups[j - h])
      throw ValidationError(path.string() + ": former-smoker groups differ from current-smoker groups");
  }
  HazardRatioPrior prior(groups);
  std::map<Sex, std::vector<std::size_t>> by_sex;
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    by_sex[parse_sex_at(t.rows[i][0], where(path, t.lines[i]))].push_back(i);
  if (by_sex.empty()) throw ValidationError(path.string() + ": no prior rows");
  for (const auto& [sex, idx] : by_sex) {
    if (idx.size() != d)
      throw ValidationError(path.string() + ": " + std::string(to_string(sex)) + " block needs " +
                            std::to_string(d) + " rows");
    Eigen::VectorXd mean(static_cast<Eigen::Index>(d));
    Eigen::MatrixXd cov(mean.size(), mean.size());
    for (std::size_t k = 0; k < d; ++k) {
      const auto& f = t.rows[idx[k]];
      const std::string ctx = where(path, t.lines[idx[k]]);
      if (f[1] != t.header[3 + k]) throw ValidationError(ctx + "expected component '" + t.header[3 + k] + "'");
      mean(static_cast<Eigen::Index>(k)) = parse_number(f[2], ctx);
      for (std::size_t j = 0; j < d; ++j)
        cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = parse_number(f[3 + j], ctx);
    }
    try {
      prior.set(sex, std::move(mean), std::move(cov));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": " + std::string(to_string(sex)) + ": " + e.what());
    }
  }
  return prior;
}

void write_hr_prior(const fs::path& path, const HazardRatioPrior& prior) {
  CsvTable t;
  t.header = {"sex", "component", "mean"};
  std::vector<std::string> names;
  for (char kind : {'C', 'F'})
    for (int a : prior.age_groups()) names.push_back(hr_component(kind, a));
  t.header.insert(t.header.end(), names.begin(), names.end());
  for (Sex s : {Sex::female, Sex::male}) {
    if (!prior.has(s)) continue;
    const auto& m = prior.mean(s);
    const auto& c = prior.covariance(s);
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      std::vector<std::string> row{std::string(to_string(s)), names[static_cast<std::size_t>(k)],
                                   format_double(m(k))};
      for (Eigen::Index j = 0; j < m.size(); ++j) row.push_back(format_double(c(k, j)));
      t.rows.push_back(std::move(row));
    }
  }
  write_csv(path, t);
}

std::vector<std::string> parameter_names(const ModelSpec& spec) {
  std::vector<std::string> n{"p_former", "init_intercept"};
  for (int j = 0; j < spec.df_init; ++j) n.push_back("init_weight[" + std::to_string(j + 1) + "]");
  n.push_back("quit_intercept");
  for (int j = 0; j < spec.df_quit_age; ++j) n.push_back("quit_age_weight[" + std::to_string(j + 1) + "]");
  for (int j = 0; j < spec.df_quit_year; ++j) n.push_back("quit_year_weight[" + std::to_string(j + 1) + "]");
  for (int g = 0; g < spec.switching_group_count(); ++g) n.push_back("switch_rate[" + std::to_string(g) + "]");
  for (int a : spec.hr_age_groups) n.push_back("hr_current[" + std::to_string(a) + "]");
  for (int a : spec.hr_age_groups) n.push_back("hr_former[" + std::to_string(a) + "]");
  n.push_back("sigma_init");
  n.push_back("sigma_quit");
  return n;
}

std::vector<double> flatten(const ParameterVector& p) {
  std::vector<double> v{p.p_former, p.init_intercept};
  auto add = [&v](const Eigen::VectorXd& x) { v.insert(v.end(), x.data(), x.data() + x.size()); };
  add(p.init_weights);
  v.push_back(p.quit_intercept);
  add(p.quit_age_weights);
  add(p.quit_year_weights);
  add(p.switch_rates);
  add(p.hr_current);
  add(p.hr_former);
  v.push_back(p.sigma_init);
  v.push_back(p.sigma_quit);
  return v;
}

ParameterVector unflatten(const ModelSpec& spec, const std::vector<double>& values) {
  if (values.size() != parameter_names(spec).size())
    throw ValidationError("parameter vector has " + std::to_string(values.size()) + " entries, model " + spec.label +
                          " needs " + std::to_string(parameter_names(spec).size()));
  ParameterVector p = ParameterVector::zeros(spec);
  std::size_t k = 0;
  auto take = [&](Eigen::VectorXd& x) {
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = values[k++];
  };
  p.p_former = values[k++];
  p.init_intercept = values[k++];
  take(p.init_weights);
  p.quit_intercept = values[k++];
  take(p.quit_age_weights);
  take(p.quit_year_weights);
  take(p.switch_rates);
  take(p.hr_current);
  take(p.hr_former);
  p.sigma_init = values[k++];
  p.sigma_quit = values[k++];
  return p;
}

void write_parameter_draws(const fs::path& path, const ModelSpec& spec, const std::vector<ParameterVector>& draws,
                           int per_chain) {
  if (per_chain <= 0) throw ValidationError("draws per chain must be positive");
  CsvTable t;
  t.header = {"chain"};
  for (auto& n : parameter_names(spec)) t.header.push_back(n);
  for (std::size_t i = 0; i < draws.size(); ++i) {
    std::vector<std::string> row{std::to_string(i / static_cast<std::size_t>(per_chain))};
    for (double x : flatten(draws[i])) row.push_back(format_double(x));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

std::vector<ParameterVector> read_parameter_draws(const fs::path& path, const ModelSpec& spec, int* per_chain) {
  const CsvTable t = read_csv(path);
  std::vector<std::string> expected{"chain"};
  for (auto& n : parameter_names(spec)) expected.push_back(n);
  require_header(t, expected, path);
  std::vector<ParameterVector> out;
  std::map<int, int> counts;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string ctx = where(path, t.lines[i]);
    ++counts[parse_int(t.rows[i][0], ctx)];
    std::vector<double> v;
    for (std::size_t j = 1; j < t.rows[i].size(); ++j) v.push_back(parse_number(t.rows[i][j], ctx));
    out.push_back(unflatten(spec, v));
    out.back().validate(spec);
  }
  if (per_chain) {
    *per_chain = counts.empty() ? 0 : counts.begin()->second;
    for (const auto& [c, n] : counts)
      if (n != *per_chain) throw ValidationError(path.string() + ": chains have unequal draw counts");
  }
  return out;
}

double SyntheticDesign::deff(std::size_t wave) const {
  return design_effect.size() == 1 ? design_effect[0] : design_effect.at(wave);
}

void SyntheticDesign::validate() const {
  if (sexes.empty()) throw ValidationError("synthetic design needs at least one sex");
  if (waves.empty() || birth_years.empty()) throw ValidationError("synthetic design needs waves and birth years");
  if (!(n_per_cell >= 0) || !std::isfinite(n_per_cell) || n_per_cell != std::floor(n_per_cell))
    throw ValidationError("synthetic cell size must be a non-negative integer");
  if (design_effect.size() != 1 && design_effect.size() != waves.size())
    throw ValidationError("design_effect needs one value or one per wave");
  for (double d : design_effect)
    if (!(d >= 1.0) || !std::isfinite(d)) throw ValidationError("design effects must be >= 1");
}

HazardRatioPrior synthetic_hr_prior(const ModelSpec& spec, const std::map<Sex, ParameterVector>& truth, double sd,
                                    RandomStream& rng) {
  HazardRatioPrior hazard(spec.hr_age_groups);
  for (const auto& [sex, p] : truth) {
    Eigen::VectorXd mean(2 * spec.hr_group_count());
    mean << p.hr_current.array().log().matrix(), p.hr_former.array().log().matrix();
    mean += sd * rng.normal_vector(mean.size());
    const auto d = mean.size();
    hazard.set(sex, mean, Eigen::MatrixXd::Identity(d, d) * sd * sd);
  }
  return hazard;
}

SurveyCellTable generate_synthetic(const ModelSpec& spec, const std::map<Sex, ParameterVector>& truth,
                                   const MortalityTable& mortality, const SyntheticDesign& design, RandomStream& rng) {
  spec.validate();
  design.validate();
  std::vector<SurveyRow> rows;
  if (design.n_per_cell == 0) return build_cell_table(rows, spec.quit_group_count());
  const int groups = spec.quit_group_count();
  for (Sex sex : design.sexes) {
    const auto it = truth.find(sex);
    if (it == truth.end()) throw ValidationError("no truth given for " + std::string(to_string(sex)));
    it->second.validate(spec);
    if (!mortality.has(sex)) throw ValidationError("mortality table lacks " + std::string(to_string(sex)));

    struct Pending {
      std::size_t wave;
      CellKey key;
    };
    std::vector<Pending> pending;
    std::vector<CellKey> keys;
    for (std::size_t w = 0; w < design.waves.size(); ++w)
      for (int c : design.birth_years) {
        const int age = design.waves[w] - c;
        if (age < spec.start_age || age > spec.end_age) continue;
        pending.push_back({w, {sex, age, c}});
        keys.push_back({sex, age, c});
      }
    std::vector<CellProbabilities> probs;
    try {
      probs = model_proportions_map(spec, it->second, mortality, keys);
    } catch (const SolveError& e) {
      throw ValidationError(std::string("synthetic design outside mortality coverage: ") + e.what());
    }

    for (std::size_t i = 0; i < pending.size(); ++i) {
      const auto& [w, key] = pending[i];
      std::vector<double> m{probs[i].triple[0], probs[i].triple[1]};
      std::vector<std::string> cats{"never", "current"};
      if (design.by_group) {
        for (int g = 0; g < groups; ++g) {
          m.push_back(probs[i].former_by_group.at(static_cast<std::size_t>(g)));
          cats.push_back("ex:" + std::to_string(g));
        }
      } else {
        m.push_back(probs[i].triple[2]);
        cats.push_back("ex");
      }
      const double n = design.n_per_cell;
      const double deff = design.deff(w);
      const auto counts = predictive_counts_sample(n, n / deff, clamp_probabilities(m), rng);
      for (std::size_t j = 0; j < cats.size(); ++j) {
        SurveyRow r;
        r.survey_id = "S" + std::to_string(design.waves[w]);
        r.sex = sex;
        r.age = key.age;
        r.birth_year = key.birth_year;
        r.category = cats[j];
        r.count = counts[j];
        r.weight_sum = counts[j];
        r.weight_sq_sum = counts[j] * deff;
        rows.push_back(std::move(r));
      }
    }
  }
  return build_cell_table(std::move(rows), groups);
}

void CalibrationConfig::validate() const {
  model.validate();
  sampler.validate();
  if (sexes.empty()) throw ValidationError("config: no sexes selected");
  if (!(profiling.half_width_sd > 0)) throw ValidationError("config: profiling.half_width_sd must be positive");
  if (profiling.grid_points < 3 || profiling.grid_points % 2 == 0)
    throw ValidationError("config: profiling.grid_points must be odd and at least 3");
  if (!(profiling.alpha > 0 && profiling.alpha < 1)) throw ValidationError("config: profiling.alpha must lie in (0, 1)");
  if (synthetic) {
    synthetic->design.validate();
    if (!(synthetic->hr_prior_sd > 0)) throw ValidationError("config: synthetic.hr_prior_sd must be positive");
    for (const auto& [sex, p] : synthetic->truth) p.validate(model);
  }
}

namespace {

Eigen::VectorXd vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
std::vector<double> stdvec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config: section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ValidationError("config: unknown key '" + section + "." + k + "'");
  }
}

std::vector<int> year_list(const json& j) {
  if (j.is_array()) return j.get<std::vector<int>>();
  check_keys(j, "range", {"from", "to", "step"});
  const int from = j.at("from").get<int>(), to = j.at("to").get<int>();
  const int step = j.value("step", 1);
  if (step <= 0 || to < from) throw ValidationError("config: bad year range");
  std::vector<int> out;
  for (int y = from; y <= to; y += step) out.push_back(y);
  return out;
}

}  // namespace

json spec_to_json(const ModelSpec& s) {
  return json{{"label", s.label},
              {"df_init", s.df_init},
              {"df_quit_age", s.df_quit_age},
              {"df_quit_year", s.df_quit_year},
              {"allow_report_never", s.allow_report_never},
              {"age_at_quit_breaks", s.age_at_quit_breaks},
              {"switch_max_quit_age", s.switch_max_quit_age},
              {"delay_k", s.delay_k},
              {"start_age", s.start_age},
              {"end_age", s.end_age},
              {"quit_time_axis", s.quit_time_axis == QuitTimeAxis::cohort ? "cohort" : "calendar"},
              {"init_range", {s.init_lo, s.init_hi}},
              {"quit_age_range", {s.quit_age_lo, s.quit_age_hi}},
              {"quit_year_range", {s.quit_year_lo, s.quit_year_hi}},
              {"hr_age_groups", s.hr_age_groups}};
}

ModelSpec spec_from_json(const json& j) {
  check_keys(j, "model",
             {"label", "df_init", "df_quit_age", "df_quit_year", "allow_report_never", "age_at_quit_breaks",
              "switch_max_quit_age", "delay_k", "start_age", "end_age", "quit_time_axis", "init_range",
              "quit_age_range", "quit_year_range", "hr_age_groups"});
  ModelSpec s = ModelSpec::preset(j.value("label", std::string("D")));
  read_opt(j, "df_init", s.df_init);
  read_opt(j, "df_quit_age", s.df_quit_age);
  read_opt(j, "df_quit_year", s.df_quit_year);
  read_opt(j, "allow_report_never", s.allow_report_never);
  read_opt(j, "age_at_quit_breaks", s.age_at_quit_breaks);
  read_opt(j, "switch_max_quit_age", s.switch_max_quit_age);
  read_opt(j, "delay_k", s.delay_k);
  read_opt(j, "start_age", s.start_age);
  read_opt(j, "end_age", s.end_age);
  read_opt(j, "hr_age_groups", s.hr_age_groups);
  if (j.contains("quit_time_axis")) {
    const auto axis = j.at("quit_time_axis").get<std::string>();
    if (axis == "calendar") s.quit_time_axis = QuitTimeAxis::calendar_year;
    else if (axis == "cohort") s.quit_time_axis = QuitTimeAxis::cohort;
    else throw ValidationError("config: quit_time_axis must be 'calendar' or 'cohort'");
  }
  auto range = [&j](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto r = j.at(key).get<std::vector<double>>();
    if (r.size() != 2) throw ValidationError(std::string("config: model.") + key + " needs two values");
    lo = r[0];
    hi = r[1];
  };
  range("init_range", s.init_lo, s.init_hi);
  range("quit_age_range", s.quit_age_lo, s.quit_age_hi);
  range("quit_year_range", s.quit_year_lo, s.quit_year_hi);
  s.validate();
  return s;
}

json params_to_json(const ParameterVector& p) {
  return json{{"p_former", p.p_former},
              {"init_intercept", p.init_intercept},
              {"init_weights", stdvec(p.init_weights)},
              {"quit_intercept", p.quit_intercept},
              {"quit_age_weights", stdvec(p.quit_age_weights)},
              {"quit_year_weights", stdvec(p.quit_year_weights)},
              {"switch_rates", stdvec(p.switch_rates)},
              {"hr_current", stdvec(p.hr_current)},
              {"hr_former", stdvec(p.hr_former)},
              {"sigma_init", p.sigma_init},
              {"sigma_quit", p.sigma_quit}};
}

ParameterVector params_from_json(const ModelSpec& spec, const json& j) {
  check_keys(j, "truth",
             {"p_former", "init_intercept", "init_weights", "quit_intercept", "quit_age_weights", "quit_year_weights",
              "switch_rates", "hr_current", "hr_former", "sigma_init", "sigma_quit"});
  ParameterVector p = ParameterVector::zeros(spec);
  read_opt(j, "p_former", p.p_former);
  read_opt(j, "init_intercept", p.init_intercept);
  read_opt(j, "quit_intercept", p.quit_intercept);
  read_opt(j, "sigma_init", p.sigma_init);
  read_opt(j, "sigma_quit", p.sigma_quit);
  if (j.contains("init_weights")) p.init_weights = vec(j["init_weights"]);
  if (j.contains("quit_age_weights")) p.quit_age_weights = vec(j["quit_age_weights"]);
  if (j.contains("quit_year_weights")) p.quit_year_weights = vec(j["quit_year_weights"]);
  if (j.contains("switch_rates")) p.switch_rates = vec(j["switch_rates"]);
  if (j.contains("hr_current")) p.hr_current = vec(j["hr_current"]);
  if (j.contains("hr_former")) p.hr_former = vec(j["hr_former"]);
  p.validate(spec);
  return p;
}

ParameterVector default_truth(const ModelSpec& spec, Sex sex) {
  ParameterVector p = ParameterVector::zeros(spec);
  auto fill = [](Eigen::VectorXd& v, std::initializer_list<double> vals) {
    Eigen::Index i = 0;
    for (double x : vals)
      if (i < v.size()) v(i++) = x;
  };
  p.p_former = 0.15;
  p.init_intercept = logit(sex == Sex::female ? 0.45 : 0.6);
  fill(p.init_weights, {0.3, -1.0});
  p.quit_intercept = std::log(0.02);
  fill(p.quit_age_weights, {0.5, 0.8});
  fill(p.quit_year_weights, {1.2});
  fill(p.switch_rates, {0.02, 0.005});
  const int h = spec.hr_group_count();
  for (int g = 0; g < h; ++g) {
    const double f = h == 1 ? 0.5 : static_cast<double>(g) / (h - 1);
    p.hr_current(g) = 2.8 - 0.6 * f;
    p.hr_former(g) = 1.4 - 0.2 * f;
  }
  return p;
}

CalibrationConfig parse_config(const json& j, const fs::path& base_dir, bool check_inputs) {
  try {
    check_keys(j, "config", {"model", "sexes", "sampler", "profiling", "io", "synthetic"});
    CalibrationConfig c;
    if (j.contains("model")) c.model = spec_from_json(j["model"]);
    if (j.contains("sexes")) {
      c.sexes.clear();
      for (const auto& s : j["sexes"]) c.sexes.push_back(parse_sex(s.get<std::string>()));
    }
    if (j.contains("sampler")) {
      const json& s = j["sampler"];
      check_keys(s, "sampler",
                 {"chains", "sub_interval", "tail_intervals", "target_rate", "rhat_threshold", "max_sub_intervals",
                  "beta_step", "ess_target", "ess_check_every", "max_post_iterations", "cull_per_chain",
                  "overdispersion", "seed", "workers"});
      auto& o = c.sampler;
      read_opt(s, "chains", o.chains);
      read_opt(s, "sub_interval", o.sub_interval);
      read_opt(s, "tail_intervals", o.tail_intervals);
      read_opt(s, "target_rate", o.target_rate);
      read_opt(s, "rhat_threshold", o.rhat_threshold);
      read_opt(s, "max_sub_intervals", o.max_sub_intervals);
      read_opt(s, "beta_step", o.beta_step);
      read_opt(s, "ess_target", o.ess_target);
      read_opt(s, "ess_check_every", o.ess_check_every);
      read_opt(s, "max_post_iterations", o.max_post_iterations);
      read_opt(s, "cull_per_chain", o.cull_per_chain);
      read_opt(s, "overdispersion", o.overdispersion);
      read_opt(s, "seed", o.seed);
      read_opt(s, "workers", o.workers);
    }
    if (j.contains("profiling")) {
      const json& s = j["profiling"];
      check_keys(s, "profiling", {"half_width_sd", "grid_points", "alpha", "freeze_hazard_ratios", "use_predictor"});
      read_opt(s, "half_width_sd", c.profiling.half_width_sd);
      read_opt(s, "grid_points", c.profiling.grid_points);
      read_opt(s, "alpha", c.profiling.alpha);
      read_opt(s, "freeze_hazard_ratios", c.profiling.freeze_hazard_ratios);
      read_opt(s, "use_predictor", c.profiling.use_predictor);
    }
    auto resolve = [&base_dir](const std::string& p) -> fs::path {
      fs::path q(p);
      return q.is_absolute() ? q : base_dir / q;
    };
    if (j.contains("io")) {
      const json& s = j["io"];
      check_keys(s, "io", {"survey", "mortality", "hr_prior", "use_weights"});
      if (s.contains("survey")) c.io.survey = resolve(s["survey"].get<std::string>());
      if (s.contains("mortality")) c.io.mortality = resolve(s["mortality"].get<std::string>());
      if (s.contains("hr_prior")) c.io.hr_prior = resolve(s["hr_prior"].get<std::string>());
      read_opt(s, "use_weights", c.io.use_weights);
    }
    if (j.contains("synthetic")) {
      const json& s = j["synthetic"];
      check_keys(s, "synthetic",
                 {"waves", "birth_years", "n_per_cell", "design_effect", "by_group", "truth", "hr_prior_sd",
                  "mortality_year_hi"});
      SyntheticSettings syn;
      syn.design.sexes = c.sexes;
      if (s.contains("waves")) syn.design.waves = year_list(s["waves"]);
      if (s.contains("birth_years")) syn.design.birth_years = year_list(s["birth_years"]);
      read_opt(s, "n_per_cell", syn.design.n_per_cell);
      if (s.contains("design_effect")) {
        const json& d = s["design_effect"];
        syn.design.design_effect = d.is_array() ? d.get<std::vector<double>>() : std::vector<double>{d.get<double>()};
      }
      read_opt(s, "by_group", syn.design.by_group);
      read_opt(s, "hr_prior_sd", syn.hr_prior_sd);
      read_opt(s, "mortality_year_hi", syn.mortality_year_hi);
      for (Sex sex : c.sexes) {
        const std::string key(to_string(sex));
        syn.truth[sex] = s.contains("truth") && s["truth"].contains(key) ? params_from_json(c.model, s["truth"][key])
                                                                         : default_truth(c.model, sex);
      }
      c.synthetic = std::move(syn);
    }
    c.validate();
    if (check_inputs)
      for (const fs::path* p : {&c.io.survey, &c.io.mortality, &c.io.hr_prior})
        if (!p->empty() && !fs::exists(*p)) throw IoError("config references missing file " + p->string());
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

CalibrationConfig load_config(const fs::path& path, bool check_inputs) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path(), check_inputs);
}

json config_to_json(const CalibrationConfig& c) {
  json j;
  j["model"] = spec_to_json(c.model);
  for (Sex s : c.sexes) j["sexes"].push_back(std::string(to_string(s)));
  const auto& o = c.sampler;
  j["sampler"] = {{"chains", o.chains},
                  {"sub_interval", o.sub_interval},
                  {"tail_intervals", o.tail_intervals},
                  {"target_rate", o.target_rate},
                  {"rhat_threshold", o.rhat_threshold},
                  {"max_sub_intervals", o.max_sub_intervals},
                  {"beta_step", o.beta_step},
                  {"ess_target", o.ess_target},
                  {"ess_check_every", o.ess_check_every},
                  {"max_post_iterations", o.max_post_iterations},
                  {"cull_per_chain", o.cull_per_chain},
                  {"overdispersion", o.overdispersion},
                  {"seed", o.seed},
                  {"workers", o.workers}};
  j["profiling"] = {{"half_width_sd", c.profiling.half_width_sd},
                    {"grid_points", c.profiling.grid_points},
                    {"alpha", c.profiling.alpha},
                    {"freeze_hazard_ratios", c.profiling.freeze_hazard_ratios},
                    {"use_predictor", c.profiling.use_predictor}};
  j["io"] = {{"use_weights", c.io.use_weights}};
  if (!c.io.survey.empty()) j["io"]["survey"] = c.io.survey.string();
  if (!c.io.mortality.empty()) j["io"]["mortality"] = c.io.mortality.string();
  if (!c.io.hr_prior.empty()) j["io"]["hr_prior"] = c.io.hr_prior.string();
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    json truth;
    for (const auto& [sex, p] : s.truth) truth[std::string(to_string(sex))] = params_to_json(p);
    j["synthetic"] = {{"waves", s.design.waves},
                      {"birth_years", s.design.birth_years},
                      {"n_per_cell", s.design.n_per_cell},
                      {"design_effect", s.design.design_effect},
                      {"by_group", s.design.by_group},
                      {"truth", truth},
                      {"hr_prior_sd", s.hr_prior_sd},
                      {"mortality_year_hi", s.mortality_year_hi}};
  }
  return j;
}

}  // namespace cohortcal
