#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "cohortcal/cohort.hpp"
#include "cohortcal/data_io.hpp"
#include "cohortcal/errors.hpp"
#include "test_support.hpp"

using namespace cohortcal;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("cohortcal_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

const std::string kHeader = "survey_id,sex,age,birth_year,category,count,weight_sum,weight_sq_sum\n";

ModelSpec two_group_spec() {
  ModelSpec s = ModelSpec::preset("D");
  s.hr_age_groups = {45, 70};
  return s;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(SurveyIo, HeaderOnlyFileGivesEmptyTable) {
  TempDir dir;
  write_text(dir / "s.csv", kHeader);
  const auto t = load_survey_table(dir / "s.csv", ModelSpec::preset("D"));
  EXPECT_TRUE(t.rows.empty());
  EXPECT_TRUE(t.cells.empty());
}

TEST(SurveyIo, UnitWeightCellShares) {
  TempDir dir;
  write_text(dir / "s.csv", kHeader +
                                "S1,female,30,1950,never,10,,\n"
                                "S1,female,30,1950,current,5,,\n"
                                "S1,female,30,1950,ex,5,,\n");
  const auto t = load_survey_table(dir / "s.csv", ModelSpec::preset("D"));
  ASSERT_EQ(t.cells.size(), 1u);
  EXPECT_DOUBLE_EQ(t.cells[0].proportions[0], 0.5);
  EXPECT_DOUBLE_EQ(t.cells[0].proportions[1], 0.25);
  EXPECT_DOUBLE_EQ(t.cells[0].proportions[2], 0.25);
  EXPECT_DOUBLE_EQ(t.cells[0].n_eff, 20.0);
}

TEST(SurveyIo, DuplicateKeyRejected) {
  TempDir dir;
  write_text(dir / "s.csv", kHeader +
                                "S1,female,30,1950,never,10,10,10\n"
                                "S1,female,30,1950,never,4,4,4\n");
  const auto msg = error_of([&] { load_survey_table(dir / "s.csv", ModelSpec::preset("D")); });
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
  EXPECT_NE(msg.find("survey row 2"), std::string::npos) << msg;
}

TEST(SurveyIo, SchemaErrorsNameTheRow) {
  TempDir dir;
  write_text(dir / "a.csv", kHeader + "S1,female,30,1950,never,10,10,10\nS1,female,30,1950,smoker,1,1,1\n");
  auto msg = error_of([&] { load_survey_table(dir / "a.csv", ModelSpec::preset("D")); });
  EXPECT_NE(msg.find("survey row 2"), std::string::npos) << msg;

  write_text(dir / "b.csv", kHeader + "S1,female,30,1950,never,10,10\n");
  msg = error_of([&] { load_survey_table(dir / "b.csv", ModelSpec::preset("D")); });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;

  write_text(dir / "c.csv", kHeader + "S1,female,thirty,1950,never,10,10,10\n");
  EXPECT_THROW(load_survey_table(dir / "c.csv", ModelSpec::preset("D")), ValidationError);

  write_text(dir / "d.csv", kHeader + "S1,female,12,1950,never,10,10,10\n");
  msg = error_of([&] { load_survey_table(dir / "d.csv", ModelSpec::preset("D")); });
  EXPECT_NE(msg.find("outside"), std::string::npos) << msg;

  write_text(dir / "e.csv", "survey,sex\n");
  EXPECT_THROW(load_survey_table(dir / "e.csv", ModelSpec::preset("D")), ValidationError);
  EXPECT_THROW(load_survey_table(dir / "missing.csv", ModelSpec::preset("D")), IoError);
}

TEST(SurveyIo, RoundTripIsFieldExact) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  std::vector<SurveyRow> rows;
  for (int c = 0; c < 5; ++c)
    for (const char* cat : {"never", "current", "ex"}) {
      SurveyRow r{"wave A", c % 2 ? Sex::male : Sex::female, 40 + c, 1940 + c, cat, 17.0 + c, 0, 0};
      r.weight_sum = r.count * u(rng);
      r.weight_sq_sum = r.weight_sum * r.weight_sum / r.count * u(rng) * 2;
      rows.push_back(r);
    }
  TempDir dir;
  write_survey_rows(dir / "s.csv", rows);
  const auto back = read_survey_rows(dir / "s.csv");
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].survey_id, rows[i].survey_id);
    EXPECT_EQ(back[i].sex, rows[i].sex);
    EXPECT_EQ(back[i].age, rows[i].age);
    EXPECT_EQ(back[i].birth_year, rows[i].birth_year);
    EXPECT_EQ(back[i].category, rows[i].category);
    EXPECT_EQ(back[i].count, rows[i].count);
    EXPECT_EQ(back[i].weight_sum, rows[i].weight_sum);
    EXPECT_EQ(back[i].weight_sq_sum, rows[i].weight_sq_sum);
  }
}

TEST(MortalityIo, FlatTableRoundTrips) {
  const auto flat = MortalityTable::constant(0.01, 20, 30, 1950, 1960);
  TempDir dir;
  write_mortality(dir / "m.csv", flat);
  const auto back = load_mortality(dir / "m.csv");
  EXPECT_EQ(back.rate(Sex::male, 25, 1955), 0.01);
  const auto a = flat.rows(), b = back.rows();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].sex, b[i].sex);
    EXPECT_EQ(a[i].age, b[i].age);
    EXPECT_EQ(a[i].year, b[i].year);
    EXPECT_EQ(a[i].rate, b[i].rate);
  }

  const auto g = MortalityTable::gompertz(20, 40, 1950, 1970);
  write_mortality(dir / "g.csv", g);
  EXPECT_EQ(load_mortality(dir / "g.csv").rate(Sex::female, 33, 1961), g.rate(Sex::female, 33, 1961));
}

TEST(MortalityIo, GapIsRejected) {
  TempDir dir;
  write_text(dir / "m.csv", "sex,year,age,rate\nfemale,2000,20,0.01\nfemale,2001,21,0.01\n");
  const auto msg = error_of([&] { load_mortality(dir / "m.csv"); });
  EXPECT_NE(msg.find("gap"), std::string::npos) << msg;
}

TEST(HazardPriorIo, RoundTripAndCentring) {
  HazardRatioPrior prior({45, 70});
  Eigen::MatrixXd cov(4, 4);
  cov << 0.04, 0.01, 0, 0, 0.01, 0.05, 0, 0.002, 0, 0, 0.03, 0, 0, 0.002, 0, 0.02;
  prior.set(Sex::female, Eigen::VectorXd::Zero(4), cov);
  prior.set(Sex::male, Eigen::Vector4d(std::log(2.8), std::log(2.2), std::log(1.4), std::log(1.2)), cov * 1.5);
  TempDir dir;
  write_hr_prior(dir / "hr.csv", prior);
  const auto back = load_hr_prior(dir / "hr.csv");
  EXPECT_EQ(back.age_groups(), prior.age_groups());
  for (Sex s : {Sex::female, Sex::male}) {
    EXPECT_EQ(back.mean(s), prior.mean(s));
    EXPECT_EQ(back.covariance(s), prior.covariance(s));
  }
  EXPECT_EQ(back.mean(Sex::female).array().exp().matrix(), Eigen::VectorXd::Ones(4));
}

TEST(HazardPriorIo, NegativeEigenvalueRejected) {
  TempDir dir;
  write_text(dir / "hr.csv",
             "sex,component,mean,C:45,F:45\n"
             "female,C:45,0.5,1,2\n"
             "female,F:45,0.2,2,1\n");
  EXPECT_THROW(load_hr_prior(dir / "hr.csv"), ValidationError);
  write_text(dir / "bad.csv",
             "sex,component,mean,C:45,F:45\n"
             "female,F:45,0.5,1,0\n"
             "female,C:45,0.2,0,1\n");
  EXPECT_THROW(load_hr_prior(dir / "bad.csv"), ValidationError);
}

TEST(ParameterDraws, RoundTrip) {
  const ModelSpec spec = two_group_spec();
  std::mt19937_64 rng(3);
  std::vector<ParameterVector> draws;
  for (int i = 0; i < 6; ++i) draws.push_back(testing_support::random_parameters(spec, rng));
  TempDir dir;
  write_parameter_draws(dir / "d.csv", spec, draws, 3);
  int per_chain = 0;
  const auto back = read_parameter_draws(dir / "d.csv", spec, &per_chain);
  EXPECT_EQ(per_chain, 3);
  ASSERT_EQ(back.size(), draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) EXPECT_EQ(flatten(back[i]), flatten(draws[i]));
  EXPECT_THROW(read_parameter_draws(dir / "d.csv", ModelSpec::preset("A")), ValidationError);
}

namespace {

SyntheticDesign small_design() {
  SyntheticDesign d;
  d.sexes = {Sex::female};
  d.waves = {1980, 2000};
  d.birth_years = {1930, 1950, 1975};
  d.n_per_cell = 2000;
  d.design_effect = {1.3};
  return d;
}

std::map<Sex, ParameterVector> truth_for(const ModelSpec& spec) {
  return {{Sex::female, default_truth(spec, Sex::female)}, {Sex::male, default_truth(spec, Sex::male)}};
}

}  // namespace

TEST(Synthetic, ZeroSizeCellsExcluded) {
  const ModelSpec spec = two_group_spec();
  const auto mort = MortalityTable::gompertz(20, 99, 1900, 2100);
  auto d = small_design();
  d.n_per_cell = 0;
  RandomStream rng(1);
  EXPECT_TRUE(generate_synthetic(spec, truth_for(spec), mort, d, rng).cells.empty());
}

TEST(Synthetic, CellsWithinAgeRangeAndDesignEffect) {
  const ModelSpec spec = two_group_spec();
  const auto mort = MortalityTable::gompertz(20, 99, 1900, 2100);
  RandomStream rng(2);
  const auto t = generate_synthetic(spec, truth_for(spec), mort, small_design(), rng);
  // 1975 is 5 in 1980: excluded.
  EXPECT_EQ(t.cells.size(), 5u);
  for (const auto& c : t.cells) {
    EXPECT_GE(c.age, spec.start_age);
    EXPECT_NEAR(c.n_eff, 2000 / 1.3, 1e-9);
    EXPECT_DOUBLE_EQ(c.n, 2000);
  }
}

TEST(Synthetic, LargeSampleConvergesToTruth) {
  const ModelSpec spec = two_group_spec();
  const auto mort = MortalityTable::gompertz(20, 99, 1900, 2100);
  auto d = small_design();
  d.n_per_cell = 1e6;
  d.design_effect = {1.0};
  RandomStream rng(3);
  const auto truth = truth_for(spec);
  const auto t = generate_synthetic(spec, truth, mort, d, rng);
  for (const auto& c : t.cells) {
    const CellKey key = c.key();
    const auto m = model_proportions_map(spec, truth.at(Sex::female), mort, std::span<const CellKey>(&key, 1))[0];
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(c.proportions[j], m.triple[j], 0.005);
  }
}

TEST(Synthetic, FixedSeedIsBitIdentical) {
  const ModelSpec spec = two_group_spec();
  const auto mort = MortalityTable::gompertz(20, 99, 1900, 2100);
  auto d = small_design();
  d.by_group = true;
  RandomStream a(11), b(11);
  const auto ta = generate_synthetic(spec, truth_for(spec), mort, d, a);
  const auto tb = generate_synthetic(spec, truth_for(spec), mort, d, b);
  ASSERT_EQ(ta.rows.size(), tb.rows.size());
  for (std::size_t i = 0; i < ta.rows.size(); ++i) EXPECT_EQ(ta.rows[i].count, tb.rows[i].count);
  EXPECT_EQ(ta.cells[0].categories(), 5u);
}

TEST(Synthetic, OutputPassesLoadValidation) {
  const ModelSpec spec = two_group_spec();
  const auto mort = MortalityTable::gompertz(20, 99, 1900, 2100);
  for (bool by_group : {false, true}) {
    auto d = small_design();
    d.by_group = by_group;
    d.sexes = {Sex::female, Sex::male};
    RandomStream rng(4);
    const auto t = generate_synthetic(spec, truth_for(spec), mort, d, rng);
    TempDir dir;
    write_survey_rows(dir / "s.csv", t.rows);
    const auto back = load_survey_table(dir / "s.csv", spec);
    ASSERT_EQ(back.cells.size(), t.cells.size());
    for (std::size_t i = 0; i < t.cells.size(); ++i) {
      EXPECT_EQ(back.cells[i].proportions, t.cells[i].proportions);
      EXPECT_EQ(back.cells[i].n_eff, t.cells[i].n_eff);
    }
  }
}

TEST(Synthetic, CoverageGapIsError) {
  const ModelSpec spec = two_group_spec();
  const auto mort = MortalityTable::gompertz(20, 99, 1960, 2100);
  RandomStream rng(1);
  EXPECT_THROW(generate_synthetic(spec, truth_for(spec), mort, small_design(), rng), ValidationError);
}

TEST(Config, DefaultsAndOverrides) {
  TempDir dir;
  write_text(dir / "mort.csv", "sex,year,age,rate\n");
  write_text(dir / "c.json", R"({
    "model": {"label": "C", "hr_age_groups": [45, 70]},
    "sampler": {"seed": 42, "chains": 4},
    "io": {"mortality": "mort.csv", "use_weights": false},
    "synthetic": {"waves": {"from": 1980, "to": 2010, "step": 6}, "birth_years": [1930, 1950]}
  })");
  const auto c = load_config(dir / "c.json");
  EXPECT_EQ(c.model.label, "C");
  EXPECT_EQ(c.model.df_quit_year, 1);
  EXPECT_FALSE(c.model.allow_report_never);
  EXPECT_EQ(c.sampler.seed, 42u);
  EXPECT_EQ(c.sampler.chains, 4);
  EXPECT_EQ(c.sampler.sub_interval, 10);
  EXPECT_EQ(c.sampler.ess_target, 50.0);
  EXPECT_EQ(c.sampler.cull_per_chain, 40);
  EXPECT_EQ(c.profiling.half_width_sd, 7.1);
  EXPECT_EQ(c.io.mortality, dir / "mort.csv");
  EXPECT_FALSE(c.io.use_weights);
  ASSERT_TRUE(c.synthetic);
  EXPECT_EQ(c.synthetic->design.waves, (std::vector<int>{1980, 1986, 1992, 1998, 2004, 2010}));
  EXPECT_EQ(c.synthetic->truth.size(), 2u);

  const auto again = parse_config(config_to_json(c), dir.path(), true);
  EXPECT_EQ(config_to_json(again), config_to_json(c));
}

TEST(Config, InvalidInputsRejected) {
  TempDir dir;
  write_text(dir / "a.json", R"({"sampler": {"chain": 5}})");
  EXPECT_THROW(load_config(dir / "a.json"), ValidationError);
  write_text(dir / "b.json", R"({"sampler": {"sub_interval": 0}})");
  EXPECT_THROW(load_config(dir / "b.json"), ValidationError);
  write_text(dir / "c.json", R"({"io": {"survey": "nope.csv"}})");
  EXPECT_THROW(load_config(dir / "c.json"), IoError);
  EXPECT_NO_THROW(load_config(dir / "c.json", false));
  write_text(dir / "d.json", "{ not json");
  EXPECT_THROW(load_config(dir / "d.json"), ValidationError);
  write_text(dir / "e.json", R"({"model": {"label": "Q"}})");
  EXPECT_THROW(load_config(dir / "e.json"), ValidationError);
}
