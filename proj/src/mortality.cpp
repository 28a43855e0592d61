#include "cohortcal/mortality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cohortcal/errors.hpp"

namespace cohortcal {

MortalityTable MortalityTable::from_rows(const std::vector<MortalityRow>& rows) {
  MortalityTable t;
  for (Sex s : {Sex::female, Sex::male}) {
    Block& b = t.tables_[index(s)];
    b.age_lo = b.year_lo = std::numeric_limits<int>::max();
    b.age_hi = b.year_hi = std::numeric_limits<int>::min();
    bool any = false;
    for (const auto& r : rows) {
      if (r.sex != s) continue;
      any = true;
      b.age_lo = std::min(b.age_lo, r.age);
      b.age_hi = std::max(b.age_hi, r.age);
      b.year_lo = std::min(b.year_lo, r.year);
      b.year_hi = std::max(b.year_hi, r.year);
    }
    if (!any) {
      b = Block{};
      continue;
    }
    const std::size_t width = static_cast<std::size_t>(b.year_hi - b.year_lo + 1);
    const std::size_t cells = static_cast<std::size_t>(b.age_hi - b.age_lo + 1) * width;
    b.rates.assign(cells, std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : rows) {
      if (r.sex != s) continue;
      if (!std::isfinite(r.rate) || r.rate < 0)
        throw ValidationError("mortality rate must be finite and non-negative (" + std::string(to_string(s)) +
                              ", age " + std::to_string(r.age) + ", year " + std::to_string(r.year) + ")");
      double& slot = b.rates[static_cast<std::size_t>(r.age - b.age_lo) * width + (r.year - b.year_lo)];
      if (!std::isnan(slot))
        throw ValidationError("duplicate mortality row (" + std::string(to_string(s)) + ", age " +
                              std::to_string(r.age) + ", year " + std::to_string(r.year) + ")");
      slot = r.rate;
    }
    for (std::size_t i = 0; i < cells; ++i)
      if (std::isnan(b.rates[i]))
        throw ValidationError("mortality coverage gap for " + std::string(to_string(s)) + " at age " +
                              std::to_string(b.age_lo + static_cast<int>(i / width)) + ", year " +
                              std::to_string(b.year_lo + static_cast<int>(i % width)));
  }
  return t;
}

MortalityTable MortalityTable::constant(double rate, int age_lo, int age_hi, int year_lo, int year_hi) {
  std::vector<MortalityRow> rows;
  for (Sex s : {Sex::female, Sex::male})
    for (int a = age_lo; a <= age_hi; ++a)
      for (int y = year_lo; y <= year_hi; ++y) rows.push_back({s, y, a, rate});
  return from_rows(rows);
}

MortalityTable MortalityTable::gompertz(int age_lo, int age_hi, int year_lo, int year_hi) {
  std::vector<MortalityRow> rows;
  for (Sex s : {Sex::female, Sex::male}) {
    const double level = s == Sex::female ? 2.0e-5 : 4.0e-5;
    const double makeham = s == Sex::female ? 3.0e-4 : 6.0e-4;
    for (int a = age_lo; a <= age_hi; ++a)
      for (int y = year_lo; y <= year_hi; ++y) {
        const double trend = std::exp(-0.012 * (y - 1950));
        rows.push_back({s, y, a, std::min(0.6, (makeham + level * std::exp(0.095 * (a - 20.0) + 1.4)) * trend)});
      }
  }
  return from_rows(rows);
}

bool MortalityTable::covers(Sex sex, int age, int year) const {
  const Block& b = tables_[index(sex)];
  return !b.rates.empty() && age >= b.age_lo && age <= b.age_hi && year >= b.year_lo && year <= b.year_hi;
}

double MortalityTable::rate(Sex sex, int age, int year) const {
  if (!covers(sex, age, year))
    throw SolveError("mortality coverage gap: " + std::string(to_string(sex)) + ", age " + std::to_string(age) +
                     ", year " + std::to_string(year));
  const Block& b = tables_[index(sex)];
  return b.rates[static_cast<std::size_t>(age - b.age_lo) * (b.year_hi - b.year_lo + 1) + (year - b.year_lo)];
}

std::vector<MortalityRow> MortalityTable::rows() const {
  std::vector<MortalityRow> out;
  for (Sex s : {Sex::female, Sex::male}) {
    const Block& b = tables_[index(s)];
    if (b.rates.empty()) continue;
    for (int y = b.year_lo; y <= b.year_hi; ++y)
      for (int a = b.age_lo; a <= b.age_hi; ++a) out.push_back({s, y, a, rate(s, a, y)});
  }
  return out;
}

}  // namespace cohortcal
