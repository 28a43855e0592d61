#pragma once

#include <array>
#include <vector>

#include "cohortcal/model.hpp"

namespace cohortcal {

struct MortalityRow {
  Sex sex;
  int year;
  int age;
  double rate;
};

// All-cause mortality by sex on a dense (age, calendar year) rectangle.
class MortalityTable {
 public:
  MortalityTable() = default;
  // Validates non-negative finite rates, no duplicates and full coverage of
  // the bounding rectangle for each sex present.
  static MortalityTable from_rows(const std::vector<MortalityRow>& rows);
  static MortalityTable constant(double rate, int age_lo, int age_hi, int year_lo, int year_hi);
  // Gompertz-Makeham law with a log-linear secular decline (synthetic input).
  static MortalityTable gompertz(int age_lo, int age_hi, int year_lo, int year_hi);

  bool has(Sex sex) const { return !tables_[index(sex)].rates.empty(); }
  bool covers(Sex sex, int age, int year) const;
  // Throws SolveError on a coverage gap.
  double rate(Sex sex, int age, int year) const;
  std::vector<MortalityRow> rows() const;

  int age_lo(Sex s) const { return tables_[index(s)].age_lo; }
  int age_hi(Sex s) const { return tables_[index(s)].age_hi; }
  int year_lo(Sex s) const { return tables_[index(s)].year_lo; }
  int year_hi(Sex s) const { return tables_[index(s)].year_hi; }

 private:
  struct Block {
    int age_lo = 0, age_hi = -1, year_lo = 0, year_hi = -1;
    std::vector<double> rates;  // row-major by age then year
  };
  static std::size_t index(Sex s) { return s == Sex::female ? 0 : 1; }
  std::array<Block, 2> tables_;
};

}  // namespace cohortcal
