#include <gtest/gtest.h>

#include "mspm/planner.hpp"

using namespace mspm;

namespace {

SymmetryType sym_21(int n, int k) { return SymmetryType({Block{2, n}, Block{1, k}}); }
SymmetryType sym_l1(int l, int n, int k) { return SymmetryType({Block{l, n}, Block{1, k}}); }

}  // namespace

TEST(Counts, RowColExamples) {
  EXPECT_EQ(count_rows(sym_21(100, 50), {1, 1}), 5000ull);
  EXPECT_EQ(count_cols(sym_21(100, 50), {1, 1}), 100ull);
  EXPECT_EQ(count_cols(sym_21(100, 50), {2, 1}), 1ull);  // f = d: empty products
  EXPECT_EQ(count_rows(sym_l1(4, 25, 10), {2, 1}), 3250ull);
  EXPECT_EQ(count_cols(sym_l1(4, 25, 10), {2, 1}), 325ull);
}

TEST(Counts, OverflowReportedExplicitly) {
  const SymmetryType huge({Block{8, 1000000}, Block{1, 2}});
  EXPECT_THROW(count_rows(huge, {8, 1}), std::overflow_error);
}

TEST(Codim, Examples) {
  EXPECT_EQ(codim(sym_21(100, 50), {1, 1}), 4851ull);
  EXPECT_EQ(codim(SymmetryType({Block{1, 7}}), {1}), 0ull);  // rank-one vectors fill the space
  EXPECT_EQ(codim(sym_l1(4, 25, 10), {2, 1}), 3216ull);
  EXPECT_THROW(codim(sym_21(4, 3), {0, 0}), std::invalid_argument);
}

TEST(RankBound, SpecialTwoLineBranch) {
  // four vector blocks, two singleton entries with min dimension two
  const SymmetryType sym({Block{1, 2}, Block{1, 5}, Block{1, 3}, Block{1, 3}});
  // codim = 2*5 - 1 - (1 + 4) = 4; the +1 branch applies
  EXPECT_EQ(r_of(sym, {1, 1, 0, 0}), 5ull);
  // n_col = 3*3 = 9 does not bind
  EXPECT_EQ(count_cols(sym, {1, 1, 0, 0}), 9ull);
}

TEST(RankBound, GenericBranchExamples) {
  EXPECT_EQ(r_of(sym_21(100, 50), {1, 1}), 100ull);
  EXPECT_EQ(r_of(sym_l1(4, 25, 10), {2, 1}), 325ull);
}

TEST(RankBound, BoundaryTuplesRejected) {
  EXPECT_THROW(r_of(sym_21(4, 3), {0, 0}), std::invalid_argument);
  EXPECT_THROW(r_of(sym_21(4, 3), {2, 1}), std::invalid_argument);
}

TEST(SymmetryBreaking, Examples) {
  EXPECT_TRUE(is_symmetry_breaking(SymmetryType({Block{1, 3}, Block{2, 3}, Block{1, 3}}), {1, 1, 0}));
  const SymmetryType asym({Block{1, 3}, Block{1, 3}, Block{1, 3}, Block{1, 3}});
  FlatteningTuple f(4, 0);
  while (true) {
    if (!is_zero_tuple(f) && !is_full_tuple(asym, f)) EXPECT_FALSE(is_symmetry_breaking(asym, f));
    int b = 3;
    while (b >= 0 && f[static_cast<std::size_t>(b)] == 1) f[static_cast<std::size_t>(b--)] = 0;
    if (b < 0) break;
    ++f[static_cast<std::size_t>(b)];
  }
  EXPECT_TRUE(is_symmetry_breaking(sym_21(5, 4), {1, 1}));
}

TEST(RecoveryRank, DirectCases) {
  EXPECT_EQ(r_max_of(sym_21(100, 50), {1, 1}), 100ull);
  EXPECT_GE(r_max_of(sym_21(100, 50), {1, 1}), 80ull);  // supports the rank-80 setup
  EXPECT_EQ(r_max_of(sym_l1(4, 25, 10), {2, 1}), 325ull);
  EXPECT_GE(r_max_of(sym_l1(4, 25, 10), {2, 1}), 50ull);
}

TEST(RecoveryRank, PairedCoverageAwareVsLiteral) {
  const SymmetryType sym({Block{1, 100}, Block{1, 100}, Block{1, 100}});
  const FlatteningTuple f{1, 1, 0}, fp{1, 0, 1};
  EXPECT_EQ(r_of(sym, f), 100ull);
  EXPECT_EQ(r_of(sym, fp), 100ull);
  // every index is positive in f or f', so the coverage-aware value drops the
  // degenerate d-f term that the literal minimum keeps
  EXPECT_EQ(r_max_of(sym, f, fp, true), 100ull);
  EXPECT_EQ(r_max_of(sym, f, fp, false), 0ull);
}

TEST(RecoveryRank, MissingPartnerRejected) {
  const SymmetryType sym({Block{1, 4}, Block{1, 4}, Block{1, 4}});
  EXPECT_THROW(r_max_of(sym, {1, 1, 0}), std::invalid_argument);
}

TEST(RecoveryRank, PartnerRules) {
  const SymmetryType sym({Block{1, 4}, Block{1, 4}, Block{1, 4}, Block{1, 4}});
  const FlatteningTuple f{1, 1, 0, 0};
  EXPECT_FALSE(valid_partner(sym, f, {0, 0, 1, 1}));  // equals d - f
  EXPECT_FALSE(valid_partner(sym, f, {1, 0, 0, 0}));  // dominated by f
  EXPECT_FALSE(valid_partner(sym, f, {0, 0, 1, 0}));  // no shared positive index
  EXPECT_TRUE(valid_partner(sym, f, {1, 0, 1, 0}));   // third pass anchored via index 3
  EXPECT_TRUE(valid_partner(sym, f, {1, 0, 1, 1}));
}

TEST(OptimalPlan, SymmetricPlusVectorLowOrders) {
  for (int n : {5, 10, 40}) {
    for (int k : {3, 10, 20}) {
      EXPECT_EQ(optimal_plan(sym_l1(2, n, k)).f, (FlatteningTuple{1, 1})) << "n=" << n << " k=" << k;
      EXPECT_EQ(optimal_plan(sym_l1(3, n, k)).f, (FlatteningTuple{1, 1})) << "n=" << n << " k=" << k;
    }
  }
}

TEST(OptimalPlan, FourthOrderCrossover) {
  // threshold (n^2+3n-2)/(2n-2) = 14.5417 at n = 25
  EXPECT_EQ(optimal_plan(sym_l1(4, 25, 14)).f, (FlatteningTuple{2, 1}));
  EXPECT_EQ(optimal_plan(sym_l1(4, 25, 15)).f, (FlatteningTuple{1, 1}));
  const double threshold = (25.0 * 25.0 + 3 * 25.0 - 2.0) / (2 * 25.0 - 2.0);
  EXPECT_NEAR(threshold, 14.541666666666666, 1e-12);
}

TEST(OptimalPlan, RankCurvesPiecewiseLinearInSecondDimension) {
  // r(f) over m for S^4(R^20) (x) R^m: second differences vanish away from a
  // handful of breakpoints
  const SymmetryType probe = sym_l1(4, 20, 2);
  FlatteningTuple f(2, 0);
  std::vector<FlatteningTuple> tuples;
  while (true) {
    int b = 1;
    while (b >= 0 && f[static_cast<std::size_t>(b)] == probe.block(b).exponent) f[static_cast<std::size_t>(b--)] = 0;
    if (b < 0) break;
    ++f[static_cast<std::size_t>(b)];
    if (!is_zero_tuple(f) && !is_full_tuple(probe, f)) tuples.push_back(f);
  }
  for (const FlatteningTuple& tuple : tuples) {
    std::vector<long long> curve;
    for (int m = 2; m <= 120; ++m) curve.push_back(static_cast<long long>(r_of(sym_l1(4, 20, m), tuple)));
    int breakpoints = 0;
    for (std::size_t i = 2; i < curve.size(); ++i)
      if (curve[i] - 2 * curve[i - 1] + curve[i - 2] != 0) ++breakpoints;
    EXPECT_LE(breakpoints, 3) << "tuple " << tuple_str(tuple);
  }
}

TEST(PlannerInvariants, CodimBelowRowCount) {
  for (const SymmetryType& sym : {sym_21(5, 3), sym_l1(4, 4, 3), SymmetryType({Block{1, 2}, Block{2, 3}, Block{1, 4}})}) {
    FlatteningTuple f(static_cast<std::size_t>(sym.block_count()), 0);
    while (true) {
      int b = sym.block_count() - 1;
      while (b >= 0 && f[static_cast<std::size_t>(b)] == sym.block(b).exponent) f[static_cast<std::size_t>(b--)] = 0;
      if (b < 0) break;
      ++f[static_cast<std::size_t>(b)];
      if (is_zero_tuple(f)) continue;
      EXPECT_LT(codim(sym, f), count_rows(sym, f));
      if (!is_full_tuple(sym, f)) {
        EXPECT_LE(r_of(sym, f), std::min(count_rows(sym, f), count_cols(sym, f)));
      }
    }
  }
}

TEST(PlannerInvariants, SymmetryBreakingPairingIsComplementSymmetric) {
  const SymmetryType sym({Block{2, 3}, Block{1, 2}, Block{2, 3}});
  FlatteningTuple f(3, 0);
  int checked = 0;
  while (true) {
    int b = 2;
    while (b >= 0 && f[static_cast<std::size_t>(b)] == sym.block(b).exponent) f[static_cast<std::size_t>(b--)] = 0;
    if (b < 0) break;
    ++f[static_cast<std::size_t>(b)];
    if (is_zero_tuple(f) || is_full_tuple(sym, f)) continue;
    const FlatteningTuple g = complement_tuple(sym, f);
    if (recovery_mode(sym, f) == RecoveryMode::symmetry_breaking &&
        recovery_mode(sym, g) == RecoveryMode::symmetry_breaking) {
      EXPECT_EQ(r_max_of(sym, f), r_max_of(sym, g)) << tuple_str(f);
      ++checked;
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(PlannerInvariants, OptimalPlanMatchesBruteForceEnumeration) {
  const std::vector<SymmetryType> syms{
      sym_21(6, 4),
      sym_l1(4, 5, 3),
      SymmetryType({Block{1, 3}, Block{1, 3}, Block{1, 3}}),
      SymmetryType({Block{1, 2}, Block{2, 3}, Block{1, 4}}),
      SymmetryType({Block{1, 2}, Block{1, 3}, Block{1, 2}, Block{1, 3}}),
      SymmetryType({Block{4, 3}}),
  };
  for (const SymmetryType& sym : syms) {
    // brute force over all tuples and all partner pairs
    count_t best = 0;
    std::vector<FlatteningTuple> all;
    FlatteningTuple f(static_cast<std::size_t>(sym.block_count()), 0);
    while (true) {
      int b = sym.block_count() - 1;
      while (b >= 0 && f[static_cast<std::size_t>(b)] == sym.block(b).exponent) f[static_cast<std::size_t>(b--)] = 0;
      if (b < 0) break;
      ++f[static_cast<std::size_t>(b)];
      if (!is_zero_tuple(f) && !is_full_tuple(sym, f)) all.push_back(f);
    }
    for (const FlatteningTuple& t : all) {
      const RecoveryMode mode = recovery_mode(sym, t);
      if (mode != RecoveryMode::paired) {
        best = std::max(best, r_max_of(sym, t));
      } else {
        for (const FlatteningTuple& p : all)
          if (valid_partner(sym, t, p)) best = std::max(best, r_max_of(sym, t, p, true));
      }
    }
    EXPECT_EQ(optimal_plan(sym).r_max, best) << sym.str();
  }
}

TEST(PlanTable, CsvHasRequiredColumnsAndOptimalRow) {
  const std::string csv = plan_csv(sym_21(10, 5));
  EXPECT_NE(csv.find("f,n_row,n_col,n_codim,r,symmetry_breaking,partner,r_max"), std::string::npos);
  EXPECT_NE(csv.find("\"1,1\""), std::string::npos);
  // exactly one optimal row
  std::size_t count = 0, pos = 0;
  while ((pos = csv.find(",1\n", pos)) != std::string::npos) {
    ++count;
    pos += 3;
  }
  EXPECT_EQ(count, 1u);
}
