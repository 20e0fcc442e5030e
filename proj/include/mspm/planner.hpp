#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mspm/symmetry.hpp"

namespace mspm {

using count_t = unsigned long long;

namespace detail {

inline count_t checked_binom(long long n, long long k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  unsigned __int128 r = 1;
  for (long long i = 1; i <= k; ++i) {
    const unsigned __int128 factor = static_cast<unsigned __int128>(n - k + i);
    if (factor != 0 && r > (~static_cast<unsigned __int128>(0)) / factor)
      throw std::overflow_error("planner: binomial overflow");
    r = r * factor / static_cast<unsigned __int128>(i);
  }
  if (r > static_cast<unsigned __int128>(~0ull)) throw std::overflow_error("planner: binomial overflow");
  return static_cast<count_t>(r);
}

inline count_t checked_mul(count_t a, count_t b) {
  const unsigned __int128 r = static_cast<unsigned __int128>(a) * b;
  if (r > static_cast<unsigned __int128>(~0ull)) throw std::overflow_error("planner: count overflow");
  return static_cast<count_t>(r);
}

}  // namespace detail

// Distinct symmetric row / column counts of the f-flattening.
inline count_t count_rows(const SymmetryType& sym, const FlatteningTuple& f) {
  check_flattening(sym, f);
  count_t n = 1;
  for (int b = 0; b < sym.block_count(); ++b)
    n = detail::checked_mul(n, detail::checked_binom(sym.block(b).dimension + f[static_cast<std::size_t>(b)] - 1,
                                                     f[static_cast<std::size_t>(b)]));
  return n;
}

inline count_t count_cols(const SymmetryType& sym, const FlatteningTuple& f) {
  return count_rows(sym, complement_tuple(sym, f));
}

// Codimension of the rank-one locus inside the projectivized row space.
inline count_t codim(const SymmetryType& sym, const FlatteningTuple& f) {
  check_flattening(sym, f);
  if (is_zero_tuple(f)) throw std::invalid_argument("codim: f = 0 is not allowed");
  __int128 c = static_cast<__int128>(count_rows(sym, f)) - 1;
  for (int b = 0; b < sym.block_count(); ++b)
    if (f[static_cast<std::size_t>(b)] != 0) c -= sym.block(b).dimension - 1;
  return static_cast<count_t>(c);
}

inline bool is_symmetry_breaking(const SymmetryType& sym, const FlatteningTuple& f) {
  check_flattening(sym, f);
  for (int b = 0; b < sym.block_count(); ++b) {
    const int fb = f[static_cast<std::size_t>(b)];
    if (fb > 0 && sym.block(b).exponent - fb > 0) return true;
  }
  return false;
}

// Largest rank for which the column span of the f-flattening contains exactly
// the planted rank-one row parts. The +1 branch covers the product-of-two-
// projective-lines degree case, detected combinatorially from (f, m).
inline count_t r_of(const SymmetryType& sym, const FlatteningTuple& f) {
  check_flattening(sym, f);
  if (is_zero_tuple(f) || is_full_tuple(sym, f))
    throw std::invalid_argument("r_of: boundary tuples are not admissible");
  const count_t ncol = count_cols(sym, f);
  const count_t ncodim = codim(sym, f);

  int ones = 0, others = 0, min_dim = 0;
  for (int b = 0; b < sym.block_count(); ++b) {
    const int fb = f[static_cast<std::size_t>(b)];
    if (fb == 1) {
      ++ones;
      min_dim = (ones == 1) ? sym.block(b).dimension : std::min(min_dim, sym.block(b).dimension);
    } else if (fb != 0) {
      ++others;
    }
  }
  const bool special = (ones == 2 && others == 0 && min_dim == 2);
  return std::min(ncol, special ? ncodim + 1 : ncodim);
}

enum class RecoveryMode { direct, symmetry_breaking, paired };

inline const char* mode_str(RecoveryMode m) {
  switch (m) {
    case RecoveryMode::direct: return "direct";
    case RecoveryMode::symmetry_breaking: return "symmetry_breaking";
    case RecoveryMode::paired: return "paired";
  }
  return "?";
}

inline RecoveryMode recovery_mode(const SymmetryType& sym, const FlatteningTuple& f) {
  bool all_positive = true;
  for (int x : f) all_positive = all_positive && x > 0;
  if (all_positive) return RecoveryMode::direct;
  if (is_symmetry_breaking(sym, f)) return RecoveryMode::symmetry_breaking;
  return RecoveryMode::paired;
}

// Pairing rules for a non-symmetry-breaking tuple f and its partner f':
// f' must differ from d-f, must not be componentwise dominated by f, must
// share at least one positive index with f, and whenever some index is zero
// in both (so a third pass over d-f is needed), d-f must share a positive
// index with f'.
inline bool valid_partner(const SymmetryType& sym, const FlatteningTuple& f, const FlatteningTuple& fp) {
  check_flattening(sym, fp);
  if (is_zero_tuple(fp) || is_full_tuple(sym, fp)) return false;
  const FlatteningTuple dmf = complement_tuple(sym, f);
  if (fp == dmf) return false;
  bool dominated = true, equal = true, shared = false, doubly_zero = false, third_anchor = false;
  for (int b = 0; b < sym.block_count(); ++b) {
    const int a = f[static_cast<std::size_t>(b)], c = fp[static_cast<std::size_t>(b)];
    if (a < c) dominated = false;
    if (a != c) equal = false;
    if (a > 0 && c > 0) shared = true;
    if (a == 0 && c == 0) doubly_zero = true;
    if (c > 0 && dmf[static_cast<std::size_t>(b)] > 0) third_anchor = true;
  }
  if (dominated && !equal) return false;  // f > f'
  if (!shared) return false;
  if (doubly_zero && !third_anchor) return false;
  return true;
}

// Guaranteed recovery rank of a plan. `literal` keeps the d-f term in the
// paired minimum whenever the componentwise min of (f,f') is not strictly
// positive; the coverage-aware variant drops it when every index is positive
// in f or f', since completion then never touches the d-f flattening.
inline count_t r_max_of(const SymmetryType& sym, const FlatteningTuple& f,
                        const std::optional<FlatteningTuple>& partner = std::nullopt,
                        bool coverage_aware = true) {
  const RecoveryMode mode = recovery_mode(sym, f);
  if (mode == RecoveryMode::direct) return r_of(sym, f);
  if (mode == RecoveryMode::symmetry_breaking)
    return std::min(r_of(sym, f), r_of(sym, complement_tuple(sym, f)));
  if (!partner) throw std::invalid_argument("r_max_of: paired tuple requires a partner");
  if (!valid_partner(sym, f, *partner)) throw std::invalid_argument("r_max_of: invalid partner tuple");
  const FlatteningTuple& fp = *partner;
  count_t r = std::min(r_of(sym, f), r_of(sym, fp));
  bool min_positive = true, covered = true;
  for (int b = 0; b < sym.block_count(); ++b) {
    const int a = f[static_cast<std::size_t>(b)], c = fp[static_cast<std::size_t>(b)];
    if (a == 0 || c == 0) min_positive = false;
    if (a == 0 && c == 0) covered = false;
  }
  const bool drop_third = coverage_aware ? covered : min_positive;
  if (!drop_third) r = std::min(r, r_of(sym, complement_tuple(sym, f)));
  return r;
}

struct FlatteningPlan {
  FlatteningTuple f;
  std::optional<FlatteningTuple> partner;
  RecoveryMode mode = RecoveryMode::direct;
  count_t r_max = 0;          // coverage-aware; used by the pipeline
  count_t r_max_literal = 0;  // keeps the d-f term in the paired minimum
};

namespace detail {

inline std::vector<FlatteningTuple> all_tuples(const SymmetryType& sym, bool include_boundary) {
  std::vector<FlatteningTuple> out;
  FlatteningTuple f(static_cast<std::size_t>(sym.block_count()), 0);
  while (true) {
    if (include_boundary || (!is_zero_tuple(f) && !is_full_tuple(sym, f))) out.push_back(f);
    int b = sym.block_count() - 1;
    while (b >= 0 && f[static_cast<std::size_t>(b)] == sym.block(b).exponent) {
      f[static_cast<std::size_t>(b)] = 0;
      --b;
    }
    if (b < 0) break;
    ++f[static_cast<std::size_t>(b)];
  }
  return out;
}

}  // namespace detail

// Builds the best plan for one tuple; for paired tuples scans all admissible
// partners. Returns nullopt when the tuple cannot anchor a recovery.
inline std::optional<FlatteningPlan> plan_for_tuple(const SymmetryType& sym, const FlatteningTuple& f) {
  const RecoveryMode mode = recovery_mode(sym, f);
  FlatteningPlan plan;
  plan.f = f;
  plan.mode = mode;
  if (mode != RecoveryMode::paired) {
    plan.r_max = r_max_of(sym, f);
    plan.r_max_literal = plan.r_max;
    return plan;
  }
  bool found = false;
  for (const FlatteningTuple& fp : detail::all_tuples(sym, false)) {
    if (!valid_partner(sym, f, fp)) continue;
    const count_t r_cov = r_max_of(sym, f, fp, true);
    const count_t r_lit = r_max_of(sym, f, fp, false);
    if (!found || r_cov > plan.r_max || (r_cov == plan.r_max && fp < *plan.partner)) {
      plan.partner = fp;
      plan.r_max = r_cov;
      plan.r_max_literal = r_lit;
      found = true;
    }
  }
  if (!found) return std::nullopt;
  return plan;
}

// Exhaustive search over tuples (and partners) maximizing the recovery rank;
// ties prefer fewer flattening rows, then the lexicographically smallest f.
inline FlatteningPlan optimal_plan(const SymmetryType& sym) {
  std::optional<FlatteningPlan> best;
  count_t best_rows = 0;
  for (const FlatteningTuple& f : detail::all_tuples(sym, false)) {
    const std::optional<FlatteningPlan> plan = plan_for_tuple(sym, f);
    if (!plan) continue;
    const count_t rows = count_rows(sym, f);
    const bool better = !best || plan->r_max > best->r_max ||
                        (plan->r_max == best->r_max && rows < best_rows) ||
                        (plan->r_max == best->r_max && rows == best_rows && plan->f < best->f);
    if (better) {
      best = plan;
      best_rows = rows;
    }
  }
  if (!best) throw std::invalid_argument("optimal_plan: no admissible flattening for this symmetry type");
  return *best;
}

struct PlanRow {
  FlatteningTuple f;
  count_t n_row = 0, n_col = 0, n_codim = 0, r = 0;
  bool symmetry_breaking = false;
  std::optional<FlatteningTuple> partner;
  count_t r_max = 0, r_max_literal = 0;
  bool optimal = false;
};

inline std::vector<PlanRow> plan_table(const SymmetryType& sym) {
  std::vector<PlanRow> rows;
  const FlatteningPlan best = optimal_plan(sym);
  for (const FlatteningTuple& f : detail::all_tuples(sym, false)) {
    PlanRow row;
    row.f = f;
    row.n_row = count_rows(sym, f);
    row.n_col = count_cols(sym, f);
    row.n_codim = codim(sym, f);
    row.r = r_of(sym, f);
    row.symmetry_breaking = is_symmetry_breaking(sym, f);
    if (const std::optional<FlatteningPlan> plan = plan_for_tuple(sym, f)) {
      row.partner = plan->partner;
      row.r_max = plan->r_max;
      row.r_max_literal = plan->r_max_literal;
    }
    row.optimal = (f == best.f);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string plan_csv(const SymmetryType& sym) {
  std::ostringstream out;
  out << "f,n_row,n_col,n_codim,r,symmetry_breaking,partner,r_max,r_max_literal,optimal\n";
  for (const PlanRow& row : plan_table(sym)) {
    out << '"' << tuple_str(row.f) << "\"," << row.n_row << ',' << row.n_col << ',' << row.n_codim << ','
        << row.r << ',' << (row.symmetry_breaking ? 1 : 0) << ',' << '"'
        << (row.partner ? tuple_str(*row.partner) : std::string()) << "\"," << row.r_max << ','
        << row.r_max_literal << ',' << (row.optimal ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace mspm
