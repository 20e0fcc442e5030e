#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mspm/planner.hpp"
#include "mspm/power.hpp"
#include "mspm/subspace.hpp"

namespace mspm {

struct completion_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flips the sign so the first coordinate of largest magnitude is positive.
inline void canonical_sign(Eigen::VectorXd& v) {
  int arg = 0;
  double best = -1.0;
  for (int i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > best) {
      best = std::abs(v(i));
      arg = i;
    }
  if (v(arg) < 0.0) v = -v;
}

namespace detail {

inline std::vector<int> positive_blocks(const FlatteningTuple& f) {
  std::vector<int> out;
  for (int b = 0; b < static_cast<int>(f.size()); ++b)
    if (f[static_cast<std::size_t>(b)] > 0) out.push_back(b);
  return out;
}

// Factors a nearly rank-one partially symmetric tensor into unit factors,
// one per block, each from the dominant singular pair of a single-axis
// unfolding. Returns the captured fraction |<vec, rank-one>| / ||vec||.
inline double factor_rank_one(const PSTensor& vec, FactorTuple& out) {
  const SymmetryType& type = vec.symmetry();
  out.clear();
  FlatteningTuple probe(static_cast<std::size_t>(type.block_count()), 0);
  for (int b = 0; b < type.block_count(); ++b) {
    probe[static_cast<std::size_t>(b)] = 1;
    const Eigen::MatrixXd M = flatten(vec, probe);
    probe[static_cast<std::size_t>(b)] = 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU);
    out.push_back(svd.matrixU().col(0));
  }
  const double c = full_contract(vec, out);
  const double n = vec.frobenius_norm();
  return n > 0.0 ? std::abs(c) / n : 0.0;
}

}  // namespace detail

// Recovers the rank-one element of the span of `basis` that is consistent
// with the known factors: the columns of M are the known-factor contractions
// of each slice, and the sought vectorization is the left singular vector of
// M with singular value one. A multi-dimensional near-one singular space is
// resolved by a power-method search over the stacked candidates.
//
// `known` has one entry per block of basis.slice_type; empty vectors mark
// unknown blocks. The returned tuple fills every block.
inline FactorTuple matched_rank_one(const SlicedSubspace& basis, const std::vector<Eigen::VectorXd>& known,
                                    double tol_match, double tol_r1, const PowerConfig& power, Rng& rng) {
  const SymmetryType& g = basis.slice_type;
  const int nb = g.block_count();
  if (static_cast<int>(known.size()) != nb)
    throw std::invalid_argument("matched_rank_one: known-factor count mismatch");

  FlatteningTuple s(static_cast<std::size_t>(nb), 0);
  bool any_unknown = false;
  for (int b = 0; b < nb; ++b) {
    if (known[static_cast<std::size_t>(b)].size() > 0) {
      if (static_cast<int>(known[static_cast<std::size_t>(b)].size()) != g.block(b).dimension)
        throw std::invalid_argument("matched_rank_one: known factor dimension mismatch");
      s[static_cast<std::size_t>(b)] = g.block(b).exponent;
    } else {
      any_unknown = true;
    }
  }
  if (!any_unknown) return known;

  const SymmetryType unknown_type = part_type(g, complement_tuple(g, s));
  const std::vector<int> unknown_blocks = detail::positive_blocks(complement_tuple(g, s));

  SlicedSubspace candidates;
  candidates.slice_type = unknown_type;
  if (is_zero_tuple(s)) {
    candidates.slices = basis.slices;  // pure rank-one search over the span
  } else {
    const std::size_t n = unknown_type.entry_count();
    Eigen::MatrixXd M(static_cast<Eigen::Index>(n), basis.rank());
    for (int j = 0; j < basis.rank(); ++j) {
      const PSTensor c = contract(basis.slices[static_cast<std::size_t>(j)], known, s);
      M.col(j) = c.as_vector();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU);
    const Eigen::VectorXd& sv = svd.singularValues();
    std::vector<int> hits;
    for (int i = 0; i < sv.size(); ++i)
      if (std::abs(sv(i) - 1.0) <= tol_match) hits.push_back(i);
    if (hits.empty()) throw completion_error("matched_rank_one: known factors inconsistent with subspace");
    for (int i : hits) {
      std::vector<double> col(n);
      Eigen::Map<Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(n)) = svd.matrixU().col(i);
      candidates.slices.push_back(symmetrize(std::move(col), unknown_type));
    }
  }

  FactorTuple recovered;
  if (candidates.rank() == 1) {
    const double captured = detail::factor_rank_one(candidates.slices[0], recovered);
    if (captured < 1.0 - tol_r1)
      throw completion_error("matched_rank_one: matched vector is not rank-one");
  } else {
    if (unknown_type.block_count() == 1 && unknown_type.block(0).exponent == 1)
      throw completion_error("matched_rank_one: ambiguous vector-type singular space");
    bool ok = false;
    const double accept = std::max(tol_match, 1e-7);
    for (int attempt = 0; attempt < 20 && !ok; ++attempt) {
      const PSVT psvt = run_pshopm(candidates, power, ShiftPolicy::adaptive_prop53(), std::nullopt, rng);
      if (psvt.converged && std::abs(psvt.sigma - 1.0) <= accept) {
        recovered = psvt.factors;
        ok = true;
      }
    }
    if (!ok) throw completion_error("matched_rank_one: no rank-one element found in the matched space");
  }

  FactorTuple out = known;
  for (std::size_t t = 0; t < unknown_blocks.size(); ++t)
    out[static_cast<std::size_t>(unknown_blocks[t])] = recovered[t];
  return out;
}

struct CompletionContext {
  SymmetryType full_type;
  FlatteningPlan plan;
  const SlicedSubspace* complement_space = nullptr;  // (d-f)-part slices
  const SlicedSubspace* partner_space = nullptr;     // f'-part slices (paired mode)
  double tol_match = 1e-6;
  double tol_r1 = 1e-6;
  PowerConfig power;
  Rng* rng = nullptr;
};

namespace detail {

// Runs one matched recovery against `space`, whose slice type is the t-part
// of the full type, merging newly found factors into `factors`.
inline void complete_against(const SlicedSubspace& space, const FlatteningTuple& t, const CompletionContext& ctx,
                             std::vector<Eigen::VectorXd>& factors) {
  const std::vector<int> blocks = positive_blocks(t);
  std::vector<Eigen::VectorXd> known(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (factors[static_cast<std::size_t>(blocks[i])].size() > 0) known[i] = factors[static_cast<std::size_t>(blocks[i])];
  const FactorTuple full = matched_rank_one(space, known, ctx.tol_match, ctx.tol_r1, ctx.power, *ctx.rng);
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (factors[static_cast<std::size_t>(blocks[i])].size() == 0) factors[static_cast<std::size_t>(blocks[i])] = full[i];
}

}  // namespace detail

// Extends the row-part factors of a found rank-one to a full tuple with every
// block fixed, per the plan's recovery mode. `row_factors` has one entry per
// block of the full type; blocks with f_i = 0 may be empty.
inline FactorTuple complete(const std::vector<Eigen::VectorXd>& row_factors, const CompletionContext& ctx) {
  const SymmetryType& d = ctx.full_type;
  const FlatteningTuple& f = ctx.plan.f;
  if (static_cast<int>(row_factors.size()) != d.block_count())
    throw std::invalid_argument("complete: row factor count mismatch");
  std::vector<Eigen::VectorXd> factors = row_factors;
  for (int b = 0; b < d.block_count(); ++b)
    if (f[static_cast<std::size_t>(b)] > 0 && factors[static_cast<std::size_t>(b)].size() == 0)
      throw std::invalid_argument("complete: missing row-part factor");

  if (ctx.plan.mode == RecoveryMode::symmetry_breaking) {
    if (!ctx.complement_space) throw std::invalid_argument("complete: missing complement subspace");
    detail::complete_against(*ctx.complement_space, complement_tuple(d, f), ctx, factors);
  } else if (ctx.plan.mode == RecoveryMode::paired) {
    if (!ctx.plan.partner || !ctx.partner_space) throw std::invalid_argument("complete: missing partner subspace");
    detail::complete_against(*ctx.partner_space, *ctx.plan.partner, ctx, factors);
    bool doubly_zero = false;
    for (int b = 0; b < d.block_count(); ++b)
      if (f[static_cast<std::size_t>(b)] == 0 && (*ctx.plan.partner)[static_cast<std::size_t>(b)] == 0) doubly_zero = true;
    if (doubly_zero) {
      if (!ctx.complement_space) throw std::invalid_argument("complete: missing complement subspace");
      detail::complete_against(*ctx.complement_space, complement_tuple(d, f), ctx, factors);
    }
  }

  for (int b = 0; b < d.block_count(); ++b) {
    Eigen::VectorXd& v = factors[static_cast<std::size_t>(b)];
    if (v.size() == 0) throw completion_error("complete: block left undetermined by the plan");
    const double n = v.norm();
    if (n == 0.0) throw completion_error("complete: zero factor");
    v /= n;
    canonical_sign(v);
  }
  return factors;
}

}  // namespace mspm
