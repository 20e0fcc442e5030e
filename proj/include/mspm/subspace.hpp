#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mspm/tensor.hpp"

namespace mspm {

struct deflation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Orthonormal tensor slices spanning a subspace of a partially symmetric
// space; the working object of the power method.
struct SlicedSubspace {
  SymmetryType slice_type;
  std::vector<PSTensor> slices;

  int rank() const { return static_cast<int>(slices.size()); }

  Eigen::MatrixXd gram() const {
    const int r = rank();
    Eigen::MatrixXd g(r, r);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) g(i, j) = dot(slices[static_cast<std::size_t>(i)], slices[static_cast<std::size_t>(j)]);
    return g;
  }
};

// Stacks the slices along a new trailing vector block of dimension r.
inline PSTensor stack_to_tensor(const SlicedSubspace& s) {
  const int r = s.rank();
  if (r < 2) throw std::invalid_argument("stack_to_tensor: need at least two slices");
  std::vector<Block> blocks = s.slice_type.blocks();
  blocks.push_back(Block{1, r});
  SymmetryType sym(std::move(blocks));
  std::vector<double> values(sym.entry_count());
  const std::size_t n = s.slices[0].size();
  for (std::size_t e = 0; e < n; ++e)
    for (int j = 0; j < r; ++j) values[e * static_cast<std::size_t>(r) + static_cast<std::size_t>(j)] = s.slices[static_cast<std::size_t>(j)].values()[e];
  return PSTensor(std::move(sym), std::move(values));
}

struct RankPolicy {
  enum class Kind { fixed, auto_gap } kind = Kind::auto_gap;
  int rank = 0;

  static RankPolicy fixed(int r) { return RankPolicy{Kind::fixed, r}; }
  static RankPolicy auto_gap() { return RankPolicy{Kind::auto_gap, 0}; }
};

// Rank from a non-increasing spectrum: the declared value, or the largest
// consecutive gap among values above the sqrt(eps) noise floor.
inline int estimate_rank(const Eigen::VectorXd& sv, const RankPolicy& policy) {
  const int n = static_cast<int>(sv.size());
  if (n == 0 || sv(0) <= 0.0) throw std::invalid_argument("estimate_rank: empty or all-zero spectrum");
  if (policy.kind == RankPolicy::Kind::fixed) {
    if (policy.rank < 1) throw std::invalid_argument("estimate_rank: fixed rank must be >= 1");
    return policy.rank;
  }
  const double floor = std::sqrt(std::numeric_limits<double>::epsilon()) * sv(0);
  int best = -1;
  double best_ratio = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    if (sv(i) <= floor) break;
    const double ratio = sv(i + 1) > 0.0 ? sv(i) / sv(i + 1) : std::numeric_limits<double>::infinity();
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = i;
    }
  }
  if (best < 0) {
    int r = 0;
    while (r < n && sv(r) > floor) ++r;
    return std::max(r, 1);
  }
  return best + 1;
}

// The (U, C, V) factorization of the working flattening, U C^{-1} V^T.
// U spans the row-part subspace, V the complement subspace; C starts as the
// diagonal of reciprocal singular values and fills in under deflation.
struct DeflationState {
  SymmetryType row_type;  // type of reshaped U columns
  SymmetryType col_type;  // type of reshaped V columns
  Eigen::MatrixXd U, C, V;

  int rank() const { return static_cast<int>(U.cols()); }
};

namespace detail {

inline PSTensor column_as_slice(const Eigen::MatrixXd& M, int j, const SymmetryType& type) {
  std::vector<double> v(static_cast<std::size_t>(M.rows()));
  Eigen::Map<Eigen::VectorXd>(v.data(), M.rows()) = M.col(j);
  return symmetrize(std::move(v), type);
}

// Orthonormal basis of {x}^perp from the Householder reflector sending x to
// a multiple of e_1.
inline Eigen::MatrixXd orthonormal_complement(const Eigen::VectorXd& x) {
  const int r = static_cast<int>(x.size());
  if (r < 2) throw deflation_error("orthonormal_complement: dimension too small");
  const double nx = x.norm();
  if (nx == 0.0) throw deflation_error("orthonormal_complement: zero vector");
  Eigen::VectorXd w = x;
  const double alpha = (x(0) >= 0.0) ? -nx : nx;
  w(0) -= alpha;
  const double nw2 = w.squaredNorm();
  Eigen::MatrixXd O = Eigen::MatrixXd::Zero(r, r - 1);
  if (nw2 == 0.0) {
    O.bottomRows(r - 1).setIdentity();
    return O;
  }
  for (int j = 1; j < r; ++j) {
    O.col(j - 1) = (-2.0 * w(j) / nw2) * w;
    O(j, j - 1) += 1.0;
  }
  return O;
}

inline Eigen::VectorXd probe_vector(int n) {
  Eigen::VectorXd p(n);
  std::uint64_t s = 0x5bd1e9955bd1e995ull;
  for (int i = 0; i < n; ++i) {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    p(i) = static_cast<double>(s >> 11) * 0x1.0p-53 - 0.5;
  }
  return p;
}

}  // namespace detail

struct ExtractResult {
  DeflationState state;
  SlicedSubspace subspace;
  Eigen::VectorXd singular_values;
  double gap_ratio = 0.0;  // sigma_{r+1}/sigma_r, 0 when r exhausts the spectrum
};

// Subspace extraction: SVD of the f-flattening truncated to rank r. C holds
// the reciprocal singular values so that U C^{-1} V^T reproduces the
// flattening.
inline ExtractResult extract(const PSTensor& T, const FlatteningTuple& f, const RankPolicy& policy) {
  const Eigen::MatrixXd M = flatten(T, f);
  if (M.norm() == 0.0) throw std::invalid_argument("extract: zero tensor");
  const Eigen::Index mind = std::min(M.rows(), M.cols());
  Eigen::MatrixXd U, V;
  Eigen::VectorXd sv;
  if (mind > 16) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    U = svd.matrixU();
    V = svd.matrixV();
    sv = svd.singularValues();
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    U = svd.matrixU();
    V = svd.matrixV();
    sv = svd.singularValues();
  }

  const int r = estimate_rank(sv, policy);
  if (r > static_cast<int>(mind))
    throw std::invalid_argument("extract: requested rank exceeds flattening dimensions");
  const double floor = std::sqrt(std::numeric_limits<double>::epsilon()) * sv(0);
  if (sv(r - 1) <= floor)
    throw std::invalid_argument("extract: requested rank exceeds the numerical rank of the flattening");

  ExtractResult out;
  out.state.row_type = part_type(T.symmetry(), f);
  out.state.col_type = part_type(T.symmetry(), complement_tuple(T.symmetry(), f));
  out.state.U = U.leftCols(r);
  out.state.V = V.leftCols(r);
  out.state.C = Eigen::MatrixXd::Zero(r, r);
  for (int i = 0; i < r; ++i) out.state.C(i, i) = 1.0 / sv(i);
  out.singular_values = sv;
  out.gap_ratio = (r < static_cast<int>(sv.size())) ? sv(r) / sv(r - 1) : 0.0;

  out.subspace.slice_type = out.state.row_type;
  for (int j = 0; j < r; ++j) out.subspace.slices.push_back(detail::column_as_slice(out.state.U, j, out.state.row_type));
  return out;
}

inline SlicedSubspace subspace_from_state(const DeflationState& state) {
  if (state.rank() < 1) throw std::invalid_argument("subspace_from_state: empty state");
  SlicedSubspace s;
  s.slice_type = state.row_type;
  for (int j = 0; j < state.rank(); ++j) s.slices.push_back(detail::column_as_slice(state.U, j, state.row_type));
  return s;
}

inline SlicedSubspace complement_subspace_from_state(const DeflationState& state) {
  if (state.rank() < 1) throw std::invalid_argument("complement_subspace_from_state: empty state");
  SlicedSubspace s;
  s.slice_type = state.col_type;
  for (int j = 0; j < state.rank(); ++j) s.slices.push_back(detail::column_as_slice(state.V, j, state.col_type));
  return s;
}

// Removes one recovered rank-one component from the factorization and
// returns its coefficient. The complement bases are Householder complements
// of C a_u and C^T a_v; the rank-one update identity is spot-checked on a
// probe vector after every deflation.
inline double deflate(DeflationState& state, const PSTensor& row_part, const PSTensor& col_part) {
  const int r = state.rank();
  if (r < 1) throw deflation_error("deflate: empty state");
  if (!(row_part.symmetry() == state.row_type) || !(col_part.symmetry() == state.col_type))
    throw std::invalid_argument("deflate: component symmetry type mismatch");

  const Eigen::VectorXd u = row_part.as_vector();
  const Eigen::VectorXd v = col_part.as_vector();
  const Eigen::VectorXd a_u = state.U.transpose() * u;
  const Eigen::VectorXd a_v = state.V.transpose() * v;
  const double denom = a_v.dot(state.C * a_u);
  if (std::abs(denom) < 1e-12 * state.C.norm())
    throw deflation_error("deflate: component not in subspace");
  const double lambda = 1.0 / denom;

  if (r == 1) {
    state.U.resize(state.U.rows(), 0);
    state.V.resize(state.V.rows(), 0);
    state.C.resize(0, 0);
    return lambda;
  }

  const Eigen::VectorXd cu = state.C * a_u;
  const Eigen::VectorXd cv = state.C.transpose() * a_v;
  const Eigen::MatrixXd O_u = detail::orthonormal_complement(cu);
  const Eigen::MatrixXd O_v = detail::orthonormal_complement(cv);

  Eigen::MatrixXd newU = state.U * O_v;
  Eigen::MatrixXd newC = O_u.transpose() * state.C * O_v;
  Eigen::MatrixXd newV = state.V * O_u;

  // Probe check of the rank-one update identity. It holds exactly for the
  // projections U a_u, V a_v of the component onto the working subspaces
  // (the raw vectorizations carry an out-of-span part under noise).
  const Eigen::VectorXd p = detail::probe_vector(static_cast<int>(state.V.rows()));
  const Eigen::VectorXd pu = state.U * a_u;
  const Eigen::VectorXd pv = state.V * a_v;
  const Eigen::VectorXd old_action = state.U * state.C.lu().solve(state.V.transpose() * p);
  const Eigen::VectorXd want = old_action - (lambda * pv.dot(p)) * pu;
  const Eigen::VectorXd got = newU * newC.lu().solve(newV.transpose() * p);
  const double scale = old_action.norm() + std::abs(lambda * pv.dot(p)) * pu.norm() + 1e-300;
  if ((got - want).norm() > 1e-8 * scale)
    throw deflation_error("deflate: rank-one update identity failed");

  state.U = std::move(newU);
  state.C = std::move(newC);
  state.V = std::move(newV);
  return lambda;
}

}  // namespace mspm
