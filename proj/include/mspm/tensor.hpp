#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mspm/symmetry.hpp"

namespace mspm {

using FactorTuple = std::vector<Eigen::VectorXd>;

class PSTensor;
PSTensor make_rank_one(const FactorTuple& factors, const std::vector<int>& exponents, double scale);

namespace detail {

// Entries of v^{\otimes e} for a single block. Every entry is computed from
// the sorted multi-index, so entries in one permutation orbit are bitwise
// identical.
inline std::vector<double> sym_vector_power(const Eigen::VectorXd& v, int e) {
  const int m = static_cast<int>(v.size());
  std::size_t n = 1;
  for (int t = 0; t < e; ++t) n *= static_cast<std::size_t>(m);
  std::vector<double> out(n);
  if (e == 0) {
    out[0] = 1.0;
    return out;
  }
  std::vector<int> idx(static_cast<std::size_t>(e), 0);
  std::vector<int> perm;
  while (true) {
    double p = v(idx[0]);
    for (int t = 1; t < e; ++t) p *= v(idx[static_cast<std::size_t>(t)]);
    perm = idx;
    do {
      std::size_t off = 0;
      for (int t = 0; t < e; ++t) off = off * static_cast<std::size_t>(m) + static_cast<std::size_t>(perm[static_cast<std::size_t>(t)]);
      out[off] = p;
    } while (std::next_permutation(perm.begin(), perm.end()));
    // next non-decreasing multi-index
    int t = e - 1;
    while (t >= 0 && idx[static_cast<std::size_t>(t)] == m - 1) --t;
    if (t < 0) break;
    const int val = idx[static_cast<std::size_t>(t)] + 1;
    for (int s = t; s < e; ++s) idx[static_cast<std::size_t>(s)] = val;
  }
  return out;
}

// Flat offsets (in base m) of all distinct permutations of one block's
// non-decreasing multi-index, in a fixed enumeration order.
inline void block_orbit_offsets(const std::vector<int>& sorted_idx, int m, std::vector<std::size_t>& out) {
  out.clear();
  std::vector<int> perm = sorted_idx;
  do {
    std::size_t off = 0;
    for (int x : perm) off = off * static_cast<std::size_t>(m) + static_cast<std::size_t>(x);
    out.push_back(off);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

inline bool next_nondecreasing(std::vector<int>& idx, int m) {
  const int e = static_cast<int>(idx.size());
  int t = e - 1;
  while (t >= 0 && idx[static_cast<std::size_t>(t)] == m - 1) --t;
  if (t < 0) return false;
  const int val = idx[static_cast<std::size_t>(t)] + 1;
  for (int s = t; s < e; ++s) idx[static_cast<std::size_t>(s)] = val;
  return true;
}

// Walks all within-block permutation orbits of the index space and hands the
// callback the list of flat positions in each orbit.
template <class Fn>
void for_each_orbit(const SymmetryType& sym, Fn&& fn) {
  const int nb = sym.block_count();
  if (nb == 0) {
    std::vector<std::size_t> single{0};
    fn(single);
    return;
  }
  // post-strides of each block: product of dimensions of later blocks' axes
  std::vector<std::size_t> post(static_cast<std::size_t>(nb), 1);
  for (int b = nb - 2; b >= 0; --b) {
    std::size_t p = post[static_cast<std::size_t>(b) + 1];
    const Block& nxt = sym.block(b + 1);
    for (int t = 0; t < nxt.exponent; ++t) p *= static_cast<std::size_t>(nxt.dimension);
    post[static_cast<std::size_t>(b)] = p;
  }
  std::vector<std::vector<int>> rep(static_cast<std::size_t>(nb));
  for (int b = 0; b < nb; ++b) rep[static_cast<std::size_t>(b)].assign(static_cast<std::size_t>(sym.block(b).exponent), 0);
  std::vector<std::vector<std::size_t>> offs(static_cast<std::size_t>(nb));
  std::vector<std::size_t> positions;
  while (true) {
    positions.clear();
    positions.push_back(0);
    for (int b = 0; b < nb; ++b) {
      block_orbit_offsets(rep[static_cast<std::size_t>(b)], sym.block(b).dimension, offs[static_cast<std::size_t>(b)]);
      const std::size_t stride = post[static_cast<std::size_t>(b)];
      std::vector<std::size_t> grown;
      grown.reserve(positions.size() * offs[static_cast<std::size_t>(b)].size());
      for (std::size_t base : positions)
        for (std::size_t o : offs[static_cast<std::size_t>(b)]) grown.push_back(base + o * stride);
      positions.swap(grown);
    }
    fn(positions);
    // advance the combined canonical representative
    int b = nb - 1;
    while (b >= 0 && !next_nondecreasing(rep[static_cast<std::size_t>(b)], sym.block(b).dimension)) {
      rep[static_cast<std::size_t>(b)].assign(rep[static_cast<std::size_t>(b)].size(), 0);
      --b;
    }
    if (b < 0) break;
  }
}

}  // namespace detail

// Dense real tensor with prescribed within-block index symmetry. Values are
// stored over the full index space, row-major, axes grouped by block.
// Instances are immutable in practice: all operations below return new
// tensors, so sharing across threads read-only is safe.
class PSTensor {
 public:
  PSTensor() : values_(1, 0.0) {}

  PSTensor(SymmetryType sym, std::vector<double> values) : sym_(std::move(sym)), values_(std::move(values)) {
    if (!sym_.dense_storable()) throw std::invalid_argument("PSTensor: symmetry type too large for dense storage");
    if (values_.size() != sym_.entry_count())
      throw std::invalid_argument("PSTensor: value count does not match symmetry type");
  }

  static PSTensor zeros(SymmetryType sym) {
    std::vector<double> v(sym.entry_count(), 0.0);
    return PSTensor(std::move(sym), std::move(v));
  }

  static PSTensor scalar(double x) {
    PSTensor t;
    t.values_[0] = x;
    return t;
  }

  const SymmetryType& symmetry() const { return sym_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }
  std::size_t size() const { return values_.size(); }
  bool is_scalar() const { return sym_.is_scalar(); }

  double scalar_value() const {
    if (!is_scalar()) throw std::invalid_argument("PSTensor: not an order-0 tensor");
    return values_[0];
  }

  double value_at(const std::vector<int>& idx) const {
    const std::vector<int> dims = sym_.axis_dims();
    if (idx.size() != dims.size()) throw std::invalid_argument("PSTensor: index order mismatch");
    std::size_t off = 0;
    for (std::size_t a = 0; a < dims.size(); ++a) {
      if (idx[a] < 0 || idx[a] >= dims[a]) throw std::invalid_argument("PSTensor: index out of range");
      off = off * static_cast<std::size_t>(dims[a]) + static_cast<std::size_t>(idx[a]);
    }
    return values_[off];
  }

  Eigen::Map<const Eigen::VectorXd> as_vector() const {
    return Eigen::Map<const Eigen::VectorXd>(values_.data(), static_cast<Eigen::Index>(values_.size()));
  }

  double frobenius_norm() const { return as_vector().norm(); }
  double max_abs() const { return values_.empty() ? 0.0 : as_vector().cwiseAbs().maxCoeff(); }

  bool all_finite() const { return as_vector().allFinite(); }

  PSTensor& operator+=(const PSTensor& other) {
    require_same_type(other);
    Eigen::Map<Eigen::VectorXd>(values_.data(), static_cast<Eigen::Index>(values_.size())) += other.as_vector();
    return *this;
  }

  PSTensor& operator-=(const PSTensor& other) {
    require_same_type(other);
    Eigen::Map<Eigen::VectorXd>(values_.data(), static_cast<Eigen::Index>(values_.size())) -= other.as_vector();
    return *this;
  }

  PSTensor& operator*=(double a) {
    Eigen::Map<Eigen::VectorXd>(values_.data(), static_cast<Eigen::Index>(values_.size())) *= a;
    return *this;
  }

  friend PSTensor operator+(PSTensor a, const PSTensor& b) { return a += b; }
  friend PSTensor operator-(PSTensor a, const PSTensor& b) { return a -= b; }
  friend PSTensor operator*(double a, PSTensor t) { return t *= a; }

  friend double dot(const PSTensor& a, const PSTensor& b) {
    a.require_same_type(b);
    return a.as_vector().dot(b.as_vector());
  }

  // Largest orbit spread relative to the max entry; zero for exactly
  // symmetric storage.
  double symmetry_violation() const {
    const double scale = std::max(1.0, max_abs());
    double worst = 0.0;
    detail::for_each_orbit(sym_, [&](const std::vector<std::size_t>& positions) {
      double lo = values_[positions[0]], hi = lo;
      for (std::size_t p : positions) {
        lo = std::min(lo, values_[p]);
        hi = std::max(hi, values_[p]);
      }
      worst = std::max(worst, (hi - lo) / scale);
    });
    return worst;
  }

 private:
  void require_same_type(const PSTensor& other) const {
    if (!(sym_ == other.sym_)) throw std::invalid_argument("PSTensor: symmetry type mismatch");
  }

  SymmetryType sym_;
  std::vector<double> values_;
};

// scale * (v^(1))^{a_1} (x) ... (x) (v^(l))^{a_l}. Blocks with a_i = 0 drop
// out of the result type. Factors need not be unit vectors.
inline PSTensor make_rank_one(const FactorTuple& factors, const std::vector<int>& exponents, double scale) {
  if (factors.size() != exponents.size())
    throw std::invalid_argument("make_rank_one: factor/exponent count mismatch");
  std::vector<Block> blocks;
  for (std::size_t b = 0; b < factors.size(); ++b) {
    if (exponents[b] < 0) throw std::invalid_argument("make_rank_one: negative exponent");
    if (exponents[b] > 0) blocks.push_back(Block{exponents[b], static_cast<int>(factors[b].size())});
  }
  SymmetryType sym{std::move(blocks)};
  std::vector<double> values{scale};
  for (std::size_t b = 0; b < factors.size(); ++b) {
    if (exponents[b] == 0) continue;
    const std::vector<double> pw = detail::sym_vector_power(factors[b], exponents[b]);
    std::vector<double> grown(values.size() * pw.size());
    std::size_t k = 0;
    for (double a : values)
      for (double p : pw) grown[k++] = a * p;
    values.swap(grown);
  }
  return PSTensor(std::move(sym), std::move(values));
}

// Orthogonal projection of a dense array onto the partially symmetric
// subspace: the average over all within-block index permutations. Entries of
// one orbit come out bitwise identical.
inline PSTensor symmetrize(std::vector<double> values, const SymmetryType& sym) {
  if (values.size() != sym.entry_count())
    throw std::invalid_argument("symmetrize: array shape does not match symmetry type");
  detail::for_each_orbit(sym, [&](const std::vector<std::size_t>& positions) {
    double sum = 0.0;
    for (std::size_t p : positions) sum += values[p];
    const double avg = sum / static_cast<double>(positions.size());
    for (std::size_t p : positions) values[p] = avg;
  });
  return PSTensor(sym, std::move(values));
}

inline PSTensor symmetrize(const PSTensor& t) { return symmetrize(t.values(), t.symmetry()); }

namespace detail {

inline void contract_axis(const std::vector<double>& in, std::size_t pre, int m, std::size_t post,
                          const Eigen::VectorXd& w, std::vector<double>& out) {
  out.assign(pre * post, 0.0);
  if (post == 1) {
    for (std::size_t a = 0; a < pre; ++a) {
      Eigen::Map<const Eigen::VectorXd> chunk(in.data() + a * static_cast<std::size_t>(m), m);
      out[a] = chunk.dot(w);
    }
  } else {
    for (std::size_t a = 0; a < pre; ++a) {
      Eigen::Map<Eigen::VectorXd> o(out.data() + a * post, static_cast<Eigen::Index>(post));
      for (int j = 0; j < m; ++j) {
        Eigen::Map<const Eigen::VectorXd> row(in.data() + (a * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)) * post,
                                              static_cast<Eigen::Index>(post));
        o += w(j) * row;
      }
    }
  }
}

}  // namespace detail

// Contraction with (x)_i (v^(i))^{f_i}: sums the first f_i indices of each
// block against the factor; exploits symmetry by contracting trailing axes of
// each block instead. Contracting with f = d yields an order-0 tensor.
inline PSTensor contract(const PSTensor& T, const FactorTuple& factors, const FlatteningTuple& f) {
  const SymmetryType& sym = T.symmetry();
  check_flattening(sym, f);
  if (factors.size() != static_cast<std::size_t>(sym.block_count()))
    throw std::invalid_argument("contract: factor count mismatch");
  for (int b = 0; b < sym.block_count(); ++b)
    if (f[static_cast<std::size_t>(b)] > 0 && factors[static_cast<std::size_t>(b)].size() != sym.block(b).dimension)
      throw std::invalid_argument("contract: factor dimension mismatch");

  std::vector<double> cur = T.values();
  std::vector<double> next;
  std::vector<int> axes_left(static_cast<std::size_t>(sym.block_count()));
  for (int b = 0; b < sym.block_count(); ++b) axes_left[static_cast<std::size_t>(b)] = sym.block(b).exponent;

  for (int b = sym.block_count() - 1; b >= 0; --b) {
    const int m = sym.block(b).dimension;
    for (int t = 0; t < f[static_cast<std::size_t>(b)]; ++t) {
      // current layout: axes of blocks 0..b (blocks > b fully handled already)
      std::size_t pre = 1;
      for (int bb = 0; bb < b; ++bb)
        for (int s = 0; s < axes_left[static_cast<std::size_t>(bb)]; ++s) pre *= static_cast<std::size_t>(sym.block(bb).dimension);
      for (int s = 0; s < axes_left[static_cast<std::size_t>(b)] - 1; ++s) pre *= static_cast<std::size_t>(m);
      std::size_t post = 1;
      for (int bb = b + 1; bb < sym.block_count(); ++bb)
        for (int s = 0; s < axes_left[static_cast<std::size_t>(bb)]; ++s) post *= static_cast<std::size_t>(sym.block(bb).dimension);
      detail::contract_axis(cur, pre, m, post, factors[static_cast<std::size_t>(b)], next);
      cur.swap(next);
      --axes_left[static_cast<std::size_t>(b)];
    }
  }

  std::vector<Block> blocks;
  for (int b = 0; b < sym.block_count(); ++b)
    if (axes_left[static_cast<std::size_t>(b)] > 0) blocks.push_back(Block{axes_left[static_cast<std::size_t>(b)], sym.block(b).dimension});
  return PSTensor(SymmetryType(std::move(blocks)), std::move(cur));
}

// Full contraction to a scalar.
inline double full_contract(const PSTensor& T, const FactorTuple& factors) {
  FlatteningTuple f(static_cast<std::size_t>(T.symmetry().block_count()));
  for (int b = 0; b < T.symmetry().block_count(); ++b) f[static_cast<std::size_t>(b)] = T.symmetry().block(b).exponent;
  return contract(T, factors, f).scalar_value();
}

// The full (redundant) f-flattening: rows indexed by the first f_i axes of
// each block, columns by the rest, both in the fixed axis order.
inline Eigen::MatrixXd flatten(const PSTensor& T, const FlatteningTuple& f) {
  const SymmetryType& sym = T.symmetry();
  check_flattening(sym, f);
  const std::vector<int> dims = sym.axis_dims();
  const int order = static_cast<int>(dims.size());

  std::vector<bool> in_row(static_cast<std::size_t>(order), false);
  for (int b = 0; b < sym.block_count(); ++b) {
    const int off = sym.axis_offset(b);
    for (int t = 0; t < f[static_cast<std::size_t>(b)]; ++t) in_row[static_cast<std::size_t>(off + t)] = true;
  }
  std::size_t n_row = 1, n_col = 1;
  for (int a = 0; a < order; ++a) (in_row[static_cast<std::size_t>(a)] ? n_row : n_col) *= static_cast<std::size_t>(dims[static_cast<std::size_t>(a)]);

  std::vector<std::size_t> rstride(static_cast<std::size_t>(order), 0), cstride(static_cast<std::size_t>(order), 0);
  std::size_t rs = 1, cs = 1;
  for (int a = order - 1; a >= 0; --a) {
    if (in_row[static_cast<std::size_t>(a)]) {
      rstride[static_cast<std::size_t>(a)] = rs;
      rs *= static_cast<std::size_t>(dims[static_cast<std::size_t>(a)]);
    } else {
      cstride[static_cast<std::size_t>(a)] = cs;
      cs *= static_cast<std::size_t>(dims[static_cast<std::size_t>(a)]);
    }
  }

  Eigen::MatrixXd M(static_cast<Eigen::Index>(n_row), static_cast<Eigen::Index>(n_col));
  const std::vector<double>& values = T.values();
  std::vector<int> digit(static_cast<std::size_t>(order), 0);
  std::size_t r = 0, c = 0;
  for (std::size_t flat = 0; flat < values.size(); ++flat) {
    M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[flat];
    for (int a = order - 1; a >= 0; --a) {
      ++digit[static_cast<std::size_t>(a)];
      r += rstride[static_cast<std::size_t>(a)];
      c += cstride[static_cast<std::size_t>(a)];
      if (digit[static_cast<std::size_t>(a)] < dims[static_cast<std::size_t>(a)]) break;
      r -= static_cast<std::size_t>(dims[static_cast<std::size_t>(a)]) * rstride[static_cast<std::size_t>(a)];
      c -= static_cast<std::size_t>(dims[static_cast<std::size_t>(a)]) * cstride[static_cast<std::size_t>(a)];
      digit[static_cast<std::size_t>(a)] = 0;
    }
  }
  return M;
}

// Row-major enumeration of all entries; preserves the Frobenius norm.
inline Eigen::VectorXd vectorize(const PSTensor& T) { return T.as_vector(); }

// T += scale * (x)_i (v^(i))^{d_i} without materializing the rank-one tensor.
inline void add_rank_one_inplace(PSTensor& T, double scale, const FactorTuple& factors) {
  const SymmetryType& sym = T.symmetry();
  if (factors.size() != static_cast<std::size_t>(sym.block_count()))
    throw std::invalid_argument("axpy_rank_one: factor count mismatch");
  std::vector<std::vector<double>> pows;
  for (int b = 0; b < sym.block_count(); ++b) {
    if (factors[static_cast<std::size_t>(b)].size() != sym.block(b).dimension)
      throw std::invalid_argument("axpy_rank_one: factor dimension mismatch");
    pows.push_back(detail::sym_vector_power(factors[static_cast<std::size_t>(b)], sym.block(b).exponent));
  }
  std::vector<double>& values = T.mutable_values();
  if (sym.block_count() == 0) {
    values[0] += scale;
    return;
  }
  // odometer over per-block flat offsets; innermost block iterates fastest
  const int nb = sym.block_count();
  std::vector<std::size_t> pos(static_cast<std::size_t>(nb), 0);
  std::vector<double> prefix(static_cast<std::size_t>(nb) + 1);
  prefix[0] = scale;
  for (int b = 0; b < nb; ++b) prefix[static_cast<std::size_t>(b) + 1] = prefix[static_cast<std::size_t>(b)] * pows[static_cast<std::size_t>(b)][0];
  std::size_t flat = 0;
  const std::size_t total = values.size();
  while (true) {
    const std::vector<double>& last = pows[static_cast<std::size_t>(nb - 1)];
    const double base = prefix[static_cast<std::size_t>(nb - 1)];
    for (std::size_t j = 0; j < last.size(); ++j) values[flat + j] += base * last[j];
    flat += last.size();
    if (flat >= total) break;
    int b = nb - 2;
    while (b >= 0 && pos[static_cast<std::size_t>(b)] + 1 == pows[static_cast<std::size_t>(b)].size()) {
      pos[static_cast<std::size_t>(b)] = 0;
      --b;
    }
    if (b < 0) break;
    ++pos[static_cast<std::size_t>(b)];
    for (int bb = b; bb < nb - 1; ++bb)
      prefix[static_cast<std::size_t>(bb) + 1] = prefix[static_cast<std::size_t>(bb)] * pows[static_cast<std::size_t>(bb)][pos[static_cast<std::size_t>(bb)]];
  }
}

inline PSTensor axpy_rank_one(const PSTensor& T, double scale, const FactorTuple& factors) {
  PSTensor out = T;
  add_rank_one_inplace(out, scale, factors);
  return out;
}

}  // namespace mspm
