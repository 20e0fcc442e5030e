#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mspm/rng.hpp"
#include "mspm/subspace.hpp"
#include "mspm/tensor.hpp"

namespace mspm {

// A partially symmetric singular vector tuple with diagnostics. For runs on
// an implicit slice subspace, sigma is the subspace-tensor singular value
// (equal to the projection objective); lifted_sigma/lift_w carry the
// corresponding tuple of the stacked tensor.
struct PSVT {
  FactorTuple factors;
  double sigma = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  double lifted_sigma = 0.0;
  Eigen::VectorXd lift_w;
  int shift_clamps = 0;
};

struct ShiftPolicy {
  enum class Kind { fixed, frobenius_thm51, adaptive_prop53 } kind = Kind::adaptive_prop53;
  std::vector<double> gammas;  // fixed variant

  static ShiftPolicy fixed(std::vector<double> g) {
    for (double x : g)
      if (x < 0.0) throw std::invalid_argument("ShiftPolicy: shifts must be nonnegative");
    return ShiftPolicy{Kind::fixed, std::move(g)};
  }
  static ShiftPolicy frobenius_thm51() { return ShiftPolicy{Kind::frobenius_thm51, {}}; }
  static ShiftPolicy adaptive_prop53() { return ShiftPolicy{Kind::adaptive_prop53, {}}; }
};

struct PowerConfig {
  int max_iters = 5000;
  double move_tol = 1e-13;
  double value_tol = 1e-14;
  // The value test alone would stop while the iterates still carry ~1e-7
  // error (the objective is quadratic around a maximizer), so it only fires
  // after this many consecutive flat sweeps.
  int value_stall_sweeps = 30;
  std::vector<int> block_order;  // empty = ascending; honored by PMI
  enum class Iteration { pmi, pmie } iteration = Iteration::pmie;
};

struct PowerTrace {
  std::vector<double> objective;  // after every block update (PMI) or sweep (PMIe)
  std::vector<double> movement;   // per sweep
};

struct PmieStats {
  int full_contractions = 0;  // contractions against the top-level tensor
};

namespace detail {

inline FlatteningTuple exponents_of(const SymmetryType& sym) {
  FlatteningTuple d(static_cast<std::size_t>(sym.block_count()));
  for (int b = 0; b < sym.block_count(); ++b) d[static_cast<std::size_t>(b)] = sym.block(b).exponent;
  return d;
}

inline Eigen::VectorXd block_gradient(const PSTensor& T, const FactorTuple& w, int block) {
  FlatteningTuple f = exponents_of(T.symmetry());
  f[static_cast<std::size_t>(block)] -= 1;
  const PSTensor g = contract(T, w, f);
  return g.as_vector();
}

}  // namespace detail

// Interpolates between the convexity shifts: decreasing in the objective
// value, continuous at 2/3, zero at 1.
inline double shift_h(double nu) {
  return nu <= 2.0 / 3.0 ? 1.0 - nu / 2.0 : std::sqrt(std::max(0.0, 2.0 * nu * (1.0 - nu)));
}

// Shifts for an explicit tensor target. The spectral norm in the convexity
// bound is replaced by the Frobenius norm, a certified upper bound.
inline std::vector<double> shifts_for(const PSTensor& T, const ShiftPolicy& policy, double /*nu*/ = 0.0) {
  const int nb = T.symmetry().block_count();
  switch (policy.kind) {
    case ShiftPolicy::Kind::fixed:
      if (static_cast<int>(policy.gammas.size()) != nb)
        throw std::invalid_argument("shifts_for: fixed shift count mismatch");
      return policy.gammas;
    case ShiftPolicy::Kind::frobenius_thm51: {
      const double norm = T.frobenius_norm();
      std::vector<double> g(static_cast<std::size_t>(nb));
      for (int b = 0; b < nb; ++b) g[static_cast<std::size_t>(b)] = (T.symmetry().block(b).exponent - 1) * norm;
      return g;
    }
    case ShiftPolicy::Kind::adaptive_prop53:
      throw std::invalid_argument("shifts_for: adaptive shifts apply to slice-subspace targets only");
  }
  return {};
}

// Shifts for the implicit symmetrized slice tensor. Its spectral norm is at
// most one (the objective is a squared projection), so the Frobenius-policy
// scale is 1; the adaptive policy uses the current objective value nu,
// clamped into [0,1].
inline std::vector<double> shifts_for(const SlicedSubspace& S, const ShiftPolicy& policy, double nu = 0.0,
                                      int* clamped = nullptr) {
  const int nb = S.slice_type.block_count();
  std::vector<double> g(static_cast<std::size_t>(nb));
  switch (policy.kind) {
    case ShiftPolicy::Kind::fixed:
      if (static_cast<int>(policy.gammas.size()) != nb)
        throw std::invalid_argument("shifts_for: fixed shift count mismatch");
      return policy.gammas;
    case ShiftPolicy::Kind::frobenius_thm51:
      for (int b = 0; b < nb; ++b) g[static_cast<std::size_t>(b)] = 2.0 * S.slice_type.block(b).exponent - 1.0;
      return g;
    case ShiftPolicy::Kind::adaptive_prop53: {
      if (nu < 0.0 || nu > 1.0) {
        if (clamped) ++*clamped;
        nu = std::min(1.0, std::max(0.0, nu));
      }
      const double h = shift_h(nu);
      for (int b = 0; b < nb; ++b) {
        const int fb = S.slice_type.block(b).exponent;
        g[static_cast<std::size_t>(b)] = fb == 1 ? 0.0 : std::sqrt((fb - 1.0) / fb) * h;
      }
      return g;
    }
  }
  return {};
}

// <T, (x) v^a> plus the shift terms sum gamma_i ||v^(i)||^{a_i}.
inline double objective_F(const PSTensor& T, const FactorTuple& w, const std::vector<double>& shifts) {
  double val = full_contract(T, w);
  for (int b = 0; b < T.symmetry().block_count(); ++b) {
    const double g = shifts.empty() ? 0.0 : shifts[static_cast<std::size_t>(b)];
    if (g != 0.0) val += g * std::pow(w[static_cast<std::size_t>(b)].norm(), T.symmetry().block(b).exponent);
  }
  return val;
}

// Squared norm of the projection of the rank-one tuple tensor onto the slice
// span; always in [0,1] for unit factors.
inline double objective_FA(const SlicedSubspace& S, const FactorTuple& w) {
  double val = 0.0;
  for (const PSTensor& slice : S.slices) {
    const double s = full_contract(slice, w);
    val += s * s;
  }
  return val;
}

// One Gauss-Seidel sweep of the shifted power method: each block moves to the
// normalized shifted gradient, using already-updated earlier blocks. A zero
// update vector leaves the block unchanged.
inline FactorTuple pmi_step(const PSTensor& T, FactorTuple w, const std::vector<double>& shifts,
                            const std::vector<int>* order = nullptr, PowerTrace* trace = nullptr) {
  const int nb = T.symmetry().block_count();
  std::vector<int> seq;
  if (order && !order->empty())
    seq = *order;
  else {
    seq.resize(static_cast<std::size_t>(nb));
    for (int b = 0; b < nb; ++b) seq[static_cast<std::size_t>(b)] = b;
  }
  for (int b : seq) {
    Eigen::VectorXd t = detail::block_gradient(T, w, b);
    const double g = shifts.empty() ? 0.0 : shifts[static_cast<std::size_t>(b)];
    t += g * w[static_cast<std::size_t>(b)];
    const double n = t.norm();
    if (n > 0.0) w[static_cast<std::size_t>(b)] = t / n;
    if (trace) trace->objective.push_back(objective_F(T, w, shifts));
  }
  return w;
}

namespace detail {

inline void pmie_recurse(const PSTensor& T, FactorTuple& w, const std::vector<double>& shifts, int lo, int hi,
                         int depth, PmieStats* stats) {
  const int len = hi - lo;
  if (len == 1) {
    const int a = T.symmetry().block(0).exponent;
    FactorTuple sub{w[static_cast<std::size_t>(lo)]};
    FlatteningTuple f{a - 1};
    if (depth == 0 && stats) ++stats->full_contractions;
    Eigen::VectorXd t = contract(T, sub, f).as_vector();
    t += shifts[static_cast<std::size_t>(lo)] * w[static_cast<std::size_t>(lo)];
    const double n = t.norm();
    if (n > 0.0) w[static_cast<std::size_t>(lo)] = t / n;
    return;
  }
  const int k = len / 2;
  // T's blocks are the original blocks [lo, hi)
  FactorTuple local(static_cast<std::size_t>(len));
  for (int b = 0; b < len; ++b) local[static_cast<std::size_t>(b)] = w[static_cast<std::size_t>(lo + b)];

  FlatteningTuple tail(static_cast<std::size_t>(len), 0);
  for (int b = k; b < len; ++b) tail[static_cast<std::size_t>(b)] = T.symmetry().block(b).exponent;
  if (depth == 0 && stats) ++stats->full_contractions;
  const PSTensor U = contract(T, local, tail);
  pmie_recurse(U, w, shifts, lo, lo + k, depth + 1, stats);

  for (int b = 0; b < k; ++b) local[static_cast<std::size_t>(b)] = w[static_cast<std::size_t>(lo + b)];
  FlatteningTuple head(static_cast<std::size_t>(len), 0);
  for (int b = 0; b < k; ++b) head[static_cast<std::size_t>(b)] = T.symmetry().block(b).exponent;
  if (depth == 0 && stats) ++stats->full_contractions;
  const PSTensor W = contract(T, local, head);
  pmie_recurse(W, w, shifts, lo + k, hi, depth + 1, stats);
}

}  // namespace detail

// Recursive-halving sweep: identical iterates to pmi_step, two contractions
// against the full tensor per call.
inline FactorTuple pmie_step(const PSTensor& T, FactorTuple w, const std::vector<double>& shifts,
                             PmieStats* stats = nullptr) {
  std::vector<double> g = shifts;
  if (g.empty()) g.assign(static_cast<std::size_t>(T.symmetry().block_count()), 0.0);
  detail::pmie_recurse(T, w, g, 0, T.symmetry().block_count(), 0, stats);
  return w;
}

// Contraction of the implicit symmetrized slice tensor against all factor
// powers but one slot of block k, computed slice by slice without forming
// the doubled-order tensor. Optionally exposes the per-slice overlaps s_j.
inline Eigen::VectorXd tilde_contract(const SlicedSubspace& S, const FactorTuple& w, int block,
                                      Eigen::VectorXd* overlaps = nullptr) {
  const SymmetryType& type = S.slice_type;
  if (block < 0 || block >= type.block_count() || type.block(block).exponent < 1)
    throw std::invalid_argument("tilde_contract: block without row exponent");
  FlatteningTuple f = detail::exponents_of(type);
  f[static_cast<std::size_t>(block)] -= 1;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(type.block(block).dimension);
  if (overlaps) overlaps->resize(S.rank());
  for (int j = 0; j < S.rank(); ++j) {
    const Eigen::VectorXd g = contract(S.slices[static_cast<std::size_t>(j)], w, f).as_vector();
    const double s = g.dot(w[static_cast<std::size_t>(block)]);
    if (overlaps) (*overlaps)(j) = s;
    out += s * g;
  }
  return out;
}

// Residual of the singular-tuple equations, max over blocks of
// ||T . (x) v^{d - e_j} - sigma v^(j)||.
inline double psvt_residual(const PSTensor& T, const FactorTuple& w, double sigma) {
  double res = 0.0;
  for (int b = 0; b < T.symmetry().block_count(); ++b) {
    const Eigen::VectorXd g = detail::block_gradient(T, w, b);
    res = std::max(res, (g - sigma * w[static_cast<std::size_t>(b)]).norm());
  }
  return res;
}

inline double psvt_residual(const PSTensor& T, const FactorTuple& w) {
  return psvt_residual(T, w, full_contract(T, w));
}

namespace detail {

// Shared outer loop: sweeps until the iterates stop moving, the objective
// stays flat for a sustained window, or the iteration budget runs out.
template <class SweepFn, class ValueFn>
PSVT power_loop(const std::vector<int>& dims, const PowerConfig& cfg, std::optional<FactorTuple> init, Rng& rng,
                SweepFn&& sweep, ValueFn&& value, PowerTrace* trace) {
  FactorTuple w;
  if (init) {
    if (init->size() != dims.size()) throw std::invalid_argument("run_pshopm: init tuple size mismatch");
    w = *init;
    for (std::size_t b = 0; b < w.size(); ++b) {
      if (static_cast<int>(w[b].size()) != dims[b]) throw std::invalid_argument("run_pshopm: init dimension mismatch");
      const double n = w[b].norm();
      if (std::abs(n - 1.0) > 1e-12) throw std::invalid_argument("run_pshopm: init factors must be unit vectors");
    }
  } else {
    for (int m : dims) w.push_back(rng.unit_vector(m));
  }

  PSVT out;
  double prev_value = value(w);
  int stall = 0;
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    const FactorTuple before = w;
    sweep(w);
    double movement = 0.0;
    for (std::size_t b = 0; b < w.size(); ++b) movement = std::max(movement, (w[b] - before[b]).norm());
    const double val = value(w);
    if (trace) trace->movement.push_back(movement);
    if (movement < cfg.move_tol) {
      out.converged = true;
      ++iter;
      break;
    }
    if (std::abs(val - prev_value) < cfg.value_tol) {
      if (++stall >= cfg.value_stall_sweeps) {
        out.converged = true;
        ++iter;
        break;
      }
    } else {
      stall = 0;
    }
    prev_value = val;
  }
  out.iterations = iter;
  out.factors = std::move(w);
  return out;
}

}  // namespace detail

// PS-HOPM on an explicit partially symmetric tensor.
inline PSVT run_pshopm(const PSTensor& T, const PowerConfig& cfg, const ShiftPolicy& policy,
                       std::optional<FactorTuple> init, Rng& rng, PowerTrace* trace = nullptr) {
  const SymmetryType& sym = T.symmetry();
  if (sym.block_count() == 0) throw std::invalid_argument("run_pshopm: scalar target");
  const std::vector<double> shifts = shifts_for(T, policy);
  std::vector<int> dims;
  for (const Block& b : sym.blocks()) dims.push_back(b.dimension);

  PSVT out = detail::power_loop(
      dims, cfg, std::move(init), rng,
      [&](FactorTuple& w) {
        if (cfg.iteration == PowerConfig::Iteration::pmi)
          w = pmi_step(T, std::move(w), shifts, &cfg.block_order, trace);
        else {
          w = pmie_step(T, std::move(w), shifts);
          if (trace) trace->objective.push_back(objective_F(T, w, shifts));
        }
      },
      [&](const FactorTuple& w) { return objective_F(T, w, shifts); }, trace);

  out.sigma = full_contract(T, out.factors);
  out.residual = psvt_residual(T, out.factors, out.sigma);
  return out;
}

// PS-HOPM on the implicit symmetrized slice tensor of a subspace. Adaptive
// shifts are recomputed from the current objective once per sweep. The
// returned tuple also carries the lift onto the stacked tensor: singular
// value sqrt(sigma) and last-block vector from the normalized slice overlaps.
inline PSVT run_pshopm(const SlicedSubspace& S, const PowerConfig& cfg, const ShiftPolicy& policy,
                       std::optional<FactorTuple> init, Rng& rng, PowerTrace* trace = nullptr) {
  const SymmetryType& type = S.slice_type;
  if (type.block_count() == 0 || S.rank() == 0) throw std::invalid_argument("run_pshopm: empty subspace");
  std::vector<int> dims;
  for (const Block& b : type.blocks()) dims.push_back(b.dimension);

  int clamps = 0;
  double nu = 0.0;
  bool have_nu = false;
  PSVT out = detail::power_loop(
      dims, cfg, std::move(init), rng,
      [&](FactorTuple& w) {
        if (!have_nu) {
          nu = objective_FA(S, w);
          have_nu = true;
        }
        const std::vector<double> shifts = shifts_for(S, policy, nu, &clamps);
        for (int b = 0; b < type.block_count(); ++b) {
          Eigen::VectorXd t = tilde_contract(S, w, b);
          t += shifts[static_cast<std::size_t>(b)] * w[static_cast<std::size_t>(b)];
          const double n = t.norm();
          if (n > 0.0) w[static_cast<std::size_t>(b)] = t / n;
          if (trace) trace->objective.push_back(objective_FA(S, w));
        }
        nu = objective_FA(S, w);
      },
      [&](const FactorTuple& w) { return objective_FA(S, w); }, trace);

  out.shift_clamps = clamps;
  Eigen::VectorXd overlaps;
  Eigen::VectorXd g0 = tilde_contract(S, out.factors, 0, &overlaps);
  out.sigma = overlaps.squaredNorm();
  double res = (g0 - out.sigma * out.factors[0]).norm();
  for (int b = 1; b < type.block_count(); ++b) {
    const Eigen::VectorXd gb = tilde_contract(S, out.factors, b);
    res = std::max(res, (gb - out.sigma * out.factors[static_cast<std::size_t>(b)]).norm());
  }
  out.residual = res;
  out.lifted_sigma = std::sqrt(std::max(0.0, out.sigma));
  out.lift_w = overlaps.norm() > 0.0 ? Eigen::VectorXd(overlaps / overlaps.norm()) : overlaps;
  return out;
}

}  // namespace mspm
