#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mspm/completion.hpp"
#include "mspm/planner.hpp"
#include "mspm/power.hpp"
#include "mspm/rng.hpp"
#include "mspm/subspace.hpp"
#include "mspm/tensor.hpp"

namespace mspm {

struct MSPMConfig {
  std::optional<FlatteningPlan> plan;  // nullopt = choose via optimal_plan
  RankPolicy rank_policy = RankPolicy::auto_gap();
  PowerConfig power;
  ShiftPolicy shifts = ShiftPolicy::adaptive_prop53();
  // Acceptance window for the singular-value-one certificate; widened to
  // 10x the post-truncation spectral gap ratio on noisy inputs, capped so
  // the certificate still separates components from spurious critical
  // points.
  double accept_tol_floor = 1e-6;
  double accept_tol_cap = 0.25;
  bool noise_scaled_tolerances = true;
  int max_restarts = 100;
  std::uint64_t seed = 0;
};

struct ComponentInfo {
  double lambda = 0.0;
  FactorTuple factors;
  double sigma = 0.0;         // subspace singular value at acceptance
  double lifted_sigma = 0.0;  // singular value on the stacked tensor
  double residual = 0.0;
  int iterations = 0;
  int restarts = 0;
};

struct DecompositionResult {
  SymmetryType symmetry;
  std::vector<ComponentInfo> components;
  bool complete = false;
  double relative_error = 1.0;
  FlatteningPlan plan;
  int declared_rank = 0;
  double accept_tol = 0.0;
  double gap_ratio = 0.0;
  long long total_iterations = 0;
  long long total_restarts = 0;
  std::vector<std::string> notes;
};

inline PSTensor reconstruct(const DecompositionResult& result, const SymmetryType& sym) {
  PSTensor out = PSTensor::zeros(sym);
  for (const ComponentInfo& c : result.components) add_rank_one_inplace(out, c.lambda, c.factors);
  return out;
}

inline double relative_error(const PSTensor& T, const DecompositionResult& result) {
  const PSTensor rec = reconstruct(result, T.symmetry());
  const double tn = T.frobenius_norm();
  return (PSTensor(T) -= rec).frobenius_norm() / std::max(tn, 1e-300);
}

namespace detail {

// Incoherence diagnostics of the recovered row parts: the largest pairwise
// overlap of the rank-one row tensors and of the per-block factors.
inline std::string coherence_note(const std::vector<ComponentInfo>& comps, const SymmetryType& sym,
                                  const FlatteningTuple& f) {
  if (comps.size() < 2) return "spurious critical point discarded (fewer than two components recovered)";
  double rho = 0.0;
  std::vector<double> rho_k(f.size(), 0.0);
  std::vector<PSTensor> rows;
  for (const ComponentInfo& c : comps) rows.push_back(make_rank_one(c.factors, f, 1.0));
  for (std::size_t i = 0; i < comps.size(); ++i)
    for (std::size_t j = i + 1; j < comps.size(); ++j) {
      rho = std::max(rho, std::abs(dot(rows[i], rows[j])));
      for (std::size_t b = 0; b < f.size(); ++b)
        rho_k[b] = std::max(rho_k[b], std::abs(comps[i].factors[b].dot(comps[j].factors[b])));
    }
  std::ostringstream os;
  os << "spurious critical point discarded; recovered-factor coherence rho=" << rho << " rho_k=";
  for (std::size_t b = 0; b < rho_k.size(); ++b) os << (b ? "," : "") << rho_k[b];
  (void)sym;
  return os.str();
}

inline void flip_for_positive_lambda(ComponentInfo& c, const SymmetryType& sym) {
  if (c.lambda >= 0.0) return;
  int odd = -1;
  for (int b = 0; b < sym.block_count(); ++b)
    if (sym.block(b).exponent % 2 == 1) odd = b;
  if (odd < 0) return;  // all-even exponents: the sign of lambda is intrinsic
  c.factors[static_cast<std::size_t>(odd)] = -c.factors[static_cast<std::size_t>(odd)];
  c.lambda = -c.lambda;
}

}  // namespace detail

// The full pipeline: subspace extraction, repeated singular-tuple search with
// restarts, summand completion, and deflation, one component per round.
inline DecompositionResult decompose(const PSTensor& T, const MSPMConfig& cfg) {
  const SymmetryType& sym = T.symmetry();
  DecompositionResult result;
  result.symmetry = sym;

  FlatteningPlan plan = cfg.plan ? *cfg.plan : optimal_plan(sym);
  check_flattening(sym, plan.f);
  result.plan = plan;
  const FlatteningTuple dmf = complement_tuple(sym, plan.f);

  ExtractResult ext = extract(T, plan.f, cfg.rank_policy);
  const int r = ext.state.rank();
  result.declared_rank = r;
  result.gap_ratio = ext.gap_ratio;
  const double scale_tol = cfg.noise_scaled_tolerances ? std::min(10.0 * ext.gap_ratio, cfg.accept_tol_cap) : 0.0;
  result.accept_tol = std::max(cfg.accept_tol_floor, scale_tol);

  if (static_cast<count_t>(r) > plan.r_max)
    result.notes.push_back("declared rank " + std::to_string(r) + " exceeds the plan's guaranteed recovery rank " +
                           std::to_string(plan.r_max));

  std::optional<DeflationState> partner_state;
  if (plan.mode == RecoveryMode::paired) {
    if (!plan.partner) throw std::invalid_argument("decompose: paired plan without partner tuple");
    partner_state = extract(T, *plan.partner, RankPolicy::fixed(r)).state;
  }

  Rng rng = Rng::derive(cfg.seed, {0x6d73706dull});
  std::vector<int> row_blocks;
  for (int b = 0; b < sym.block_count(); ++b)
    if (plan.f[static_cast<std::size_t>(b)] > 0) row_blocks.push_back(b);

  for (int round = 0; round < r; ++round) {
    const SlicedSubspace sub = subspace_from_state(ext.state);
    const SlicedSubspace comp_space = complement_subspace_from_state(ext.state);
    std::optional<SlicedSubspace> partner_space;
    if (partner_state) partner_space = subspace_from_state(*partner_state);

    ComponentInfo comp;
    bool accepted = false;
    for (int attempt = 0; attempt < cfg.max_restarts && !accepted; ++attempt) {
      const PSVT psvt = run_pshopm(sub, cfg.power, cfg.shifts, std::nullopt, rng);
      comp.iterations += psvt.iterations;
      if (!psvt.converged || std::abs(psvt.sigma - 1.0) > result.accept_tol) {
        if (psvt.converged && result.notes.size() < 8)
          result.notes.push_back(detail::coherence_note(result.components, sym, plan.f));
        ++comp.restarts;
        continue;
      }

      std::vector<Eigen::VectorXd> row_factors(static_cast<std::size_t>(sym.block_count()));
      for (std::size_t i = 0; i < row_blocks.size(); ++i)
        row_factors[static_cast<std::size_t>(row_blocks[i])] = psvt.factors[i];

      CompletionContext ctx;
      ctx.full_type = sym;
      ctx.plan = plan;
      ctx.complement_space = &comp_space;
      ctx.partner_space = partner_space ? &*partner_space : nullptr;
      ctx.tol_match = result.accept_tol;
      ctx.power = cfg.power;
      ctx.rng = &rng;
      try {
        comp.factors = complete(row_factors, ctx);
      } catch (const completion_error& e) {
        if (result.notes.size() < 64) result.notes.push_back(std::string("completion restart: ") + e.what());
        ++comp.restarts;
        continue;
      }
      comp.sigma = psvt.sigma;
      comp.lifted_sigma = psvt.lifted_sigma;
      comp.residual = psvt.residual;
      accepted = true;
    }

    if (!accepted) {
      result.notes.push_back("restart budget exhausted in round " + std::to_string(round + 1));
      result.complete = false;
      result.relative_error = relative_error(T, result);
      for (const ComponentInfo& c : result.components) {
        result.total_iterations += c.iterations;
        result.total_restarts += c.restarts;
      }
      return result;
    }

    const PSTensor row_part = make_rank_one(comp.factors, plan.f, 1.0);
    const PSTensor col_part = make_rank_one(comp.factors, dmf, 1.0);
    try {
      comp.lambda = deflate(ext.state, row_part, col_part);
      if (partner_state) {
        const PSTensor prow = make_rank_one(comp.factors, *plan.partner, 1.0);
        const PSTensor pcol = make_rank_one(comp.factors, complement_tuple(sym, *plan.partner), 1.0);
        const double lambda_partner = deflate(*partner_state, prow, pcol);
        if (std::abs(lambda_partner - comp.lambda) > 1e-4 * std::max(1.0, std::abs(comp.lambda)) &&
            result.notes.size() < 64)
          result.notes.push_back("partner deflation coefficient drifted from primary");
      }
    } catch (const deflation_error& e) {
      result.notes.push_back(std::string("deflation aborted the run: ") + e.what());
      result.complete = false;
      result.relative_error = relative_error(T, result);
      for (const ComponentInfo& c : result.components) {
        result.total_iterations += c.iterations;
        result.total_restarts += c.restarts;
      }
      return result;
    }

    detail::flip_for_positive_lambda(comp, sym);
    result.components.push_back(std::move(comp));
  }

  result.complete = true;
  result.relative_error = relative_error(T, result);
  for (const ComponentInfo& c : result.components) {
    result.total_iterations += c.iterations;
    result.total_restarts += c.restarts;
  }
  return result;
}

inline nlohmann::json result_to_json(const DecompositionResult& result) {
  nlohmann::json j;
  j["symmetry"] = nlohmann::json::array();
  for (const Block& b : result.symmetry.blocks()) j["symmetry"].push_back({b.exponent, b.dimension});
  j["rank"] = result.components.size();
  j["components"] = nlohmann::json::array();
  for (const ComponentInfo& c : result.components) {
    nlohmann::json jc;
    jc["lambda"] = c.lambda;
    jc["factors"] = nlohmann::json::array();
    for (const Eigen::VectorXd& v : c.factors)
      jc["factors"].push_back(std::vector<double>(v.data(), v.data() + v.size()));
    j["components"].push_back(std::move(jc));
  }
  nlohmann::json diag;
  diag["complete"] = result.complete;
  diag["relative_error"] = result.relative_error;
  diag["declared_rank"] = result.declared_rank;
  diag["accept_tol"] = result.accept_tol;
  diag["gap_ratio"] = result.gap_ratio;
  diag["plan"] = {{"f", result.plan.f},
                  {"mode", mode_str(result.plan.mode)},
                  {"r_max", result.plan.r_max},
                  {"r_max_literal", result.plan.r_max_literal}};
  if (result.plan.partner) diag["plan"]["partner"] = *result.plan.partner;
  diag["sigma"] = nlohmann::json::array();
  diag["residual"] = nlohmann::json::array();
  diag["iterations"] = nlohmann::json::array();
  diag["restarts"] = nlohmann::json::array();
  for (const ComponentInfo& c : result.components) {
    diag["sigma"].push_back(c.sigma);
    diag["residual"].push_back(c.residual);
    diag["iterations"].push_back(c.iterations);
    diag["restarts"].push_back(c.restarts);
  }
  diag["total_iterations"] = result.total_iterations;
  diag["total_restarts"] = result.total_restarts;
  diag["notes"] = result.notes;
  diag["rng"] = kRngName;
  j["diagnostics"] = std::move(diag);
  return j;
}

}  // namespace mspm
