#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mspm/decompose.hpp"
#include "mspm/rng.hpp"
#include "mspm/tensor.hpp"

namespace mspm {

struct ExperimentSpec {
  SymmetryType symmetry;
  int rank = 1;
  enum class FactorLaw { gaussian_unit, stiefel_orthogonal } factor_law = FactorLaw::gaussian_unit;
  double noise = 0.0;  // target ||noise|| / ||clean||
  std::uint64_t seed = 0;
  int repetitions = 1;
  std::optional<FlatteningPlan> plan;
  bool auto_rank = false;
  int max_restarts = 100;
};

struct Instance {
  PSTensor tensor;  // observed (clean + scaled symmetric noise)
  PSTensor clean;
  std::vector<double> lambdas;
  std::vector<FactorTuple> factors;
};

// One synthetic instance: unit Gaussian factors (block 1 optionally from the
// Stiefel manifold), weights exp(2u-1), and Gaussian noise projected onto the
// symmetry type and rescaled to the requested relative level.
inline Instance gen_instance(const ExperimentSpec& spec, Rng& rng) {
  const SymmetryType& sym = spec.symmetry;
  const int r = spec.rank;
  if (r < 1) throw std::invalid_argument("gen_instance: rank must be >= 1");

  Eigen::MatrixXd stiefel_block;
  if (spec.factor_law == ExperimentSpec::FactorLaw::stiefel_orthogonal) {
    if (r > sym.block(0).dimension)
      throw std::invalid_argument("gen_instance: Stiefel factors need rank <= first block dimension");
    stiefel_block = rng.stiefel(sym.block(0).dimension, r);
  }

  Instance inst;
  for (int i = 0; i < r; ++i) {
    FactorTuple tuple;
    for (int b = 0; b < sym.block_count(); ++b) {
      if (b == 0 && spec.factor_law == ExperimentSpec::FactorLaw::stiefel_orthogonal)
        tuple.push_back(stiefel_block.col(i));
      else
        tuple.push_back(rng.unit_vector(sym.block(b).dimension));
    }
    inst.factors.push_back(std::move(tuple));
  }
  for (int i = 0; i < r; ++i) inst.lambdas.push_back(std::exp(2.0 * rng.uniform() - 1.0));

  inst.clean = PSTensor::zeros(sym);
  for (int i = 0; i < r; ++i)
    add_rank_one_inplace(inst.clean, inst.lambdas[static_cast<std::size_t>(i)], inst.factors[static_cast<std::size_t>(i)]);

  inst.tensor = inst.clean;
  if (spec.noise > 0.0) {
    std::vector<double> raw(sym.entry_count());
    for (double& x : raw) x = rng.normal();
    PSTensor z = symmetrize(std::move(raw), sym);
    const double zn = z.frobenius_norm();
    if (zn > 0.0) {
      z *= spec.noise * inst.clean.frobenius_norm() / zn;
      inst.tensor += z;
    }
  }
  return inst;
}

// Greedy matching score: walk the true vectors in order, pair each with the
// unused recovered vector of largest absolute cosine, and average.
inline double ascore(const std::vector<Eigen::VectorXd>& truth, const std::vector<Eigen::VectorXd>& recovered) {
  if (truth.size() != recovered.size()) throw std::invalid_argument("ascore: count mismatch");
  std::vector<bool> used(recovered.size(), false);
  double total = 0.0;
  for (const Eigen::VectorXd& a : truth) {
    int best = -1;
    double best_cos = -1.0;
    for (std::size_t j = 0; j < recovered.size(); ++j) {
      if (used[j]) continue;
      const double c = std::abs(a.dot(recovered[j])) / (a.norm() * recovered[j].norm());
      if (c > best_cos) {
        best_cos = c;
        best = static_cast<int>(j);
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    total += best_cos;
  }
  return total / static_cast<double>(truth.size());
}

struct MetricRow {
  std::string method;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  double ascore = 0.0;
  double rel_error = 0.0;
  long long restarts = 0;
  long long iterations = 0;
  bool failed = false;
  int rep = 0;
};

using WallClock = std::function<double()>;

inline double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

namespace detail {

inline MetricRow run_one_rep(const ExperimentSpec& spec, int rep, const WallClock& clock) {
  MetricRow row;
  row.method = "mspm";
  row.rep = rep;
  Rng inst_rng = Rng::derive(spec.seed, {0xda7aull, static_cast<std::uint64_t>(rep)});
  row.seed = spec.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(rep + 1));
  const Instance inst = gen_instance(spec, inst_rng);

  MSPMConfig cfg;
  cfg.plan = spec.plan;
  cfg.rank_policy = spec.auto_rank ? RankPolicy::auto_gap() : RankPolicy::fixed(spec.rank);
  cfg.seed = row.seed;
  cfg.max_restarts = spec.max_restarts;

  const double t0 = clock();
  DecompositionResult result;
  try {
    result = decompose(inst.tensor, cfg);
  } catch (const std::exception&) {
    result.complete = false;
  }
  row.wall_time_s = clock() - t0;
  row.failed = !result.complete;
  row.rel_error = result.components.empty() ? 1.0 : relative_error(inst.tensor, result);
  row.restarts = result.total_restarts;
  row.iterations = result.total_iterations;
  if (!row.failed) {
    std::vector<Eigen::VectorXd> truth, rec;
    for (int i = 0; i < spec.rank; ++i) truth.push_back(inst.factors[static_cast<std::size_t>(i)][0]);
    for (const ComponentInfo& c : result.components) rec.push_back(c.factors[0]);
    row.ascore = ascore(truth, rec);
  }
  return row;
}

}  // namespace detail

// Runs the seeded repetitions (in parallel when hardware allows), assembling
// rows in repetition order.
inline std::vector<MetricRow> run_experiment(const ExperimentSpec& spec, WallClock clock = {}) {
  if (!clock) clock = steady_seconds;
  std::vector<MetricRow> rows(static_cast<std::size_t>(spec.repetitions));
  const unsigned workers = std::min<unsigned>(std::thread::hardware_concurrency(), static_cast<unsigned>(spec.repetitions));
  if (workers <= 1) {
    for (int rep = 0; rep < spec.repetitions; ++rep) rows[static_cast<std::size_t>(rep)] = detail::run_one_rep(spec, rep, clock);
    return rows;
  }
  std::vector<std::future<MetricRow>> futures;
  for (int rep = 0; rep < spec.repetitions; ++rep)
    futures.push_back(std::async(std::launch::async, [&spec, rep, &clock] { return detail::run_one_rep(spec, rep, clock); }));
  for (int rep = 0; rep < spec.repetitions; ++rep) rows[static_cast<std::size_t>(rep)] = futures[static_cast<std::size_t>(rep)].get();
  return rows;
}

namespace detail {

inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

// CSV with the metric columns plus plot-ready log pairs.
inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "method,seed,wall_time_s,ascore,rel_error,restarts,iterations,failed,rep,"
         "log10_wall_time,log10_one_minus_ascore,log10_rel_error\n";
  for (const MetricRow& r : rows) {
    const double lt = r.wall_time_s > 0.0 ? std::log10(r.wall_time_s) : -std::numeric_limits<double>::infinity();
    const double la = std::log10(std::max(1.0 - r.ascore, 1e-300));
    const double le = std::log10(std::max(r.rel_error, 1e-300));
    out << r.method << ',' << r.seed << ',' << detail::fmt_double(r.wall_time_s) << ','
        << detail::fmt_double(r.ascore) << ',' << detail::fmt_double(r.rel_error) << ',' << r.restarts << ','
        << r.iterations << ',' << (r.failed ? 1 : 0) << ',' << r.rep << ',' << detail::fmt_double(lt) << ','
        << detail::fmt_double(la) << ',' << detail::fmt_double(le) << '\n';
  }
  return out.str();
}

struct BasinPoint {
  double x = 0.0, y = 0.0;
  int label = -1;  // planted component (1-based), 0 = converged off-target, -1 = no convergence
  int iterations = 0;
};

// Basin-of-attraction scan of a seeded rank-3 asymmetric 3x3x3 instance:
// the stacked tensor of the (1,1,0) flattening is probed from third-mode
// directions (1,x,y) on a grid, with the first two blocks initialized to the
// dominant singular pair of the corresponding slice combination.
inline std::vector<BasinPoint> basin_scan(std::uint64_t seed, int grid) {
  if (grid < 2) throw std::invalid_argument("basin_scan: grid must be >= 2");
  Rng rng = Rng::derive(seed, {0xba51ull});
  const SymmetryType sym({Block{1, 3}, Block{1, 3}, Block{1, 3}});
  std::vector<FactorTuple> truth;
  PSTensor T = PSTensor::zeros(sym);
  for (int i = 0; i < 3; ++i) {
    FactorTuple t{rng.unit_vector(3), rng.unit_vector(3), rng.unit_vector(3)};
    add_rank_one_inplace(T, 1.0, t);
    truth.push_back(std::move(t));
  }

  const FlatteningTuple f{1, 1, 0};
  const ExtractResult ext = extract(T, f, RankPolicy::fixed(3));
  const PSTensor stacked = stack_to_tensor(ext.subspace);

  PowerConfig cfg;
  const ShiftPolicy policy = ShiftPolicy::frobenius_thm51();  // all exponents 1: zero shifts

  std::vector<BasinPoint> points;
  points.reserve(static_cast<std::size_t>(grid) * static_cast<std::size_t>(grid));
  Rng dummy(0);
  for (int iy = 0; iy < grid; ++iy) {
    for (int ix = 0; ix < grid; ++ix) {
      BasinPoint p;
      p.x = -1.0 + 2.0 * ix / (grid - 1);
      p.y = -1.0 + 2.0 * iy / (grid - 1);
      Eigen::Vector3d c(1.0, p.x, p.y);
      c.normalize();
      Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
      for (int j = 0; j < 3; ++j) {
        Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> slice(
            ext.subspace.slices[static_cast<std::size_t>(j)].values().data());
        m += c(j) * slice;
      }
      Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
      FactorTuple init{svd.matrixU().col(0), svd.matrixV().col(0), c};
      const PSVT psvt = run_pshopm(stacked, cfg, policy, init, dummy);
      p.iterations = psvt.iterations;
      if (psvt.converged) {
        p.label = 0;
        for (int i = 0; i < 3; ++i) {
          const double ca = std::abs(psvt.factors[0].dot(truth[static_cast<std::size_t>(i)][0]));
          const double cb = std::abs(psvt.factors[1].dot(truth[static_cast<std::size_t>(i)][1]));
          if (std::min(ca, cb) >= 0.99) {
            p.label = i + 1;
            break;
          }
        }
      }
      points.push_back(p);
    }
  }
  return points;
}

inline std::string basin_csv(const std::vector<BasinPoint>& points) {
  std::ostringstream out;
  out << "x,y,component,iterations\n";
  for (const BasinPoint& p : points)
    out << detail::fmt_double(p.x) << ',' << detail::fmt_double(p.y) << ',' << p.label << ',' << p.iterations << '\n';
  return out.str();
}

inline SymmetryType symmetry_from_json(const nlohmann::json& j) {
  if (j.is_string()) return SymmetryType::parse(j.get<std::string>());
  std::vector<Block> blocks;
  for (const auto& jb : j) blocks.push_back(Block{jb.at(0).get<int>(), jb.at(1).get<int>()});
  return SymmetryType(std::move(blocks));
}

inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
  ExperimentSpec spec;
  spec.symmetry = symmetry_from_json(j.at("symmetry"));
  spec.rank = j.at("rank").get<int>();
  spec.noise = j.value("noise", 0.0);
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.repetitions = j.value("repetitions", 1);
  spec.auto_rank = j.value("auto_rank", false);
  spec.max_restarts = j.value("max_restarts", 100);
  const std::string law = j.value("factor_law", std::string("gaussian"));
  if (law == "stiefel" || law == "stiefel_orthogonal" || law == "orthogonal")
    spec.factor_law = ExperimentSpec::FactorLaw::stiefel_orthogonal;
  if (j.contains("flattening")) {
    FlatteningPlan plan;
    plan.f = j.at("flattening").get<std::vector<int>>();
    if (j.contains("partner")) plan.partner = j.at("partner").get<std::vector<int>>();
    plan.mode = recovery_mode(spec.symmetry, plan.f);
    if (const std::optional<FlatteningPlan> full = plan_for_tuple(spec.symmetry, plan.f);
        full && (!plan.partner || plan.mode != RecoveryMode::paired)) {
      plan = *full;
    } else if (plan.mode == RecoveryMode::paired && plan.partner) {
      plan.r_max = r_max_of(spec.symmetry, plan.f, plan.partner, true);
      plan.r_max_literal = r_max_of(spec.symmetry, plan.f, plan.partner, false);
    }
    spec.plan = plan;
  }
  return spec;
}

}  // namespace mspm
