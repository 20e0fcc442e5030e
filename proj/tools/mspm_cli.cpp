// Command-line surface: planning, synthetic instances, decomposition, the
// benchmark runner, and the basin scan. Exit codes: 0 success, 2 partial
// decomposition, 3 input/format error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mspm/bench.hpp"
#include "mspm/decompose.hpp"
#include "mspm/io.hpp"
#include "mspm/planner.hpp"

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mspm::format_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw mspm::format_error("write failed: " + path);
}

mspm::FlatteningTuple parse_tuple(const std::string& text) {
  mspm::FlatteningTuple f;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) f.push_back(std::stoi(item));
  return f;
}

// "f1,f2,...[;f1',f2',...]"
mspm::FlatteningPlan parse_plan(const mspm::SymmetryType& sym, const std::string& text) {
  mspm::FlatteningPlan plan;
  const auto semi = text.find(';');
  plan.f = parse_tuple(text.substr(0, semi));
  mspm::check_flattening(sym, plan.f);
  if (semi != std::string::npos) plan.partner = parse_tuple(text.substr(semi + 1));
  plan.mode = mspm::recovery_mode(sym, plan.f);
  if (plan.mode == mspm::RecoveryMode::paired) {
    if (!plan.partner) {
      const auto full = mspm::plan_for_tuple(sym, plan.f);
      if (!full) throw std::invalid_argument("no admissible partner tuple for " + mspm::tuple_str(plan.f));
      return *full;
    }
    plan.r_max = mspm::r_max_of(sym, plan.f, plan.partner, true);
    plan.r_max_literal = mspm::r_max_of(sym, plan.f, plan.partner, false);
  } else {
    plan.partner.reset();
    plan.r_max = mspm::r_max_of(sym, plan.f);
    plan.r_max_literal = plan.r_max;
  }
  return plan;
}

mspm::ShiftPolicy parse_shift_policy(const std::string& text) {
  if (text == "thm51" || text == "frobenius") return mspm::ShiftPolicy::frobenius_thm51();
  if (text == "prop53" || text == "adaptive") return mspm::ShiftPolicy::adaptive_prop53();
  if (text.rfind("fixed:", 0) == 0) {
    std::vector<double> g;
    std::stringstream ss(text.substr(6));
    std::string item;
    while (std::getline(ss, item, ',')) g.push_back(std::stod(item));
    return mspm::ShiftPolicy::fixed(std::move(g));
  }
  throw std::invalid_argument("unknown shift policy: " + text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partially symmetric tensor decomposition via the multi-subspace power method"};
  app.require_subcommand(1);

  // plan
  std::string plan_symmetry, plan_csv_path;
  CLI::App* plan = app.add_subcommand("plan", "flattening choices, rank bounds, and the optimal plan");
  plan->add_option("--symmetry", plan_symmetry, "block structure d1:m1,d2:m2,...")->required();
  plan->add_option("--csv", plan_csv_path, "write the table to a file instead of stdout");

  // synth
  std::string synth_symmetry, synth_out, synth_truth;
  int synth_rank = 1;
  double synth_noise = 0.0;
  std::uint64_t synth_seed = 0;
  bool synth_orthogonal = false;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic low-rank instance");
  synth->add_option("--symmetry", synth_symmetry)->required();
  synth->add_option("--rank", synth_rank)->required();
  synth->add_option("--noise", synth_noise);
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out, "tensor output path (.pstf or .json)")->required();
  synth->add_option("--truth", synth_truth, "write planted components as JSON");
  synth->add_flag("--orthogonal", synth_orthogonal, "orthonormal first-block factors");

  // decompose
  std::string dec_in, dec_out, dec_flattening, dec_shift = "prop53";
  int dec_rank = 0, dec_max_iters = 0;
  bool dec_auto_rank = false;
  double dec_tol = 0.0;
  std::uint64_t dec_seed = 0;
  CLI::App* dec = app.add_subcommand("decompose", "decompose a tensor file into rank-one components");
  dec->add_option("--in", dec_in)->required();
  dec->add_option("--rank", dec_rank, "declared rank");
  dec->add_flag("--auto-rank", dec_auto_rank, "estimate the rank from the spectral gap");
  dec->add_option("--flattening", dec_flattening, "f1,f2,...[;partner] (default: optimal plan)");
  dec->add_option("--shift-policy", dec_shift, "thm51 | prop53 | fixed:g1,g2,...");
  dec->add_option("--tol", dec_tol, "acceptance tolerance floor for the singular-value-one test");
  dec->add_option("--max-iters", dec_max_iters, "power method iteration cap");
  dec->add_option("--seed", dec_seed);
  dec->add_option("--out", dec_out, "result JSON path")->required();

  // bench
  std::string bench_config, bench_out;
  CLI::App* bench = app.add_subcommand("bench", "run a seeded experiment from a JSON config");
  bench->add_option("--config", bench_config)->required();
  bench->add_option("--out", bench_out, "metrics CSV path")->required();

  // basin
  std::uint64_t basin_seed = 0;
  int basin_grid = 100;
  std::string basin_out;
  CLI::App* basin = app.add_subcommand("basin", "basin-of-attraction scan on a seeded 3x3x3 instance");
  basin->add_option("--seed", basin_seed);
  basin->add_option("--grid", basin_grid);
  basin->add_option("--out", basin_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan->parsed()) {
      const mspm::SymmetryType sym = mspm::SymmetryType::parse(plan_symmetry);
      const std::string csv = mspm::plan_csv(sym);
      if (plan_csv_path.empty())
        std::cout << csv;
      else
        write_text(plan_csv_path, csv);
      const mspm::FlatteningPlan best = mspm::optimal_plan(sym);
      std::cerr << "optimal plan: f=(" << mspm::tuple_str(best.f) << ")"
                << (best.partner ? " partner=(" + mspm::tuple_str(*best.partner) + ")" : "")
                << " mode=" << mspm::mode_str(best.mode) << " r_max=" << best.r_max << "\n";
      return 0;
    }

    if (synth->parsed()) {
      mspm::ExperimentSpec spec;
      spec.symmetry = mspm::SymmetryType::parse(synth_symmetry);
      spec.rank = synth_rank;
      spec.noise = synth_noise;
      spec.seed = synth_seed;
      if (synth_orthogonal) spec.factor_law = mspm::ExperimentSpec::FactorLaw::stiefel_orthogonal;
      mspm::Rng rng = mspm::Rng::derive(synth_seed, {0xda7aull, 0});
      const mspm::Instance inst = mspm::gen_instance(spec, rng);
      mspm::write_tensor(inst.tensor, synth_out);
      if (!synth_truth.empty()) {
        nlohmann::json j;
        j["symmetry"] = nlohmann::json::array();
        for (const mspm::Block& b : spec.symmetry.blocks()) j["symmetry"].push_back({b.exponent, b.dimension});
        j["seed"] = synth_seed;
        j["noise"] = synth_noise;
        j["lambdas"] = inst.lambdas;
        j["factors"] = nlohmann::json::array();
        for (const mspm::FactorTuple& t : inst.factors) {
          nlohmann::json jt = nlohmann::json::array();
          for (const Eigen::VectorXd& v : t) jt.push_back(std::vector<double>(v.data(), v.data() + v.size()));
          j["factors"].push_back(std::move(jt));
        }
        write_text(synth_truth, j.dump(2));
      }
      return 0;
    }

    if (dec->parsed()) {
      const mspm::PSTensor T = mspm::read_tensor(dec_in);
      mspm::MSPMConfig cfg;
      cfg.seed = dec_seed;
      cfg.shifts = parse_shift_policy(dec_shift);
      if (!dec_flattening.empty()) cfg.plan = parse_plan(T.symmetry(), dec_flattening);
      if (dec_auto_rank || dec_rank <= 0)
        cfg.rank_policy = mspm::RankPolicy::auto_gap();
      else
        cfg.rank_policy = mspm::RankPolicy::fixed(dec_rank);
      if (dec_tol > 0.0) cfg.accept_tol_floor = dec_tol;
      if (dec_max_iters > 0) cfg.power.max_iters = dec_max_iters;
      const mspm::DecompositionResult result = mspm::decompose(T, cfg);
      write_text(dec_out, mspm::result_to_json(result).dump(2));
      for (const std::string& note : result.notes) std::cerr << "note: " << note << "\n";
      std::cerr << "components: " << result.components.size() << "/" << result.declared_rank
                << "  relative error: " << result.relative_error << "\n";
      return result.complete ? 0 : 2;
    }

    if (bench->parsed()) {
      std::ifstream in(bench_config);
      if (!in) throw mspm::format_error("cannot open: " + bench_config);
      nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded()) throw mspm::format_error("bench config is not valid JSON");
      const mspm::ExperimentSpec spec = mspm::spec_from_json(j);
      const std::vector<mspm::MetricRow> rows = mspm::run_experiment(spec);
      write_text(bench_out, mspm::metrics_csv(rows));
      return 0;
    }

    if (basin->parsed()) {
      write_text(basin_out, mspm::basin_csv(mspm::basin_scan(basin_seed, basin_grid)));
      return 0;
    }
  } catch (const mspm::format_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
