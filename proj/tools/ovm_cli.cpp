#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ovm/ovm.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

struct MappingArgs {
  std::string kind = "log";
  double c = 0.5;
  double d = 0.02;
  double slope = 1.0;
  double intercept = 0.0;
  std::vector<double> domain;
};

void add_mapping_options(CLI::App* cmd, MappingArgs& m, bool kind_required) {
  auto* kind = cmd->add_option("--kind", m.kind, "identity | linear | log | loglin");
  if (kind_required) kind->required();
  cmd->add_option("--c", m.c, "scale c of log / loglin");
  cmd->add_option("--d", m.d, "offset d of log / loglin");
  cmd->add_option("--slope", m.slope, "slope of linear");
  cmd->add_option("--intercept", m.intercept, "intercept of linear");
  cmd->add_option("--domain", m.domain, "domain bounds LO HI")->expected(2);
}

ovm::MappingFunction mapping_from(const MappingArgs& m, ovm::Interval fallback) {
  ovm::MappingSpec spec;
  spec.kind = m.kind;
  spec.c = m.c;
  spec.d = m.d;
  spec.slope = m.slope;
  spec.intercept = m.intercept;
  if (m.domain.size() == 2) spec.domain = ovm::Interval{m.domain[0], m.domain[1]};
  return ovm::build_mapping(spec, fallback);
}

std::filesystem::path output_dir(const std::string& flag, const ovm::ExperimentConfig& cfg) {
  if (!flag.empty()) return flag;
  if (!cfg.run.output_dir.empty()) return cfg.run.output_dir;
  if (const char* env = std::getenv("OVM_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return "results";
}

void print_table(std::ostream& out, const std::string& title, const ovm::ValueTable& q) {
  out << title << "\n";
  for (std::size_t s = 0; s < q.num_states(); ++s) {
    out << "  s" << s << ":";
    for (double v : q.row(s)) out << " " << ovm::format_decimal(v);
    out << "\n";
  }
}

nlohmann::json table_json(const ovm::ValueTable& q) {
  auto rows = nlohmann::json::array();
  for (std::size_t s = 0; s < q.num_states(); ++s) {
    rows.push_back(std::vector<double>(q.row(s).begin(), q.row(s).end()));
  }
  return rows;
}

int cmd_validate_mapping(const MappingArgs& m, std::size_t grid, double tolerance) {
  const auto default_domain =
      (m.kind == "log" || m.kind == "loglin") ? ovm::kDefaultLogDomain : ovm::kDefaultIdentityDomain;
  const auto f = mapping_from(m, default_domain);
  const auto r = ovm::validate(f, grid, tolerance);
  auto flag = [](bool ok) { return ok ? "pass" : "FAIL"; };
  std::cout << "mapping      " << f.name() << " on [" << f.domain().lo << ", " << f.domain().hi
            << "]\n"
            << "grid points  " << r.grid_points << "\n"
            << "monotone     " << flag(r.monotone) << "\n"
            << "round trip   " << flag(r.round_trip) << " (max error "
            << ovm::format_decimal(r.max_round_trip_error) << ")\n"
            << "slope lower  " << flag(r.slope_lower) << " (min "
            << ovm::format_decimal(r.min_slope) << ", declared "
            << ovm::format_decimal(f.derivative_bounds().lower) << ")\n"
            << "slope upper  " << flag(r.slope_upper) << " (max "
            << ovm::format_decimal(r.max_slope) << ", declared "
            << ovm::format_decimal(f.derivative_bounds().upper) << ")\n"
            << "curvature    " << flag(r.curvature) << " (sign " << r.curvature_sign
            << ", declared " << ovm::to_string(f.curvature()) << ")\n"
            << "delta        " << ovm::format_decimal(ovm::delta_ratio(f)) << "\n"
            << "result       " << (r.passed() ? "PASS" : "FAIL") << "\n";
  return r.passed() ? kOk : kCheckFailed;
}

int cmd_oracle(const std::string& mdp_path, const std::string& config_path, std::uint64_t seed,
               const std::optional<MappingArgs>& mapping, const std::string& output) {
  if (mdp_path.empty() == config_path.empty()) {
    throw ovm::ConfigError("oracle needs exactly one of --mdp or --config");
  }
  const ovm::TabularMdp mdp = mdp_path.empty()
                                  ? ovm::build_mdp(ovm::load_config(config_path), seed)
                                  : ovm::read_mdp_file(mdp_path);
  const auto qs = ovm::q_star(mdp);
  nlohmann::json doc{{"q_star", table_json(qs)}};
  print_table(std::cout, "Q*", qs);
  if (mapping) {
    const auto f = mapping_from(*mapping, ovm::return_bounds(mdp.reward_bounds(), mdp.gamma()));
    const auto fixed = ovm::naive_fixed_point(mdp, f);
    const auto gap = ovm::jensen_gap(mdp, f);
    print_table(std::cout, "naive fixed point", fixed);
    print_table(std::cout, "Jensen gap", gap);
    doc["naive_fixed_point"] = table_json(fixed);
    doc["jensen_gap"] = table_json(gap);
    doc["mapping"] = f.name();
  }
  if (!output.empty()) {
    std::ofstream out(output);
    if (!out) throw std::runtime_error("cannot write '" + output + "'");
    out << doc.dump(2) << "\n";
  }
  return kOk;
}

void print_run(const ovm::RunResult& r) {
  std::cout << "seed " << r.seed << ": final max error " << ovm::format_decimal(r.final_error())
            << ", bound violations " << r.bound_violations << ", envelope violations "
            << r.envelope_violations << ", diagnostics " << (r.diagnostics_passed ? "pass" : "FAIL")
            << ", target " << (r.target_met ? "met" : "MISSED") << " ("
            << std::setprecision(3) << r.duration_seconds << " s)\n"
            << std::setprecision(6);
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> steps, const std::string& out_flag) {
  auto cfg = ovm::load_config(config_path);
  if (steps) cfg.run.steps = *steps;
  const std::uint64_t s = seed.value_or(cfg.run.seeds.front());
  const auto result = ovm::run_experiment(cfg, s);
  const auto dir = output_dir(out_flag, cfg);
  const auto path = dir / ("run_seed" + std::to_string(s) + ".csv");
  ovm::emit_csv({result}, path);
  print_run(result);
  std::cout << "wrote " << path.string() << "\n";
  return result.passed() ? kOk : kCheckFailed;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::uint64_t>& seeds,
              std::size_t threads, std::optional<std::size_t> steps, const std::string& out_flag) {
  auto cfg = ovm::load_config(config_path);
  if (steps) cfg.run.steps = *steps;
  const auto& use = seeds.empty() ? cfg.run.seeds : seeds;
  const auto result = ovm::sweep(cfg, use, threads);
  const auto dir = output_dir(out_flag, cfg);
  ovm::emit_csv(result.results(), dir / "sweep.csv");
  {
    std::ofstream out(dir / "summary.json");
    if (!out) throw std::runtime_error("cannot write summary.json");
    out << ovm::summary_json(result).dump(2) << "\n";
  }
  bool all_passed = result.summary.failures == 0;
  for (const auto& o : result.outcomes) {
    if (o.result) {
      print_run(*o.result);
      all_passed = all_passed && o.result->passed();
    } else {
      std::cout << "seed " << o.seed << ": ERROR " << o.error << "\n";
    }
  }
  const auto& sum = result.summary;
  std::cout << "runs " << sum.runs << ", failures " << sum.failures << ", mean final error "
            << ovm::format_decimal(sum.mean_final_error) << ", max final error "
            << ovm::format_decimal(sum.max_final_error) << "\n"
            << "wrote " << (dir / "sweep.csv").string() << " and "
            << (dir / "summary.json").string() << "\n";
  return all_passed ? kOk : kCheckFailed;
}

int cmd_demo_jensen(std::size_t steps, std::uint64_t seed) {
  const auto r = ovm::run_jensen_demo(steps, seed);
  const bool naive_ok = r.naive_fixed_point_error() < 0.02;
  const bool orchestrated_ok = r.orchestrated_error() <= 0.01;
  std::cout << "bandit: rewards {0, 2} w.p. 1/2, gamma 0, f(x) = (x + 1)^2, " << r.steps
            << " steps\n"
            << "Q*                        " << ovm::format_decimal(r.q_star) << "\n"
            << "naive fixed point         " << ovm::format_decimal(r.naive_fixed_point) << "\n"
            << "naive learner             " << ovm::format_decimal(r.naive_value) << "\n"
            << "  deviation from Q*       " << ovm::format_decimal(r.naive_bias()) << "\n"
            << "  distance to fixed point " << ovm::format_decimal(r.naive_fixed_point_error())
            << (naive_ok ? " (< 0.02)" : " (NOT < 0.02)") << "\n"
            << "orchestrated learner      " << ovm::format_decimal(r.orchestrated_value) << "\n"
            << "  distance to Q*          " << ovm::format_decimal(r.orchestrated_error())
            << (orchestrated_ok ? " (<= 0.01)" : " (NOT <= 0.01)") << "\n";
  return naive_ok && orchestrated_ok ? kOk : kCheckFailed;
}

int cmd_gen_mdp(std::uint64_t seed, const ovm::RandomMdpSpec& spec, const std::string& output) {
  auto rng = ovm::derive_rng(seed, ovm::Stream::mdp_generation);
  ovm::TabularMdp mdp = [&] {
    try {
      return ovm::make_random_mdp(rng, spec);
    } catch (const std::invalid_argument& e) {
      throw ovm::ConfigError(e.what());
    }
  }();
  if (output.empty()) {
    ovm::write_mdp(std::cout, mdp);
    return kOk;
  }
  std::ofstream out(output);
  if (!out) throw std::runtime_error("cannot write '" + output + "'");
  ovm::write_mdp(out, mdp);
  std::cerr << "wrote " << output << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orchestrated value-mapping Q-learning: oracles, experiments and diagnostics"};
  app.require_subcommand(1);

  MappingArgs vm;
  std::size_t vm_grid = 10000;
  double vm_tol = 1e-9;
  auto* validate = app.add_subcommand("validate-mapping", "validate a built-in mapping on a grid");
  add_mapping_options(validate, vm, true);
  validate->add_option("--grid", vm_grid, "grid points")->check(CLI::Range(3, 100000000));
  validate->add_option("--tolerance", vm_tol, "round-trip tolerance");

  std::string oracle_mdp;
  std::string oracle_config;
  std::string oracle_out;
  std::uint64_t oracle_seed = 1;
  MappingArgs om;
  auto* oracle = app.add_subcommand("oracle", "print Q*, and with --kind the naive fixed point and Jensen gap");
  oracle->add_option("--mdp", oracle_mdp, "MDP file");
  oracle->add_option("--config", oracle_config, "experiment config whose MDP to use");
  oracle->add_option("--seed", oracle_seed, "master seed for generated MDPs");
  oracle->add_option("--output", oracle_out, "write tables as JSON");
  add_mapping_options(oracle, om, false);

  std::string run_config;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::size_t> run_steps;
  std::string run_out;
  auto* run = app.add_subcommand("run", "run one seeded experiment");
  run->add_option("--config", run_config, "experiment config")->required();
  run->add_option("--seed", run_seed, "master seed (default: first config seed)");
  run->add_option("--steps", run_steps, "override run.steps");
  run->add_option("--output-dir", run_out, "output directory");

  std::string sweep_config;
  std::vector<std::uint64_t> sweep_seeds;
  std::size_t sweep_threads = 0;
  std::optional<std::size_t> sweep_steps;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "run the experiment over several seeds");
  sweep->add_option("--config", sweep_config, "experiment config")->required();
  sweep->add_option("--seeds", sweep_seeds, "seeds (default: config seeds)");
  sweep->add_option("--threads", sweep_threads, "worker threads (0: hardware)");
  sweep->add_option("--steps", sweep_steps, "override run.steps");
  sweep->add_option("--output-dir", sweep_out, "output directory");

  std::size_t demo_steps = 100000;
  std::uint64_t demo_seed = 1;
  auto* demo = app.add_subcommand("demo-jensen", "naive vs orchestrated learner on the convex bandit");
  demo->add_option("--steps", demo_steps, "updates");
  demo->add_option("--seed", demo_seed, "seed");

  std::uint64_t gen_seed = 1;
  ovm::RandomMdpSpec gen_spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-mdp", "write a seeded random MDP file");
  gen->add_option("--seed", gen_seed, "seed");
  gen->add_option("--states", gen_spec.num_states, "number of states")->check(CLI::PositiveNumber);
  gen->add_option("--actions", gen_spec.num_actions, "number of actions")->check(CLI::PositiveNumber);
  gen->add_option("--gamma", gen_spec.gamma, "discount")->check(CLI::Range(0.0, 0.999999999));
  gen->add_option("--support", gen_spec.reward_support, "reward support values");
  gen->add_option("--sparsity", gen_spec.sparsity, "fraction of next states dropped per row");
  gen->add_option("--outcomes", gen_spec.outcomes_per_transition, "reward outcomes per transition");
  gen->add_option("--output", gen_out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*validate) return cmd_validate_mapping(vm, vm_grid, vm_tol);
    if (*oracle) {
      const bool with_mapping = oracle->count("--kind") > 0;
      return cmd_oracle(oracle_mdp, oracle_config, oracle_seed,
                        with_mapping ? std::optional<MappingArgs>(om) : std::nullopt, oracle_out);
    }
    if (*run) return cmd_run(run_config, run_seed, run_steps, run_out);
    if (*sweep) return cmd_sweep(sweep_config, sweep_seeds, sweep_threads, sweep_steps, sweep_out);
    if (*demo) return cmd_demo_jensen(demo_steps, demo_seed);
    if (*gen) return cmd_gen_mdp(gen_seed, gen_spec, gen_out);
  } catch (const ovm::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}
