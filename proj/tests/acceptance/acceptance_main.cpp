// Acceptance suite: one PASS/FAIL line per criterion, each followed by the
// measured quantities. Exits nonzero when any criterion fails.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ovm/ovm.hpp"

using namespace ovm;

namespace {

const std::filesystem::path kConfigDir{OVM_CONFIG_DIR};

int g_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << name << "\n";
  std::istringstream lines(detail);
  for (std::string line; std::getline(lines, line);) std::cout << "         " << line << "\n";
  std::cout.flush();
  if (!pass) ++g_failures;
}

std::string fmt(double v) { return format_decimal(v); }

DecompositionSpec scheme(std::string name, std::vector<double> weights = {}) {
  DecompositionSpec spec;
  spec.scheme = std::move(name);
  spec.weights = std::move(weights);
  return spec;
}

const std::vector<double> kSignedSupport{-1.0, 0.0, 1.0};
const std::vector<double> kUnitSupport{0.0, 0.5, 1.0};
const std::vector<double> kMagnitudeSupport{0.0, 0.5, 5.0, 50.0, 100.0};

ExperimentConfig variant(const ExperimentConfig& base, const std::string& kind,
                         DecompositionSpec decomposition, std::vector<double> support,
                         std::size_t channels) {
  auto cfg = base;
  cfg.decomposition = std::move(decomposition);
  cfg.mdp.generator.reward_support = std::move(support);
  ChannelSpec ch = base.channels.front();
  ch.mapping.kind = kind;
  ch.mapping.domain.reset();
  ch.q_init.reset();
  ch.clip.reset();
  cfg.channels.assign(channels, ch);
  return cfg;
}

struct NamedConfig {
  std::string name;
  ExperimentConfig cfg;
};

std::vector<NamedConfig> convergence_configs(const ExperimentConfig& base) {
  return {{"identity/trivial", variant(base, "identity", scheme("trivial"), kSignedSupport, 1)},
          {"log/pos_neg", variant(base, "log", scheme("pos_neg"), kSignedSupport, 2)},
          {"loglin/pos_neg", variant(base, "loglin", scheme("pos_neg"), kSignedSupport, 2)},
          {"loglin/ensemble[0.5,0.5]",
           variant(base, "loglin", scheme("ensemble", {0.5, 0.5}), kUnitSupport, 2)},
          {"identity/magnitude_cfg1",
           variant(base, "identity", scheme("magnitude_cfg1"), kMagnitudeSupport, 3)},
          {"identity/magnitude_cfg2",
           variant(base, "identity", scheme("magnitude_cfg2"), kMagnitudeSupport, 3)}};
}

// Runs every seed of `cfg`; returns whether all final errors beat `tol`.
bool convergence_sweep(const NamedConfig& nc, double tol, std::ostringstream& detail) {
  const auto result = sweep(nc.cfg, nc.cfg.run.seeds);
  bool ok = result.summary.failures == 0;
  detail << nc.name << ": final max-norm errors";
  for (const auto& o : result.outcomes) {
    if (!o.result) {
      detail << " seed " << o.seed << " ERROR(" << o.error << ")";
      continue;
    }
    const double e = o.result->final_error();
    ok = ok && e < tol;
    detail << " " << fmt(e);
  }
  detail << " (max " << fmt(result.summary.max_final_error) << ", tol " << tol << ", "
         << nc.cfg.run.steps << " steps)\n";
  return ok;
}

void orchestrated_convergence(const ExperimentConfig& base) {
  std::ostringstream detail;
  bool ok = true;
  for (const auto& nc : convergence_configs(base)) ok = convergence_sweep(nc, 0.01, detail) && ok;
  report("orchestrated convergence: 6 configurations x 5 MDPs, beta_reg = 1, "
         "beta_f = (1+n)^-0.8, max-norm error < 0.01 after 2e6 steps",
         ok, detail.str());
}

void constant_beta_reg(const ExperimentConfig& base) {
  auto nc = convergence_configs(base)[1];
  nc.name += " beta_reg=0.5";
  nc.cfg.rates.beta_reg = Schedule::constant(0.5);
  std::ostringstream detail;
  const bool ok = convergence_sweep(nc, 0.01, detail);
  report("constant beta_reg = 0.5 on log/pos_neg: max-norm error < 0.01 after 2e6 steps", ok,
         detail.str());
}

void naive_pathology() {
  const auto r = run_jensen_demo(100000, 1);
  const bool naive_ok = r.naive_fixed_point_error() < 0.02;
  const bool orchestrated_ok = r.orchestrated_error() <= 0.01;
  std::ostringstream detail;
  detail << "Q* = " << fmt(r.q_star) << ", naive fixed point = " << fmt(r.naive_fixed_point)
         << " (sqrt(5) - 1 = " << fmt(std::sqrt(5.0) - 1.0) << ")\n"
         << "naive learner " << fmt(r.naive_value) << ": |. - fixed point| = "
         << fmt(r.naive_fixed_point_error()) << " (tol 0.02), deviation from Q* = "
         << fmt(r.naive_bias()) << "\n"
         << "orchestrated learner " << fmt(r.orchestrated_value)
         << ": |. - Q*| = " << fmt(r.orchestrated_error()) << " (tol 0.01)";
  report("naive-update pathology on the convex bandit f(x) = (x+1)^2, 1e5 steps",
         naive_ok && orchestrated_ok, detail.str());
}

MappingFunction exp_mapping(Interval dom) {
  return MappingFunction::custom(
      {"exp(x/4)", [](double x) { return std::exp(x / 4.0); },
       [](double y) { return 4.0 * std::log(y); }},
      dom, Direction::increasing, Curvature::semi_convex,
      {std::exp(dom.lo / 4.0) / 4.0, std::exp(dom.hi / 4.0) / 4.0});
}

MappingFunction square_mapping(Interval dom) {
  return MappingFunction::custom(
      {"(x+1)^2", [](double x) { return (x + 1.0) * (x + 1.0); },
       [](double y) { return std::sqrt(y) - 1.0; }},
      dom, Direction::increasing, Curvature::semi_convex,
      {2.0 * (dom.lo + 1.0), 2.0 * (dom.hi + 1.0)});
}

void jensen_gap_sign() {
  double worst_convex = std::numeric_limits<double>::infinity();
  double worst_concave = -std::numeric_limits<double>::infinity();
  std::size_t entries = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto rng = derive_rng(seed, Stream::mdp_generation);
    RandomMdpSpec spec;
    spec.reward_support = kUnitSupport;
    const auto mdp = make_random_mdp(rng, spec);
    const auto dom = return_bounds(mdp.reward_bounds(), mdp.gamma());
    for (const auto& f : {exp_mapping(dom), square_mapping(dom)}) {
      const auto gap = jensen_gap(mdp, f);
      for (double g : gap.values()) {
        worst_convex = std::min(worst_convex, g);
        ++entries;
      }
    }
    for (const auto& f : {make_log(0.5, 0.02, dom), make_loglin(0.5, 0.02, dom)}) {
      const auto gap = jensen_gap(mdp, f);
      for (double g : gap.values()) {
        worst_concave = std::max(worst_concave, g);
        ++entries;
      }
    }
  }
  const bool ok = worst_convex >= -1e-10 && worst_concave <= 1e-10;
  std::ostringstream detail;
  detail << entries << " gap entries over 20 MDPs; min gap (semi-convex) = " << fmt(worst_convex)
         << ", max gap (semi-concave) = " << fmt(worst_concave) << " (slack 1e-10)";
  report("Jensen-gap sign follows curvature", ok, detail.str());
}

void averaging_error_suite(const ExperimentConfig& base) {
  const std::vector<std::string> mappings{"identity", "linear", "log", "loglin"};
  struct Scheme {
    DecompositionSpec spec;
    std::vector<double> support;
    std::size_t channels;
  };
  const std::vector<Scheme> schemes{{scheme("trivial"), kUnitSupport, 1},
                                    {scheme("pos_neg"), kSignedSupport, 2},
                                    {scheme("magnitude_cfg1"), kMagnitudeSupport, 3},
                                    {scheme("magnitude_cfg2"), kMagnitudeSupport, 3},
                                    {scheme("ensemble", {0.5, 0.5}), kUnitSupport, 2}};
  const std::vector<LearningRates> rates{
      {Schedule::polynomial(1.0, 0.8), Schedule::constant(1.0)},
      {Schedule::polynomial(1.0, 0.5), Schedule::constant(0.5)}};

  std::size_t steps = 0;
  std::size_t pairs = 0;
  std::size_t bound_violations = 0;
  std::size_t envelope_violations = 0;
  std::size_t sign_failures = 0;
  std::size_t clamped_steps = 0;
  std::size_t clip_events = 0;
  double max_violation = -std::numeric_limits<double>::infinity();
  double max_inconsistency = 0.0;
  std::ostringstream failures;

  for (const auto& kind : mappings) {
    for (const auto& scheme : schemes) {
      ++pairs;
      auto cfg = variant(base, kind, scheme.spec, scheme.support, scheme.channels);
      if (kind == "linear") {
        for (auto& ch : cfg.channels) {
          ch.mapping.slope = -2.0;
          ch.mapping.intercept = 1.0;
        }
      }
      for (std::size_t r = 0; r < rates.size(); ++r) {
        cfg.rates = rates[r];
        // The second setting uses a tight TD clip so the clip path is exercised.
        for (auto& ch : cfg.channels) {
          if (r == 1) {
            ch.clip = 0.05;
          } else {
            ch.clip.reset();
          }
        }
        for (std::uint64_t seed : {11u, 12u}) {
          const auto mdp = build_mdp(cfg, seed);
          OrchestratedLearner learner(build_learner_config(cfg, mdp));
          ErrorAudit audit(learner.mappings(), learner.config().clip_bounds, false);
          auto transitions = derive_rng(seed, Stream::transitions);
          auto exploration = derive_rng(seed, Stream::exploration);
          std::size_t s = sample_initial_state(mdp, transitions);
          for (std::size_t t = 0; t < 3000; ++t) {
            if (t > 0 && t % cfg.run.horizon == 0) s = sample_initial_state(mdp, transitions);
            const auto a = learner.select_action(s, cfg.run.epsilon, exploration);
            const auto tr = sample_transition(mdp, transitions, s, a);
            audit.record(learner.step(tr));
            s = tr.next_state;
          }
          steps += audit.steps();
          bound_violations += audit.bound_violations();
          envelope_violations += audit.envelope_violations();
          clip_events += audit.clip_events();
          max_violation = std::max(max_violation, audit.max_violation());
          max_inconsistency = std::max(max_inconsistency, audit.max_self_inconsistency());
          for (std::size_t j = 0; j < audit.channels(); ++j) {
            clamped_steps += audit.sign_summary(j).clamped_steps;
            if (!check_sign_constancy(audit, j)) {
              ++sign_failures;
              failures << kind << "/" << scheme.spec.scheme << " channel " << j
                       << " sign range [" << fmt(audit.sign_summary(j).min_error) << ", "
                       << fmt(audit.sign_summary(j).max_error) << "]\n";
            }
          }
          if (audit.bound_violations() > 0 || audit.envelope_violations() > 0) {
            failures << kind << "/" << scheme.spec.scheme << " seed " << seed << ": "
                     << audit.bound_violations() << " bound, " << audit.envelope_violations()
                     << " envelope violations\n";
          }
        }
      }
    }
  }
  const bool ok = steps >= 100000 && bound_violations == 0 && envelope_violations == 0 &&
                  sign_failures == 0 && max_inconsistency <= 1e-12;
  std::ostringstream detail;
  detail << steps << " recorded steps over " << pairs << " mapping/decomposition pairs\n"
         << "per-channel bound violations " << bound_violations << " (max |e| - bound = "
         << fmt(max_violation) << ", slack 1e-10)\n"
         << "envelope violations " << envelope_violations << "\n"
         << "channels failing sign constancy " << sign_failures << "\n"
         << "clamp-fired channel steps (excluded from the sign check) " << clamped_steps
         << ", clip events " << clip_events << "\n"
         << "max recomputation mismatch " << fmt(max_inconsistency) << "\n"
         << failures.str();
  report("averaging-error bound, sign constancy and envelope over >= 1e5 steps", ok,
         detail.str());
}

void collapse_equivalence(const ExperimentConfig& base) {
  const auto cfg = variant(base, "identity", scheme("trivial"), kSignedSupport, 1);
  const std::vector<LearningRates> rates{cfg.rates,
                                         {Schedule::polynomial(1.0, 0.5),
                                          Schedule::polynomial(0.8, 0.3)}};
  std::size_t mismatches = 0;
  std::size_t compared = 0;
  for (const auto& rate : rates) {
    auto c = cfg;
    c.rates = rate;
    const auto mdp = build_mdp(c, 21);
    OrchestratedLearner learner(build_learner_config(c, mdp));
    ValueTable q(mdp.num_states(), mdp.num_actions(), learner.q_value(0, 0));
    std::vector<std::size_t> visits(mdp.num_states() * mdp.num_actions(), 0);
    auto transitions = derive_rng(21, Stream::transitions);
    auto exploration = derive_rng(21, Stream::exploration);
    std::size_t s = sample_initial_state(mdp, transitions);
    for (std::size_t t = 0; t < 100000; ++t) {
      if (t > 0 && t % c.run.horizon == 0) s = sample_initial_state(mdp, transitions);
      const auto a = learner.select_action(s, c.run.epsilon, exploration);
      const auto tr = sample_transition(mdp, transitions, s, a);
      auto& n = visits[s * mdp.num_actions() + a];
      const double alpha = rate.beta_f(n, t) * rate.beta_reg(n, t);
      ++n;
      q_learning_step(q, tr, alpha, mdp.gamma());
      learner.step(tr);
      ++compared;
      if (learner.q_value(tr.state, tr.action) != q(tr.state, tr.action)) ++mismatches;
      s = tr.next_state;
    }
    if (!(learner.q_table() == q)) ++mismatches;
  }
  std::ostringstream detail;
  detail << compared << " updates over 2 schedules compared with textbook Q-learning "
         << "(alpha = beta_f * beta_reg); bitwise mismatches " << mismatches;
  report("identity/trivial collapse is bit-identical to Q-learning over 1e5-step streams",
         mismatches == 0, detail.str());
}

void decomposition_reconstruction() {
  const std::vector<Decomposition> schemes{make_trivial(), make_pos_neg(), make_magnitude_cfg1(),
                                           make_magnitude_cfg2(), make_ensemble({0.5, 0.5}),
                                           make_ensemble({0.2, 0.3, 0.5})};
  std::mt19937_64 rng(31);
  double worst = 0.0;
  std::size_t cfg1_multi = 0;
  std::size_t cfg2_outside = 0;
  std::ostringstream detail;
  for (const auto& d : schemes) {
    const auto range = d.reward_range();
    const double lo = std::isfinite(range.lo) ? range.lo : -100.0;
    const double hi = std::isfinite(range.hi) ? range.hi : 100.0;
    std::uniform_real_distribution<double> u(lo, hi);
    double scheme_worst = 0.0;
    for (int i = 0; i < 100000; ++i) {
      const double r = u(rng);
      const auto v = d.decompose(r);
      scheme_worst = std::max(scheme_worst, std::abs(d.reconstruct(v) - r));
      if (d.name() == "magnitude_cfg1") {
        int nonzero = 0;
        for (double x : v) nonzero += x != 0.0;
        if (nonzero > 1) ++cfg1_multi;
      }
      if (d.name() == "magnitude_cfg2") {
        for (double x : v) cfg2_outside += (x < 0.0 || x > 1.0);
      }
    }
    worst = std::max(worst, scheme_worst);
    detail << d.name() << " (L=" << d.size() << "): max |sum w r_j - r| = " << fmt(scheme_worst)
           << "\n";
  }
  detail << "cfg1 samples with more than one active channel " << cfg1_multi
         << "; cfg2 channel values outside [0, 1] " << cfg2_outside;
  report("decomposition reconstruction within 1e-12 over 1e5 samples per scheme",
         worst <= 1e-12 && cfg1_multi == 0 && cfg2_outside == 0, detail.str());
}

void mapping_validation() {
  const std::vector<MappingFunction> builtins{
      make_identity(),           make_linear(-2.0, 0.0),           make_linear(5.0, 1.0),
      make_log(0.5, 0.02),       make_log(0.5, 0.02, {0.0, 10.0}), make_loglin(0.5, 0.02),
      make_loglin(0.5, 0.02, {0.0, 100.0})};
  bool ok = true;
  std::ostringstream detail;
  for (const auto& f : builtins) {
    const auto r = validate(f, 10000, 1e-9);
    ok = ok && r.passed();
    detail << f.name() << " [" << f.domain().lo << ", " << f.domain().hi << "]: "
           << (r.passed() ? "valid" : "INVALID") << " (slopes " << fmt(r.min_slope) << ".."
           << fmt(r.max_slope) << ", round trip " << fmt(r.max_round_trip_error) << ")\n";
  }

  const auto ll = make_loglin(0.5, 0.02, {0.0, 100.0});
  const double b = 1.0 - 0.02;
  const double h = 1e-7;
  const double left = (ll.forward(b) - ll.forward(b - h)) / h;
  const double right = (ll.forward(b + h) - ll.forward(b)) / h;
  const bool c1 = std::abs(left - right) <= 1e-6;
  ok = ok && c1;
  detail << "loglin break-point slopes " << fmt(left) << " / " << fmt(right) << " (tol 1e-6)\n";

  const double d_log = delta_ratio(make_log(0.5, 0.02, {0.0, 10.0}));
  const double d_loglin = delta_ratio(ll);
  const double d_linear = delta_ratio(make_linear(5.0, 1.0));
  const bool deltas = std::abs(d_log - 500.0) <= 1e-9 && std::abs(d_loglin - 49.0) <= 1e-9 &&
                      d_linear == 0.0 && delta_ratio(make_identity()) == 0.0;
  ok = ok && deltas;
  detail << "delta: log[0,10] " << fmt(d_log) << ", loglin[0,100] " << fmt(d_loglin)
         << ", linear " << fmt(d_linear);
  report("built-in mappings validate at 1e4 grid points; loglin is C1; delta closed forms", ok,
         detail.str());
}

}  // namespace

int main() {
  ExperimentConfig base;
  try {
    base = load_config(kConfigDir / "acceptance.json");
  } catch (const std::exception& e) {
    std::cerr << "cannot load acceptance config: " << e.what() << "\n";
    return 2;
  }

  orchestrated_convergence(base);
  constant_beta_reg(base);
  naive_pathology();
  jensen_gap_sign();
  averaging_error_suite(base);
  collapse_equivalence(base);
  decomposition_reconstruction();
  mapping_validation();

  std::cout << (g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " of 8 criteria failed")
            << "\n";
  return g_failures == 0 ? 0 : 1;
}
