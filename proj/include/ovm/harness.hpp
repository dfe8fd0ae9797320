#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "ovm/decompose.hpp"
#include "ovm/diagnostics.hpp"
#include "ovm/learner.hpp"
#include "ovm/mapping.hpp"
#include "ovm/mdp.hpp"
#include "ovm/schedule.hpp"

namespace ovm {

// ---------------------------------------------------------------------------
// Configuration

struct MappingSpec {
  std::string kind = "identity";  ///< identity | linear | log | loglin
  double c = 0.5;
  double d = 0.02;
  double slope = 1.0;
  double intercept = 0.0;
  std::optional<Interval> domain;  ///< unset: the channel's return bounds

  friend bool operator==(const MappingSpec&, const MappingSpec&) = default;
};

struct ChannelSpec {
  MappingSpec mapping;
  std::optional<double> q_init;  ///< unset: clamp of 0 into the domain interior
  std::optional<double> clip;    ///< unset: width of the channel's return bounds

  friend bool operator==(const ChannelSpec&, const ChannelSpec&) = default;
};

struct DecompositionSpec {
  /// trivial | pos_neg | magnitude_cfg1 | magnitude_cfg2 | ensemble |
  /// ladder_exclusive | ladder_clipped
  std::string scheme = "trivial";
  std::vector<double> weights;     ///< ensemble
  std::vector<double> thresholds;  ///< ladder_*

  friend bool operator==(const DecompositionSpec&, const DecompositionSpec&) = default;
};

struct MdpSource {
  std::string source = "generate";  ///< generate | file
  std::string path;
  RandomMdpSpec generator{};
  /// Generator seed; unset derives one from each run's master seed.
  std::optional<std::uint64_t> seed;

  friend bool operator==(const MdpSource& a, const MdpSource& b) {
    return a.source == b.source && a.path == b.path && a.seed == b.seed &&
           a.generator.num_states == b.generator.num_states &&
           a.generator.num_actions == b.generator.num_actions &&
           a.generator.gamma == b.generator.gamma &&
           a.generator.reward_support == b.generator.reward_support &&
           a.generator.sparsity == b.generator.sparsity &&
           a.generator.outcomes_per_transition == b.generator.outcomes_per_transition;
  }
};

struct RunSpec {
  std::size_t steps = 100000;
  std::size_t eval_interval = 1000;
  std::size_t horizon = 200;  ///< reset to the initial distribution every `horizon` steps
  double epsilon = 0.1;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir;
  bool clamp = true;
  double oracle_tolerance = 1e-10;
  /// When set, a run only passes if its final max-norm error is below this.
  std::optional<double> target_error;

  friend bool operator==(const RunSpec&, const RunSpec&) = default;
};

struct ExperimentConfig {
  MdpSource mdp;
  DecompositionSpec decomposition;
  std::vector<ChannelSpec> channels{ChannelSpec{}};
  LearningRates rates{};
  RunSpec run;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

using nlohmann::json;

inline json schedule_to_json(const Schedule& s) {
  if (s.kind == Schedule::Kind::constant) return {{"kind", "constant"}, {"value", s.initial}};
  return {{"kind", "polynomial"},
          {"initial", s.initial},
          {"exponent", s.exponent},
          {"per_pair", s.per_pair}};
}

inline Schedule schedule_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") return Schedule::constant(j.at("value").get<double>());
  if (kind == "polynomial") {
    return Schedule::polynomial(j.value("initial", 1.0), j.at("exponent").get<double>(),
                                j.value("per_pair", true));
  }
  throw ConfigError("unknown schedule kind '" + kind + "'");
}

inline json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json("auto");
}

inline std::optional<double> optional_number_from(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const auto& v = j.at(key);
  if (v.is_string()) {
    if (v.get<std::string>() != "auto") {
      throw ConfigError(std::string("field '") + key + "' must be a number or \"auto\"");
    }
    return std::nullopt;
  }
  return v.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  using nlohmann::json;
  json mdp;
  mdp["source"] = cfg.mdp.source;
  if (cfg.mdp.source == "file") {
    mdp["path"] = cfg.mdp.path;
  } else {
    const auto& g = cfg.mdp.generator;
    mdp["num_states"] = g.num_states;
    mdp["num_actions"] = g.num_actions;
    mdp["gamma"] = g.gamma;
    mdp["reward_support"] = g.reward_support;
    mdp["sparsity"] = g.sparsity;
    mdp["outcomes_per_transition"] = g.outcomes_per_transition;
    if (cfg.mdp.seed) mdp["seed"] = *cfg.mdp.seed;
  }

  json decomposition{{"scheme", cfg.decomposition.scheme}};
  if (!cfg.decomposition.weights.empty()) decomposition["weights"] = cfg.decomposition.weights;
  if (!cfg.decomposition.thresholds.empty()) {
    decomposition["thresholds"] = cfg.decomposition.thresholds;
  }

  json channels = json::array();
  for (const auto& ch : cfg.channels) {
    json m{{"kind", ch.mapping.kind}};
    if (ch.mapping.kind == "log" || ch.mapping.kind == "loglin") {
      m["c"] = ch.mapping.c;
      m["d"] = ch.mapping.d;
    } else if (ch.mapping.kind == "linear") {
      m["slope"] = ch.mapping.slope;
      m["intercept"] = ch.mapping.intercept;
    }
    m["domain"] = ch.mapping.domain ? json::array({ch.mapping.domain->lo, ch.mapping.domain->hi})
                                    : json("auto");
    channels.push_back({{"mapping", m},
                        {"q_init", detail::optional_number(ch.q_init)},
                        {"clip", detail::optional_number(ch.clip)}});
  }

  json run{{"steps", cfg.run.steps},
           {"eval_interval", cfg.run.eval_interval},
           {"horizon", cfg.run.horizon},
           {"epsilon", cfg.run.epsilon},
           {"seeds", cfg.run.seeds},
           {"clamp", cfg.run.clamp},
           {"oracle_tolerance", cfg.run.oracle_tolerance}};
  if (!cfg.run.output_dir.empty()) run["output_dir"] = cfg.run.output_dir;
  if (cfg.run.target_error) run["target_error"] = *cfg.run.target_error;

  return {{"mdp", mdp},
          {"decomposition", decomposition},
          {"channels", channels},
          {"schedules",
           {{"beta_f", detail::schedule_to_json(cfg.rates.beta_f)},
            {"beta_reg", detail::schedule_to_json(cfg.rates.beta_reg)}}},
          {"run", run}};
}

/// Decomposition named by the spec.
inline Decomposition build_decomposition(const DecompositionSpec& spec) {
  const auto& s = spec.scheme;
  if (s == "trivial") return make_trivial();
  if (s == "pos_neg") return make_pos_neg();
  if (s == "magnitude_cfg1") return make_magnitude_cfg1();
  if (s == "magnitude_cfg2") return make_magnitude_cfg2();
  try {
    if (s == "ensemble") return make_ensemble(spec.weights);
    if (s == "ladder_exclusive") return make_magnitude_ladder(spec.thresholds, LadderStyle::exclusive);
    if (s == "ladder_clipped") return make_magnitude_ladder(spec.thresholds, LadderStyle::clipped);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("decomposition: ") + e.what());
  }
  throw ConfigError("unknown decomposition scheme '" + s + "'");
}

inline MappingFunction build_mapping(const MappingSpec& spec, Interval default_domain) {
  const Interval dom = spec.domain.value_or(default_domain);
  try {
    if (spec.kind == "identity") return make_identity(dom);
    if (spec.kind == "linear") return make_linear(spec.slope, spec.intercept, dom);
    if (spec.kind == "log") return make_log(spec.c, spec.d, dom);
    if (spec.kind == "loglin") return make_loglin(spec.c, spec.d, dom);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("mapping '") + spec.kind + "': " + e.what());
  }
  throw ConfigError("unknown mapping kind '" + spec.kind + "'");
}

/// Checks cross-field invariants; throws ConfigError. Programmatic callers
/// may pass `allow_zero_steps` to get an evaluation-only run.
inline void validate_config(const ExperimentConfig& cfg, bool allow_zero_steps = false) {
  const auto d = build_decomposition(cfg.decomposition);
  if (cfg.channels.size() != d.size()) {
    throw ConfigError("decomposition '" + d.name() + "' has " + std::to_string(d.size()) +
                      " channels but " + std::to_string(cfg.channels.size()) +
                      " channel specs were given");
  }
  for (const auto& ch : cfg.channels) build_mapping(ch.mapping, {0.0, 1.0});
  if (cfg.run.steps == 0 && !allow_zero_steps) throw ConfigError("run.steps must be positive");
  if (cfg.run.eval_interval == 0) throw ConfigError("run.eval_interval must be positive");
  if (cfg.run.horizon == 0) throw ConfigError("run.horizon must be positive");
  if (!(cfg.run.epsilon >= 0.0 && cfg.run.epsilon <= 1.0)) {
    throw ConfigError("run.epsilon must lie in [0, 1]");
  }
  if (cfg.run.seeds.empty()) throw ConfigError("run.seeds must not be empty");
  if (cfg.mdp.source != "generate" && cfg.mdp.source != "file") {
    throw ConfigError("mdp.source must be 'generate' or 'file'");
  }
  if (cfg.mdp.source == "file" && cfg.mdp.path.empty()) throw ConfigError("mdp.path is required");
}

/// Parses a configuration document. Relative MDP paths resolve against `base_dir`.
inline ExperimentConfig parse_config(const std::string& text,
                                     const std::filesystem::path& base_dir = {}) {
  using nlohmann::json;
  ExperimentConfig cfg;
  try {
    const json root = json::parse(text, nullptr, true, true);

    if (root.contains("mdp")) {
      const auto& m = root.at("mdp");
      cfg.mdp.source = m.value("source", std::string("generate"));
      if (cfg.mdp.source == "file") {
        std::filesystem::path p = m.at("path").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        cfg.mdp.path = p.lexically_normal().string();
      } else {
        auto& g = cfg.mdp.generator;
        g.num_states = m.value("num_states", g.num_states);
        g.num_actions = m.value("num_actions", g.num_actions);
        g.gamma = m.value("gamma", g.gamma);
        g.reward_support = m.value("reward_support", g.reward_support);
        g.sparsity = m.value("sparsity", g.sparsity);
        g.outcomes_per_transition = m.value("outcomes_per_transition", g.outcomes_per_transition);
        if (m.contains("seed")) cfg.mdp.seed = m.at("seed").get<std::uint64_t>();
      }
    }

    if (root.contains("decomposition")) {
      const auto& d = root.at("decomposition");
      cfg.decomposition.scheme = d.value("scheme", cfg.decomposition.scheme);
      cfg.decomposition.weights = d.value("weights", std::vector<double>{});
      cfg.decomposition.thresholds = d.value("thresholds", std::vector<double>{});
    }

    if (root.contains("channels")) {
      cfg.channels.clear();
      for (const auto& c : root.at("channels")) {
        ChannelSpec ch;
        const auto& m = c.at("mapping");
        ch.mapping.kind = m.at("kind").get<std::string>();
        ch.mapping.c = m.value("c", ch.mapping.c);
        ch.mapping.d = m.value("d", ch.mapping.d);
        ch.mapping.slope = m.value("slope", ch.mapping.slope);
        ch.mapping.intercept = m.value("intercept", ch.mapping.intercept);
        if (m.contains("domain") && !m.at("domain").is_string()) {
          const auto dom = m.at("domain").get<std::vector<double>>();
          if (dom.size() != 2) throw ConfigError("mapping domain must be [lo, hi] or \"auto\"");
          ch.mapping.domain = Interval{dom[0], dom[1]};
        } else if (m.contains("domain") && m.at("domain").get<std::string>() != "auto") {
          throw ConfigError("mapping domain must be [lo, hi] or \"auto\"");
        }
        ch.q_init = detail::optional_number_from(c, "q_init");
        ch.clip = detail::optional_number_from(c, "clip");
        cfg.channels.push_back(ch);
      }
    }

    if (root.contains("schedules")) {
      const auto& s = root.at("schedules");
      if (s.contains("beta_f")) cfg.rates.beta_f = detail::schedule_from_json(s.at("beta_f"));
      if (s.contains("beta_reg")) cfg.rates.beta_reg = detail::schedule_from_json(s.at("beta_reg"));
    }

    if (root.contains("run")) {
      const auto& r = root.at("run");
      cfg.run.steps = r.value("steps", cfg.run.steps);
      cfg.run.eval_interval = r.value("eval_interval", cfg.run.eval_interval);
      cfg.run.horizon = r.value("horizon", cfg.run.horizon);
      cfg.run.epsilon = r.value("epsilon", cfg.run.epsilon);
      cfg.run.seeds = r.value("seeds", cfg.run.seeds);
      cfg.run.output_dir = r.value("output_dir", std::string{});
      cfg.run.clamp = r.value("clamp", cfg.run.clamp);
      cfg.run.oracle_tolerance = r.value("oracle_tolerance", cfg.run.oracle_tolerance);
      if (r.contains("target_error")) cfg.run.target_error = r.at("target_error").get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

inline std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

// ---------------------------------------------------------------------------
// Runs

enum class Stream : std::uint32_t { mdp_generation = 0, transitions = 1, exploration = 2 };

/// Independent generator for one purpose, derived from a run's master seed.
inline std::mt19937_64 derive_rng(std::uint64_t master_seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed & 0xffffffffu),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x6f766dU};
  return std::mt19937_64(seq);
}

inline TabularMdp build_mdp(const ExperimentConfig& cfg, std::uint64_t master_seed) {
  if (cfg.mdp.source == "file") return read_mdp_file(cfg.mdp.path);
  auto rng = cfg.mdp.seed ? derive_rng(*cfg.mdp.seed, Stream::mdp_generation)
                          : derive_rng(master_seed, Stream::mdp_generation);
  try {
    return make_random_mdp(rng, cfg.mdp.generator);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("mdp generator: ") + e.what());
  }
}

/// Learner configuration for `mdp`: auto domains are the channel return bounds.
inline LearnerConfig build_learner_config(const ExperimentConfig& cfg, const TabularMdp& mdp) {
  LearnerConfig lc;
  lc.num_states = mdp.num_states();
  lc.num_actions = mdp.num_actions();
  lc.gamma = mdp.gamma();
  lc.decomposition = build_decomposition(cfg.decomposition);
  lc.rates = cfg.rates;
  lc.clamp_proposals = cfg.run.clamp;

  const Interval rewards = mdp.reward_bounds();
  const Interval admissible = lc.decomposition.reward_range();
  if (rewards.lo < admissible.lo || rewards.hi > admissible.hi) {
    std::ostringstream msg;
    msg << "MDP rewards [" << rewards.lo << ", " << rewards.hi << "] exceed the admissible range ["
        << admissible.lo << ", " << admissible.hi << "] of decomposition '"
        << lc.decomposition.name() << "'";
    throw ConfigError(msg.str());
  }
  if (cfg.channels.size() != lc.decomposition.size()) {
    throw ConfigError("channel spec count does not match decomposition");
  }
  const auto bounds = channel_return_bounds(lc.decomposition, rewards, mdp.gamma());
  for (std::size_t j = 0; j < cfg.channels.size(); ++j) {
    const auto& ch = cfg.channels[j];
    lc.mappings.push_back(build_mapping(ch.mapping, bounds[j]));
    const Interval dom = lc.mappings.back().domain();
    lc.q_init.push_back(ch.q_init.value_or(default_q_init(dom)));
    lc.clip_bounds.push_back(ch.clip.value_or(dom.width()));
  }
  return lc;
}

struct EvalPoint {
  std::size_t step = 0;
  double max_abs_error = 0.0;
  double mean_abs_error = 0.0;
  std::size_t clip_events = 0;
  std::size_t clamp_events = 0;
  double bound_max_violation = 0.0;  ///< max(0, max_t |e| - bound) so far
  bool sign_constancy_ok = true;
  double beta_product = 0.0;  ///< beta_f * beta_reg of the latest update

  friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

struct ChannelStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<EvalPoint> evaluations;
  /// Regular-space per-channel values at the end of the run.
  std::vector<ChannelStats> channel_stats;
  std::size_t bound_violations = 0;
  std::size_t envelope_violations = 0;
  double max_self_inconsistency = 0.0;
  std::vector<bool> sign_constancy;
  bool diagnostics_passed = false;
  bool target_met = true;
  double duration_seconds = 0.0;

  double final_error() const { return evaluations.empty() ? 0.0 : evaluations.back().max_abs_error; }
  bool passed() const { return diagnostics_passed && target_met; }

  /// Equality over everything except wall-clock duration.
  bool same_outcome(const RunResult& o) const {
    return seed == o.seed && evaluations == o.evaluations && channel_stats == o.channel_stats &&
           bound_violations == o.bound_violations && envelope_violations == o.envelope_violations &&
           max_self_inconsistency == o.max_self_inconsistency &&
           sign_constancy == o.sign_constancy && diagnostics_passed == o.diagnostics_passed &&
           target_met == o.target_met;
  }
};

/**
 * Seeded epsilon-greedy training loop: resets to the initial distribution
 * every run.horizon steps, evaluates against Q* every run.eval_interval steps
 * (and at step 0 and the final step), and audits every update.
 */
inline RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  validate_config(cfg, true);
  const TabularMdp mdp = build_mdp(cfg, seed);
  const ValueTable reference = q_star(mdp, cfg.run.oracle_tolerance);
  OrchestratedLearner learner(build_learner_config(cfg, mdp));
  ErrorAudit audit(learner.mappings(), learner.config().clip_bounds, false);

  auto transitions = derive_rng(seed, Stream::transitions);
  auto exploration = derive_rng(seed, Stream::exploration);

  RunResult result;
  result.seed = seed;
  double beta_product = cfg.rates.beta_f(0, 0) * cfg.rates.beta_reg(0, 0);

  auto evaluate = [&](std::size_t step) {
    const ValueTable q = learner.q_table();
    EvalPoint p;
    p.step = step;
    p.max_abs_error = convergence_error(q, reference);
    p.mean_abs_error = mean_abs_error(q, reference);
    p.clip_events = audit.clip_events();
    p.clamp_events = audit.clamp_events();
    p.bound_max_violation = std::max(0.0, audit.max_violation());
    p.sign_constancy_ok = check_sign_constancy(audit);
    p.beta_product = beta_product;
    result.evaluations.push_back(p);
  };

  evaluate(0);
  std::size_t state = sample_initial_state(mdp, transitions);
  for (std::size_t t = 0; t < cfg.run.steps; ++t) {
    if (t > 0 && t % cfg.run.horizon == 0) state = sample_initial_state(mdp, transitions);
    const std::size_t action = learner.select_action(state, cfg.run.epsilon, exploration);
    const Transition tr = sample_transition(mdp, transitions, state, action);
    const StepRecord rec = learner.step(tr);
    audit.record(rec);
    beta_product = rec.beta_f * rec.beta_reg;
    state = tr.next_state;
    if ((t + 1) % cfg.run.eval_interval == 0 || t + 1 == cfg.run.steps) evaluate(t + 1);
  }

  for (std::size_t j = 0; j < learner.num_channels(); ++j) {
    ChannelStats st{std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity(), 0.0};
    for (std::size_t s = 0; s < mdp.num_states(); ++s) {
      for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
        const double v = learner.channel_value(j, s, a);
        st.min = std::min(st.min, v);
        st.max = std::max(st.max, v);
        st.mean += v;
      }
    }
    st.mean /= static_cast<double>(mdp.num_states() * mdp.num_actions());
    result.channel_stats.push_back(st);
    result.sign_constancy.push_back(check_sign_constancy(audit, j));
  }
  result.bound_violations = audit.bound_violations();
  result.envelope_violations = audit.envelope_violations();
  result.max_self_inconsistency = audit.max_self_inconsistency();
  result.diagnostics_passed = audit.bound_violations() == 0 && error_decay_check(audit) &&
                              check_sign_constancy(audit) &&
                              audit.max_self_inconsistency() <= audit.tolerances().self_consistency;
  if (cfg.run.target_error) result.target_met = result.final_error() < *cfg.run.target_error;
  result.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::optional<RunResult> result;
  std::string error;  ///< set when the run threw
};

struct SweepSummary {
  std::size_t runs = 0;
  std::size_t failures = 0;  ///< runs that threw
  double mean_final_error = 0.0;
  double max_final_error = 0.0;
  double diagnostics_pass_rate = 0.0;
  double target_pass_rate = 0.0;
};

struct SweepResult {
  std::vector<SeedOutcome> outcomes;  ///< in input seed order
  SweepSummary summary;

  std::vector<RunResult> results() const {
    std::vector<RunResult> out;
    for (const auto& o : outcomes) {
      if (o.result) out.push_back(*o.result);
    }
    return out;
  }
};

/**
 * Runs every seed (concurrently, up to `max_threads`; 0 means hardware
 * concurrency) and folds the results in seed order.
 */
inline SweepResult sweep(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                         std::size_t max_threads = 0) {
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  if (max_threads == 0) max_threads = std::max(1u, std::thread::hardware_concurrency());

  SweepResult out;
  out.outcomes.resize(seeds.size());
  std::vector<std::future<void>> pending;
  auto run_one = [&cfg, &seeds, &out](std::size_t i) {
    auto& slot = out.outcomes[i];
    slot.seed = seeds[i];
    try {
      slot.result = run_experiment(cfg, seeds[i]);
    } catch (const std::exception& e) {
      slot.error = e.what();
    }
  };
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (pending.size() >= max_threads) {
      pending.front().get();
      pending.erase(pending.begin());
    }
    pending.push_back(std::async(std::launch::async, run_one, i));
  }
  for (auto& p : pending) p.get();

  auto& sum = out.summary;
  sum.runs = seeds.size();
  std::size_t ok = 0;
  std::size_t diag = 0;
  std::size_t target = 0;
  for (const auto& o : out.outcomes) {
    if (!o.result) {
      ++sum.failures;
      continue;
    }
    ++ok;
    const double e = o.result->final_error();
    sum.mean_final_error += e;
    sum.max_final_error = std::max(sum.max_final_error, e);
    if (o.result->diagnostics_passed) ++diag;
    if (o.result->target_met) ++target;
  }
  if (ok > 0) sum.mean_final_error /= static_cast<double>(ok);
  sum.diagnostics_pass_rate = static_cast<double>(diag) / static_cast<double>(sum.runs);
  sum.target_pass_rate = static_cast<double>(target) / static_cast<double>(sum.runs);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kCsvHeader =
    "seed,step,max_abs_error,mean_abs_error,clip_events,clamp_events,bound_max_violation,"
    "sign_constancy_ok,beta_product";

inline std::string format_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// One row per (seed, evaluation point), header first.
inline void emit_csv(const std::vector<RunResult>& results, std::ostream& out) {
  out << kCsvHeader << "\n";
  for (const auto& r : results) {
    for (const auto& p : r.evaluations) {
      out << r.seed << "," << p.step << "," << format_decimal(p.max_abs_error) << ","
          << format_decimal(p.mean_abs_error) << "," << p.clip_events << "," << p.clamp_events
          << "," << format_decimal(p.bound_max_violation) << "," << (p.sign_constancy_ok ? 1 : 0)
          << "," << format_decimal(p.beta_product) << "\n";
    }
  }
}

inline void emit_csv(const std::vector<RunResult>& results, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write CSV file '" + path.string() + "'");
  emit_csv(results, out);
  out.flush();
  if (!out) throw std::runtime_error("error while writing CSV file '" + path.string() + "'");
}

struct CsvRow {
  std::uint64_t seed = 0;
  EvalPoint point;
};

inline std::vector<CsvRow> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ConfigError("CSV header mismatch");
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 9) throw ConfigError("CSV row has " + std::to_string(f.size()) + " fields");
    CsvRow r;
    r.seed = std::stoull(f[0]);
    r.point.step = std::stoull(f[1]);
    r.point.max_abs_error = std::stod(f[2]);
    r.point.mean_abs_error = std::stod(f[3]);
    r.point.clip_events = std::stoull(f[4]);
    r.point.clamp_events = std::stoull(f[5]);
    r.point.bound_max_violation = std::stod(f[6]);
    r.point.sign_constancy_ok = f[7] == "1";
    r.point.beta_product = std::stod(f[8]);
    rows.push_back(r);
  }
  return rows;
}

inline nlohmann::json summary_json(const SweepResult& sweep_result) {
  using nlohmann::json;
  json runs = json::array();
  for (const auto& o : sweep_result.outcomes) {
    json r{{"seed", o.seed}};
    if (o.result) {
      r["final_max_abs_error"] = o.result->final_error();
      r["diagnostics_passed"] = o.result->diagnostics_passed;
      r["target_met"] = o.result->target_met;
      r["bound_violations"] = o.result->bound_violations;
      r["envelope_violations"] = o.result->envelope_violations;
    } else {
      r["error"] = o.error;
    }
    runs.push_back(r);
  }
  const auto& s = sweep_result.summary;
  return {{"runs", runs},
          {"summary",
           {{"runs", s.runs},
            {"failures", s.failures},
            {"mean_final_error", s.mean_final_error},
            {"max_final_error", s.max_final_error},
            {"diagnostics_pass_rate", s.diagnostics_pass_rate},
            {"target_pass_rate", s.target_pass_rate}}}};
}

// ---------------------------------------------------------------------------
// Jensen demonstration

/// f(x) = (x + 1)^2 on [0, 2]: increasing, semi-convex, slopes in [2, 6].
inline MappingFunction make_shifted_square() {
  return MappingFunction::custom(
      {"shifted_square", [](double x) { return (x + 1.0) * (x + 1.0); },
       [](double y) { return std::sqrt(y) - 1.0; }},
      {0.0, 2.0}, Direction::increasing, Curvature::semi_convex, {2.0, 6.0});
}

struct JensenDemoResult {
  std::size_t steps = 0;
  double q_star = 0.0;
  double naive_fixed_point = 0.0;
  double naive_value = 0.0;
  double orchestrated_value = 0.0;

  double naive_bias() const { return naive_value - q_star; }
  double naive_fixed_point_error() const { return std::abs(naive_value - naive_fixed_point); }
  double orchestrated_error() const { return std::abs(orchestrated_value - q_star); }
};

/**
 * Runs the naive mapped learner (alpha = (1+n)^-0.8) and the orchestrated
 * learner (beta_f = beta_reg = (1+n)^-0.5) on one shared reward stream of
 * the Jensen bandit under f(x) = (x + 1)^2, both starting from 0.
 */
inline JensenDemoResult run_jensen_demo(std::size_t steps, std::uint64_t seed) {
  const TabularMdp mdp = make_jensen_bandit();
  const MappingFunction f = make_shifted_square();

  LearnerConfig lc;
  lc.num_states = 1;
  lc.num_actions = 1;
  lc.gamma = 0.0;
  lc.mappings = {f};
  lc.rates = {Schedule::polynomial(1.0, 0.5), Schedule::polynomial(1.0, 0.5)};
  lc.q_init = {0.0};
  OrchestratedLearner orchestrated(lc);

  const Schedule alpha = Schedule::polynomial(1.0, 0.8);
  ValueTable naive(1, 1, f.forward(0.0));
  auto rng = derive_rng(seed, Stream::transitions);
  for (std::size_t t = 0; t < steps; ++t) {
    const Transition tr = sample_transition(mdp, rng, 0, 0);
    naive_mapped_step(naive, tr, alpha(t, t), 0.0, f);
    orchestrated.step(tr);
  }

  JensenDemoResult out;
  out.steps = steps;
  out.q_star = q_star(mdp)(0, 0);
  out.naive_fixed_point = naive_fixed_point(mdp, f)(0, 0);
  out.naive_value = f.inverse(naive(0, 0));
  out.orchestrated_value = orchestrated.q_value(0, 0);
  return out;
}

}  // namespace ovm
