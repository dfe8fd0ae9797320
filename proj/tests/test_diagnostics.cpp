#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ovm/decompose.hpp"
#include "ovm/diagnostics.hpp"
#include "ovm/learner.hpp"
#include "ovm/mdp.hpp"

using namespace ovm;

namespace {

MappingFunction exp_mapping(Interval dom, double sign = 1.0) {
  // sign = +1: increasing convex; sign = -1: decreasing convex (f(x) = e^{-x/4}).
  const double k = sign / 4.0;
  const double s_lo = std::abs(k) * std::min(std::exp(k * dom.lo), std::exp(k * dom.hi));
  const double s_hi = std::abs(k) * std::max(std::exp(k * dom.lo), std::exp(k * dom.hi));
  return MappingFunction::custom(
      {"exp", [k](double x) { return std::exp(k * x); }, [k](double y) { return std::log(y) / k; }},
      dom, sign > 0 ? Direction::increasing : Direction::decreasing, Curvature::semi_convex,
      {s_lo, s_hi});
}

MappingFunction neg_log(Interval dom) {
  // Decreasing, semi-convex: f(x) = -ln(x + 1).
  return MappingFunction::custom(
      {"neglog", [](double x) { return -std::log(x + 1.0); },
       [](double y) { return std::exp(-y) - 1.0; }},
      dom, Direction::decreasing, Curvature::semi_convex,
      {1.0 / (dom.hi + 1.0), 1.0 / (dom.lo + 1.0)});
}

MappingFunction neg_exp(Interval dom) {
  // Decreasing, semi-concave: f(x) = -e^{x/4}.
  return MappingFunction::custom(
      {"negexp", [](double x) { return -std::exp(x / 4.0); },
       [](double y) { return 4.0 * std::log(-y); }},
      dom, Direction::decreasing, Curvature::semi_concave,
      {std::exp(dom.lo / 4.0) / 4.0, std::exp(dom.hi / 4.0) / 4.0});
}

}  // namespace

TEST(Diagnostics, ErrorTermClosedForm) {
  // f(x) = (x + 1)^2, a = 0, b = 2, beta = 1/2:
  // f^-1((1 + 9) / 2) - 1 = sqrt(5) - 2.
  const auto f = MappingFunction::custom(
      {"sq", [](double x) { return (x + 1) * (x + 1); }, [](double y) { return std::sqrt(y) - 1; }},
      {0.0, 2.0}, Direction::increasing, Curvature::semi_convex, {2.0, 6.0});
  EXPECT_NEAR(error_term(0.0, 2.0, 0.5, f), std::sqrt(5.0) - 2.0, 1e-15);
  EXPECT_EQ(error_term(1.0, 1.0, 0.3, f), 0.0);
  EXPECT_THROW(error_term(-1.0, 1.0, 0.5, f), DomainError);
}

TEST(Diagnostics, ErrorTermZeroForLinear) {
  const auto f = make_linear(-2.0, 3.0, {-10.0, 10.0});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 1000; ++i) EXPECT_NEAR(error_term(u(rng), u(rng), 0.37, f), 0.0, 1e-13);
}

TEST(Diagnostics, ExpectedSignTable) {
  const Interval dom{0.0, 5.0};
  EXPECT_EQ(expected_error_sign(exp_mapping(dom)), 1);
  EXPECT_EQ(expected_error_sign(make_log(0.5, 0.02, dom)), -1);
  EXPECT_EQ(expected_error_sign(neg_log(dom)), -1);
  EXPECT_EQ(expected_error_sign(neg_exp(dom)), 1);
  EXPECT_EQ(expected_error_sign(make_identity()), 0);
}

TEST(DiagnosticsProperty, ErrorSignAndBoundOnRandomArguments) {
  const Interval dom{0.0, 5.0};
  const std::vector<MappingFunction> maps{exp_mapping(dom), exp_mapping(dom, -1.0),
                                          make_log(0.5, 0.02, dom), make_loglin(0.5, 0.02, dom),
                                          neg_log(dom), neg_exp(dom)};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> x(dom.lo, dom.hi);
  std::uniform_real_distribution<double> beta(0.0, 1.0);
  for (const auto& f : maps) {
    const int sign = expected_error_sign(f);
    for (int i = 0; i < 50000; ++i) {
      const double a = x(rng);
      const double b = x(rng);
      const double bf = beta(rng);
      const double e = error_term(a, b, bf, f);
      ASSERT_GE(sign * e, -1e-12) << f.name();
      ASSERT_LE(std::abs(e), bf * delta_ratio(f) * std::abs(b - a) + 1e-10) << f.name();
    }
  }
}

TEST(Diagnostics, ConvergenceErrorIsMaxNorm) {
  ValueTable a(2, 2, 1.0);
  ValueTable b(2, 2, 1.0);
  b(1, 0) = 1.5;
  b(0, 1) = 0.9;
  EXPECT_DOUBLE_EQ(convergence_error(a, b), 0.5);
  EXPECT_DOUBLE_EQ(mean_abs_error(a, b), 0.15);
  EXPECT_THROW(convergence_error(a, ValueTable(3, 2)), std::invalid_argument);
}

TEST(Diagnostics, ComposedErrorWeightsChannels) {
  StepRecord rec;
  rec.weights = {1.0, -1.0};
  rec.channels.resize(2);
  rec.channels[0].error = 0.25;
  rec.channels[1].error = -0.5;
  EXPECT_DOUBLE_EQ(composed_error(rec), 0.75);
  const std::vector<double> w{2.0, 2.0};
  EXPECT_DOUBLE_EQ(composed_error(rec, w), -0.5);
}

TEST(Diagnostics, AuditFlagsViolations) {
  const auto f = make_log(0.5, 0.02, {0.0, 10.0});
  StepRecord rec;
  rec.beta_f = 0.5;
  rec.beta_reg = 1.0;
  rec.weights = {1.0};
  rec.channels.resize(1);
  auto& ch = rec.channels[0];
  ch.current = 1.0;
  ch.proposal = 3.0;
  ch.clipped_td = 2.0;
  ch.error = error_term(1.0, 3.0, 0.5, f);
  ErrorAudit audit({f}, {10.0});
  audit.record(rec);
  EXPECT_EQ(audit.bound_violations(), 0u);
  EXPECT_EQ(audit.max_self_inconsistency(), 0.0);
  EXPECT_TRUE(check_sign_constancy(audit, 0));

  // A record claiming a smaller TD than the proposal implies breaks the bound.
  ch.clipped_td = 1e-6;
  audit.record(rec);
  EXPECT_EQ(audit.bound_violations(), 1u);
  EXPECT_GT(audit.max_violation(), 0.0);
  EXPECT_EQ(audit.envelope_violations(), 0u);

  // A mapping with mixed curvature gives opposite-sign errors on either side
  // of its inflection point; clamped steps are kept out of the verdict.
  const auto cube = MappingFunction::custom(
      {"cube", [](double x) { return x * x * x; }, [](double y) { return std::cbrt(y); }},
      {-1.0, 1.0}, Direction::increasing, Curvature::semi_convex, {0.1, 3.0});
  ErrorAudit mixed({cube}, {2.0});
  StepRecord r2 = rec;
  r2.channels[0] = ChannelStep{};
  r2.channels[0].current = 0.2;
  r2.channels[0].proposal = 0.9;
  r2.channels[0].clipped_td = 0.7;
  mixed.record(r2);
  r2.channels[0].current = -0.9;
  r2.channels[0].proposal = -0.2;
  r2.channels[0].clamped = true;
  mixed.record(r2);
  EXPECT_TRUE(check_sign_constancy(mixed));
  EXPECT_EQ(mixed.sign_summary(0).clamped_steps, 1u);
  EXPECT_EQ(mixed.clamp_events(), 1u);
  r2.channels[0].clamped = false;
  mixed.record(r2);
  EXPECT_FALSE(check_sign_constancy(mixed));
}

TEST(DiagnosticsProperty, AuditOfLearnerRunHasNoViolations) {
  std::mt19937_64 gen(3);
  RandomMdpSpec spec;
  spec.reward_support = {-1.0, -0.2, 0.4, 1.0};
  const auto m = make_random_mdp(gen, spec);
  LearnerConfig c;
  c.num_states = m.num_states();
  c.num_actions = m.num_actions();
  c.gamma = m.gamma();
  c.decomposition = make_pos_neg();
  const auto b = channel_return_bounds(c.decomposition, m.reward_bounds(), m.gamma());
  c.mappings = {make_log(0.5, 0.02, b[0]), neg_log(b[1])};
  c.rates = {Schedule::polynomial(1.0, 0.5), Schedule::polynomial(0.8, 0.3)};
  c.clip_bounds = {0.5, 0.5};
  OrchestratedLearner l(c);
  ErrorAudit audit(l.mappings(), l.config().clip_bounds);
  std::mt19937_64 rng(4);
  std::size_t s = 0;
  for (int t = 0; t < 30000; ++t) {
    const auto tr = sample_transition(m, rng, s, l.select_action(s, 0.3, rng));
    audit.record(l.step(tr));
    s = tr.next_state;
  }
  EXPECT_EQ(audit.steps(), 30000u);
  EXPECT_EQ(audit.bound_violations(), 0u);
  EXPECT_EQ(audit.envelope_violations(), 0u);
  EXPECT_TRUE(error_decay_check(audit));
  EXPECT_TRUE(check_sign_constancy(audit));
  EXPECT_LE(audit.max_self_inconsistency(), 1e-12);
  EXPECT_GT(audit.clip_events(), 0u);
  EXPECT_LE(audit.sign_summary(0).max_error, 1e-12);
  EXPECT_LE(audit.sign_summary(1).max_error, 1e-12);
  ASSERT_EQ(audit.composed_series().size(), 30000u);
  for (std::size_t t = 0; t < 30000; ++t) {
    EXPECT_LE(std::abs(audit.composed_series()[t]), audit.envelope_series()[t] + 1e-10);
  }
}
