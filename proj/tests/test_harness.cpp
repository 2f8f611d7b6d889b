#include <gtest/gtest.h>

#include "support.hpp"

using namespace toda;
using toda::testing::spot_soliton;

TEST(CheckResult, AtMost) {
  auto c = CheckResult::at_most(1.0);
  EXPECT_TRUE(c.pass());  // nothing sampled
  c.add(0.5);
  c.add(0.25);
  EXPECT_EQ(c.value, 0.5);
  EXPECT_EQ(c.points, 2u);
  EXPECT_DOUBLE_EQ(c.mean(), 0.375);
  EXPECT_TRUE(c.pass());
  c.add(1.5);
  EXPECT_FALSE(c.pass());
}

TEST(CheckResult, NanFails) {
  auto c = CheckResult::at_most(1.0);
  c.add(std::numeric_limits<double>::quiet_NaN());
  c.add(0.1);
  EXPECT_FALSE(c.pass());
  auto l = CheckResult::at_least(1.0);
  l.add(2.0);
  l.add(std::numeric_limits<double>::quiet_NaN());
  EXPECT_FALSE(l.pass());
}

TEST(CheckResult, AtLeastAndMedian) {
  auto l = CheckResult::at_least(1.0);
  l.add(3.0);
  l.add(1.5);
  EXPECT_EQ(l.value, 1.5);
  EXPECT_TRUE(l.pass());
  l.add(0.5);
  EXPECT_FALSE(l.pass());

  auto m = CheckResult::median(3.2, 4.8);
  for (double v : {1.0, 4.0, 4.1, 3.9, 100.0}) m.add(v);
  EXPECT_EQ(m.value, 4.0);
  EXPECT_TRUE(m.pass());
}

TEST(CheckResult, Merge) {
  auto a = CheckResult::at_most(1.0);
  auto b = CheckResult::at_most(1.0);
  a.add(0.2);
  b.add(0.7);
  b.add(0.1);
  a.merge(b);
  EXPECT_EQ(a.value, 0.7);
  EXPECT_EQ(a.points, 3u);
  auto m = CheckResult::median(0, 10);
  auto n = CheckResult::median(0, 10);
  m.add(1.0);
  n.add(5.0);
  n.add(6.0);
  m.merge(n);
  EXPECT_EQ(m.value, 5.0);
}

TEST(Report, JsonFields) {
  VerificationReport rep;
  rep.add("a", CheckResult::at_most(1e-6), 2e-7);
  rep.add("b", CheckResult::at_least(1e-2), 0.5);
  rep.metrics["m"] = 3;
  const auto j = rep.to_json();
  EXPECT_TRUE(j["all_pass"].get<bool>());
  for (const char* k : {"kind", "value", "mean_norm", "points_tested", "lower", "upper", "pass"}) {
    EXPECT_TRUE(j["checks"]["a"].contains(k)) << k;
  }
  EXPECT_EQ(j["checks"]["a"]["max_norm"].get<double>(), 2e-7);
  EXPECT_FALSE(j["checks"]["b"].contains("max_norm"));
  EXPECT_EQ(j["checks"]["b"]["lower"].get<double>(), 1e-2);
  EXPECT_EQ(j["checks"]["a"]["lower"].get<std::string>(), "-inf");
  rep.failures.push_back("x");
  EXPECT_FALSE(rep.to_json()["all_pass"].get<bool>());
}

TEST(Grid, PointsAndValidation) {
  GridSpec g;
  g.mode = CoordinateMode::lorentzian;
  g.x_min = -1;
  g.x_max = 1;
  g.t_min = 0;
  g.t_max = 2;
  g.nx = 3;
  g.nt = 2;
  EXPECT_EQ(g.size(), 6u);
  EXPECT_EQ(g.point(0), (std::pair{-1.0, 0.0}));
  EXPECT_EQ(g.point(1), (std::pair{-1.0, 2.0}));
  EXPECT_EQ(g.point(5), (std::pair{1.0, 2.0}));
  EXPECT_EQ(g.cone(5).plus, Complex(3.0));
  EXPECT_NO_THROW(validate(g));
  g.fd_step = 0.3;
  EXPECT_THROW(validate(g), ValidationError);
  g.fd_step = 1e-4;
  g.x_max = -2;
  EXPECT_THROW(validate(g), ValidationError);
}

TEST(Grid, SampleMarksSingularPoints) {
  const auto s = build_system(2, 1);
  const auto f = gamma_soliton_e28(s, spot_soliton());
  GridSpec g;
  // R~'_1 vanishes at z+ = ln 2 / 4 on the t = 0 line
  g.x_min = std::log(2.0) / 4.0;
  g.x_max = g.x_min + 1.0;
  g.nx = 2;
  const auto grid = sample_field(f, g);
  EXPECT_FALSE(grid.valid[0][0]);
  EXPECT_TRUE(grid.valid[0][1]);
  EXPECT_EQ(grid.invalid_count(), 1u);
}

TEST(ResidualReport, VacuumIsZero) {
  const auto s = build_system(3, 2);
  GridSpec g;
  g.mode = CoordinateMode::euclidean;
  g.x_max = 1;
  g.t_max = 1;
  g.nx = 3;
  g.nt = 3;
  const auto rep = residual_report(vacuum_field(s), s, g);
  EXPECT_EQ(rep.checks.at("residual").value, 0.0);
  EXPECT_EQ(rep.checks.at("residual").points, 9u);
  EXPECT_EQ(rep.checks.count("residual_richardson"), 0u);  // below the rounding floor
  EXPECT_TRUE(rep.all_pass());
}

TEST(ResidualReport, RichardsonOnSoliton) {
  const auto s = build_system(2, 1);
  const auto f = gamma_one_soliton(s, spot_soliton()).field;
  GridSpec g;
  g.x_min = -1.5;
  g.x_max = -1.0;
  g.t_min = -1.0;
  g.t_max = -0.5;
  g.nx = 2;
  g.nt = 2;
  g.fd_step = 1e-3;
  const auto rep = residual_report(f, s, g);
  const auto& rr = rep.checks.at("residual_richardson");
  EXPECT_GE(rr.points, 1u);
  EXPECT_GE(rr.value, 3.2);
  EXPECT_LE(rr.value, 4.8);
}

TEST(Equivalence, IdenticalAndScaled) {
  const auto s = build_system(2, 1);
  const auto f = gamma_soliton_e28(s, spot_soliton());
  const GammaField g3{2, 1, [f](int a, LightCone z) { return f(a, z) * Complex(3.0); }};
  GridSpec g;
  g.x_min = -1;
  g.x_max = 1;
  g.nx = 4;
  const auto same = equivalence_report({f, f}, g, EquivalenceMode::exact);
  EXPECT_EQ(same.checks.at("equivalence").value, 0.0);
  EXPECT_FALSE(equivalence_report({g3, f}, g, EquivalenceMode::exact).all_pass());
  const auto prop = equivalence_report({g3, f}, g, EquivalenceMode::proportional);
  EXPECT_TRUE(prop.all_pass());
  EXPECT_NEAR(prop.metrics.at("ratio_re"), 3.0, 1e-14);
  EXPECT_THROW(equivalence_report({f}, g, EquivalenceMode::exact), ValidationError);
}

TEST(Rng, Deterministic) {
  Rng a(7), b(7), c(8);
  for (int i = 0; i < 5; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_NE(a.normal(), c.normal());
  EXPECT_NE(trial_seed(42, 0), trial_seed(42, 1));
  EXPECT_EQ(trial_seed(42, 3), trial_seed(42, 3));
}

TEST(Campaign, DataConditioning) {
  EXPECT_NEAR(row_equilibrated_condition(ComplexMatrix::identity(3)), 1.0, 1e-15);
  EXPECT_TRUE(std::isinf(row_equilibrated_condition(ComplexMatrix(2, 2))));
  CampaignSettings s;
  Rng rng(3);
  for (int k = 0; k < 5; ++k) {
    const auto g = generate_trial(s, rng, false);
    EXPECT_NO_THROW(validate(g.system, g.data));
    EXPECT_GE(g.system.p, 2);
    EXPECT_LE(g.system.p, 4);
  }
}

TEST(Campaign, InjectedCollisionIsRejectedAndCounted) {
  CampaignSettings s;
  s.trials = 2;
  s.points_per_trial = 2;
  s.inject_pole_collision = {0};
  const auto rep = campaign(s);
  EXPECT_GE(rep.metrics.at("rejected_invalid"), 1.0);
  EXPECT_EQ(rep.metrics.at("trials"), 2.0);
}

TEST(Campaign, SmallRunDeterministic) {
  CampaignSettings s;
  s.seed = 5;
  s.trials = 3;
  s.points_per_trial = 3;
  const auto a = campaign(s).to_json();
  const auto b = campaign(s).to_json();
  EXPECT_EQ(a.dump(), b.dump());
  s.seed = 6;
  EXPECT_NE(campaign(s).to_json().dump(), a.dump());
}

TEST(Campaign, Seed42AllPass) {
  CampaignSettings s;  // 20 trials, 10 points each
  const auto rep = campaign(s);
  for (const auto& f : rep.failures) ADD_FAILURE() << f;
  for (const auto& [name, c] : rep.checks) EXPECT_TRUE(c.pass()) << name << " = " << c.value;
  EXPECT_EQ(rep.metrics.at("points_tested"), 200.0);
  for (const char* name : {"residual_dressing", "residual_e28", "dressing_vs_e28", "inverse_pair", "e_identity",
                           "factorization", "multi_proportional", "residual_dressing_richardson"}) {
    EXPECT_GT(rep.checks.at(name).points, 0u) << name;
  }
}
