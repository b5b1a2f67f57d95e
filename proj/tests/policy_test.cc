// Copyright 2026 The HetScale Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hetscale/policy.h"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hetscale/error.h"
#include "hetscale/workload.h"

namespace hetscale::policy {
namespace {

using servicesim::MetricsSample;
using servicesim::Role;
using servicesim::ServiceProfile;

PolicyConfig proportional(double target = 100) {
  PolicyConfig cfg;
  cfg.kind = PolicyKind::kProportional;
  cfg.metric = Metric::kDecodeTps;
  cfg.target = target;
  cfg.pd_ratio = {1, 1};
  return cfg;
}

PolicyConfig feedback(double alpha, double beta, double gamma) {
  PolicyConfig cfg;
  cfg.kind = PolicyKind::kFeedback;
  cfg.metric = Metric::kTbt;
  cfg.target = 0.04;
  cfg.alpha_out = alpha;
  cfg.beta_out = beta;
  cfg.gamma_in = gamma;
  cfg.pd_ratio = {1, 1};
  return cfg;
}

constexpr long kCooled = -1000;

// ---- proportional control ----

TEST(Proportional, ScaleOutToExpectedCount) {
  auto d = proportional_decide(proportional(), {10, 10}, 120, kCooled, 0);
  EXPECT_EQ(d.action, Action::kScaleOut);
  EXPECT_DOUBLE_EQ(d.expected_instances, 12.0);
  EXPECT_EQ(d.target.decode, 12);
  EXPECT_EQ(d.target.prefill, 12);
}

TEST(Proportional, InsideBandIsNoChange) {
  auto d = proportional_decide(proportional(), {10, 10}, 105, kCooled, 0);
  EXPECT_EQ(d.action, Action::kNoChange);
  EXPECT_EQ(d.target, (ServiceCounts{10, 10}));
}

TEST(Proportional, ScaleInWaitsForCooling) {
  auto cfg = proportional();
  EXPECT_EQ(proportional_decide(cfg, {10, 10}, 80, 0, cfg.cool_in - 1).action, Action::kNoChange);
  auto d = proportional_decide(cfg, {10, 10}, 80, 0, cfg.cool_in);
  EXPECT_EQ(d.action, Action::kScaleIn);
  EXPECT_EQ(d.target.decode, 8);
}

TEST(Proportional, ZeroTargetIsInvalidConfig) {
  try {
    proportional_decide(proportional(0), {10, 10}, 80, kCooled, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
  }
}

TEST(Proportional, HysteresisBandSweep) {
  for (double theta_in : {0.05, 0.1, 0.3}) {
    for (double theta_out : {0.05, 0.1, 0.25}) {
      auto cfg = proportional(250);
      cfg.theta_in = theta_in;
      cfg.theta_out = theta_out;
      const double lo = cfg.target * (1 - theta_in), hi = cfg.target * (1 + theta_out);
      for (int i = 1; i <= 1000; ++i) {
        const double m = lo + (hi - lo) * i / 1001.0;
        for (int instances : {1, 7, 40}) {
          auto d = proportional_decide(cfg, {instances, instances}, m, kCooled, 0);
          ASSERT_EQ(d.action, Action::kNoChange) << m;
          ASSERT_EQ(d.target, d.current);
        }
      }
    }
  }
}

TEST(Proportional, ScaleInTargetIsCeiling) {
  auto d = proportional_decide(proportional(), {10, 10}, 51, kCooled, 0);
  EXPECT_EQ(d.action, Action::kScaleIn);
  EXPECT_EQ(d.target.decode, 6);  // ceil(5.1)
}

// ---- feedback control ----

TEST(Feedback, SevereTier) {
  auto cfg = feedback(1.25, 1.1, 0.6);
  auto d = feedback_decide(cfg, {10, 10}, 1.3 * cfg.target, kCooled, 0);
  EXPECT_EQ(d.action, Action::kScaleOut);
  EXPECT_DOUBLE_EQ(d.expected_instances, 12.0);
  EXPECT_EQ(d.target.decode, 12);
}

TEST(Feedback, ModerateTier) {
  auto cfg = feedback(1.25, 1.1, 0.6);
  auto d = feedback_decide(cfg, {10, 10}, 1.15 * cfg.target, kCooled, 0);
  EXPECT_EQ(d.action, Action::kScaleOut);
  EXPECT_DOUBLE_EQ(d.expected_instances, 11.0);
  EXPECT_EQ(d.target.decode, 11);
}

TEST(Feedback, ShedTier) {
  auto cfg = feedback(1.25, 1.1, 0.95);
  auto d = feedback_decide(cfg, {20, 20}, 0.9 * cfg.target, kCooled, 0);
  EXPECT_EQ(d.action, Action::kScaleIn);
  EXPECT_EQ(d.target.decode, 19);
}

TEST(Feedback, BadThresholdOrderIsInvalidConfig) {
  for (auto cfg : {feedback(1.1, 1.25, 0.6), feedback(1.5, 0.9, 0.6), feedback(1.5, 1.1, 1.2)}) {
    try {
      feedback_decide(cfg, {10, 10}, 0.04, kCooled, 0);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
    }
  }
}

TEST(Feedback, ExactlyOneTierFires) {
  auto cfg = feedback(1.25, 1.1, 0.8);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 5000; ++i) {
    const double l = u(rng) * cfg.target;
    auto d = feedback_decide(cfg, {100, 100}, l, kCooled, 0);
    const bool severe = l >= cfg.target * cfg.alpha_out;
    const bool moderate = !severe && l >= cfg.target * cfg.beta_out;
    const bool shed = l <= cfg.target * cfg.gamma_in;
    const double step = severe ? 1.2 : moderate ? 1.1 : shed ? 0.95 : 1.0;
    ASSERT_LE(int(severe) + int(moderate) + int(shed), 1);
    ASSERT_DOUBLE_EQ(d.expected_instances, 100 * step) << l;
    const Action expected = severe || moderate ? Action::kScaleOut : shed ? Action::kScaleIn : Action::kNoChange;
    ASSERT_EQ(d.action, expected) << l;
  }
}

TEST(Feedback, CoolingIsDirectionMatched) {
  auto cfg = feedback(1.25, 1.1, 0.6);
  cfg.cool_out = 2;
  cfg.cool_in = 8;
  EXPECT_EQ(feedback_decide(cfg, {10, 10}, 2 * cfg.target, 0, 2).action, Action::kScaleOut);
  EXPECT_EQ(feedback_decide(cfg, {10, 10}, 0.1 * cfg.target, 0, 2).action, Action::kNoChange);
  EXPECT_EQ(feedback_decide(cfg, {10, 10}, 0.1 * cfg.target, 0, 8).action, Action::kScaleIn);
}

TEST(Feedback, TtftAnchorsOnPrefill) {
  auto cfg = feedback(1.25, 1.1, 0.6);
  cfg.metric = Metric::kTtft;
  cfg.target = 1.0;
  cfg.pd_ratio = {1, 2};
  auto d = feedback_decide(cfg, {10, 20}, 2.0, kCooled, 0);
  ASSERT_TRUE(d.anchor);
  EXPECT_EQ(*d.anchor, Role::kPrefill);
  EXPECT_EQ(d.target.prefill, 12);
  EXPECT_EQ(d.target.decode, 24);
}

// ---- periodic schedules ----

TEST(Periodic, InsideWindowAtTargetsIsNoChange) {
  auto s = parse_schedule("00:00-08:00=10/20; 08:00-24:00=20/40");
  EXPECT_EQ(periodic_decide(s, {10, 20}, 3 * 60, 0).action, Action::kNoChange);
}

TEST(Periodic, BoundarySwitchesWindow) {
  auto s = parse_schedule("00:00-08:00=10/20; 08:00-24:00=20/40");
  auto d = periodic_decide(s, {10, 20}, 8 * 60, 0);
  EXPECT_EQ(d.action, Action::kScaleOut);
  EXPECT_EQ(d.target, (ServiceCounts{20, 40}));
  EXPECT_EQ(periodic_decide(s, {20, 40}, 0, 0).action, Action::kScaleIn);
}

TEST(Periodic, GapRejectedAtLoad) {
  try {
    parse_schedule("00:00-08:00=10/20; 09:00-24:00=20/40");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGapInSchedule);
  }
}

TEST(Periodic, OverlapAndSyntaxRejected) {
  for (const char* text : {"00:00-09:00=1/1; 08:00-24:00=2/2", "00:00-24:00", "25:00-01:00=1/1", "00:00-24:00=a/1"}) {
    try {
      parse_schedule(text);
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig) << text;
    }
  }
}

TEST(Periodic, WrappingWindow) {
  auto s = parse_schedule("22:00-06:00=2/4; 06:00-22:00=8/16");
  EXPECT_EQ(periodic_decide(s, {2, 4}, 23 * 60, 0).action, Action::kNoChange);
  EXPECT_EQ(periodic_decide(s, {2, 4}, 5 * 60 + 59, 0).action, Action::kNoChange);
  EXPECT_EQ(periodic_decide(s, {2, 4}, 6 * 60, 0).target, (ServiceCounts{8, 16}));
  EXPECT_EQ(periodic_decide(s, {2, 4}, 24 * 60 + 60, 0).action, Action::kNoChange);
}

// ---- P/D ratio application ----

TEST(PdRatio, Examples) {
  EXPECT_EQ(apply_pd_ratio(10, {1, 5}).prefill, 2);
  EXPECT_EQ(apply_pd_ratio(2, {9, 1}).prefill, 18);
  EXPECT_EQ(apply_pd_ratio(3, {1, 2}).prefill, 2);
  EXPECT_EQ(apply_pd_ratio(3, {1, 2}).decode, 3);
}

TEST(PdRatio, ParseAndFormat) {
  auto r = parse_pd_ratio("3:7");
  EXPECT_EQ(r.prefill, 3);
  EXPECT_EQ(r.decode, 7);
  EXPECT_EQ(format_pd_ratio(r), "3:7");
  for (const char* bad : {"3", "0:1", "a:b", "1:-2"}) {
    EXPECT_THROW(parse_pd_ratio(bad), Error) << bad;
  }
}

// Enumerates every integer prefill count and checks the emitted one is an
// integer neighbour of the exact product, never below it.
TEST(PdRatio, RoundingOracle) {
  InstanceBounds wide;
  for (int p = 1; p <= 9; ++p) {
    for (int q = 1; q <= 9; ++q) {
      const PdRatio ratio{p, q};
      for (int d = 1; d <= 300; ++d) {
        const auto out = apply_pd_ratio(d, ratio, wide);
        ASSERT_EQ(out.decode, d);
        const double exact = static_cast<double>(d) * p / q;
        int best = 0;
        double best_dev = 1e300;
        for (int cand = 0; cand <= 3000; ++cand) {
          if (cand < exact - 1e-12) continue;
          const double dev = std::abs(static_cast<double>(cand) / d - ratio.value());
          if (dev < best_dev) {
            best_dev = dev;
            best = cand;
          }
        }
        ASSERT_EQ(out.prefill, std::max(1, best)) << p << ":" << q << " d=" << d;
        ASSERT_LT(std::abs(static_cast<double>(out.prefill) / d - ratio.value()), 1.0 / d + 1e-12);
      }
    }
  }
}

TEST(PdRatio, BoundsClampBothRoles) {
  InstanceBounds b;
  b.min_prefill = 2;
  b.max_prefill = 5;
  b.min_decode = 3;
  b.max_decode = 10;
  EXPECT_EQ(apply_pd_ratio(1, {1, 1}, b), (ServiceCounts{3, 3}));
  EXPECT_EQ(apply_pd_ratio(50, {1, 1}, b), (ServiceCounts{5, 10}));
  EXPECT_EQ(apply_pd_ratio(4, {1, 5}, b), (ServiceCounts{2, 4}));
}

// ---- anti-flap ----

ScalingDecision decision(Action action, long tick, ServiceCounts current, ServiceCounts target) {
  ScalingDecision d;
  d.action = action;
  d.tick = tick;
  d.current = current;
  d.target = target;
  d.anchor = Role::kDecode;
  return d;
}

TEST(AntiFlap, OppositeActionInsideWindowSuppressed) {
  auto cfg = proportional();
  cfg.cool_in = 10;
  std::vector<ActionRecord> history = {{100, Action::kScaleOut}};
  auto d = anti_flap_filter(decision(Action::kScaleIn, 102, {12, 12}, {10, 10}), history, cfg);
  EXPECT_EQ(d.action, Action::kNoChange);
  EXPECT_EQ(d.target, d.current);
  EXPECT_EQ(anti_flap_filter(decision(Action::kScaleIn, 110, {12, 12}, {10, 10}), history, cfg).action,
            Action::kScaleIn);
  EXPECT_EQ(anti_flap_filter(decision(Action::kScaleOut, 101, {12, 12}, {14, 14}), history, cfg).action,
            Action::kScaleOut);
}

TEST(AntiFlap, DampeningScalesMagnitude) {
  auto cfg = proportional();
  cfg.dampening = 0.5;
  auto d = anti_flap_filter(decision(Action::kScaleOut, 5, {10, 10}, {20, 20}), {}, cfg);
  EXPECT_EQ(d.target.decode - d.current.decode, 5);
  EXPECT_EQ(d.target.prefill, 15);
  auto small = anti_flap_filter(decision(Action::kScaleIn, 5, {10, 10}, {9, 9}), {}, cfg);
  EXPECT_EQ(small.target.decode, 9);
}

TEST(AntiFlap, NoChangePassesThrough) {
  auto cfg = proportional();
  cfg.dampening = 0.3;
  auto in = decision(Action::kNoChange, 5, {4, 4}, {4, 4});
  auto out = anti_flap_filter(in, {{4, Action::kScaleOut}}, cfg);
  EXPECT_EQ(out.action, Action::kNoChange);
  EXPECT_EQ(out.target, in.target);
}

// ---- engine properties over random replays ----

MetricsSample sample_with(double decode_tps, double tbt) {
  MetricsSample s;
  s.decode_tps = decode_tps;
  s.tbt = tbt;
  return s;
}

TEST(Engine, ActionsRespectCoolingAndBounds) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto cfg = trial % 2 ? proportional(100) : feedback(1.5, 1.1, 0.6);
    cfg.cool_out = 1 + trial % 4;
    cfg.cool_in = 2 + trial % 7;
    cfg.pd_ratio = {1 + trial % 3, 1 + trial % 5};
    cfg.bounds.min_decode = 2;
    cfg.bounds.max_decode = 60;
    cfg.bounds.max_prefill = 40;
    cfg.dampening = trial % 3 ? 1.0 : 0.5;
    PolicyEngine engine(cfg);
    ServiceCounts cur = apply_pd_ratio(10, cfg.pd_ratio, cfg.bounds);
    std::uniform_real_distribution<double> u(0.2, 2.5);
    std::vector<std::pair<long, Action>> acts;
    for (long t = 0; t < 400; ++t) {
      const double f = u(rng);
      auto d = engine.step(sample_with(f * 100 * cur.decode, f * cfg.target), cur, t, int(t % 1440));
      if (d.action == Action::kNoChange) {
        ASSERT_EQ(d.target, cur);
        continue;
      }
      ASSERT_GE(d.target.decode, cfg.bounds.min_decode);
      ASSERT_LE(d.target.decode, cfg.bounds.max_decode);
      ASSERT_GE(d.target.prefill, cfg.bounds.min_prefill);
      ASSERT_LE(d.target.prefill, cfg.bounds.max_prefill);
      if (!acts.empty()) {
        const auto [pt, pa] = acts.back();
        ASSERT_GE(t - pt, std::min(cfg.cool_out, cfg.cool_in));
        if (pa != d.action) ASSERT_GE(t - pt, d.action == Action::kScaleOut ? cfg.cool_out : cfg.cool_in);
      }
      acts.emplace_back(t, d.action);
      cur = d.target;
    }
    EXPECT_FALSE(acts.empty());
  }
}

TEST(Engine, SmoothingUsesTrailingMean) {
  auto cfg = proportional(100);
  cfg.smoothing_window = 2;
  cfg.pd_ratio = {1, 1};
  PolicyEngine engine(cfg);
  // Per-instance rates 100 then 140 average to 120.
  engine.step(sample_with(1000, 0), {10, 10}, 0, 0);
  auto d = engine.step(sample_with(1400, 0), {10, 10}, 1, 0);
  EXPECT_EQ(d.action, Action::kScaleOut);
  EXPECT_DOUBLE_EQ(d.expected_instances, 12.0);
}

TEST(Engine, StaticNeverActs) {
  PolicyConfig cfg;
  cfg.kind = PolicyKind::kStatic;
  PolicyEngine engine(cfg);
  for (long t = 0; t < 20; ++t) {
    EXPECT_EQ(engine.step(sample_with(1e9, 10), {3, 3}, t, 0).action, Action::kNoChange);
  }
}

TEST(Config, ValidateRejectsBadValues) {
  auto bad = [](auto mutate) {
    auto cfg = proportional();
    mutate(cfg);
    try {
      validate_policy(cfg);
      return false;
    } catch (const Error& e) {
      return e.code() == ErrorCode::kInvalidConfig;
    }
  };
  EXPECT_NO_THROW(validate_policy(proportional()));
  EXPECT_TRUE(bad([](PolicyConfig& c) { c.theta_out = 0; }));
  EXPECT_TRUE(bad([](PolicyConfig& c) { c.cool_in = -1; }));
  EXPECT_TRUE(bad([](PolicyConfig& c) { c.dampening = 0; }));
  EXPECT_TRUE(bad([](PolicyConfig& c) { c.gamma_in = 1.2; }));
  EXPECT_TRUE(bad([](PolicyConfig& c) { c.metric = Metric::kTtft; }));
  EXPECT_TRUE(bad([](PolicyConfig& c) { c.bounds.max_decode = 0; }));
  auto periodic = proportional();
  periodic.kind = PolicyKind::kPeriodic;
  try {
    validate_policy(periodic);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGapInSchedule);
  }
}

TEST(Names, RoundTrip) {
  for (Metric m : {Metric::kPrefillTps, Metric::kDecodeTps, Metric::kPrefillGpuUtil, Metric::kDecodeGpuUtil,
                   Metric::kPrefillSmAct, Metric::kDecodeSmAct, Metric::kTtft, Metric::kTbt}) {
    EXPECT_EQ(parse_metric(metric_name(m)), m);
  }
  for (PolicyKind k : {PolicyKind::kProportional, PolicyKind::kFeedback, PolicyKind::kPeriodic, PolicyKind::kStatic}) {
    EXPECT_EQ(parse_policy_kind(policy_kind_name(k)), k);
  }
  EXPECT_FALSE(parse_metric("gpu"));
}

// ---- pressure test ----

workload::WorkloadTrace flat_trace(double rate, double in, double out, double hit) {
  workload::WorkloadTrace tr;
  for (long t = 0; t < 5; ++t) tr.points.push_back({t, rate * (t == 2 ? 1.0 : 0.5), in, out, hit});
  return tr;
}

// Largest arrival rate meeting both SLOs, solved from the latency model.
double closed_form_rate(const ServiceProfile& p, ServiceCounts n, double in, double out, double hit,
                        double penalty) {
  const double rho_p = 1 - penalty * p.ttft_base / p.slo_ttft;
  const double rho_d = 1 - p.tbt_base / p.slo_tbt;
  const double by_prefill = rho_p * n.prefill * p.prefill_cap_per_inst / (in * (1 - hit));
  const double by_decode = rho_d * n.decode * p.decode_cap_per_inst / out;
  return std::min(by_prefill, by_decode);
}

TEST(PressureTest, CountsForBudget) {
  ServiceProfile p;
  p.gpus_per_prefill_inst = 4;
  p.gpus_per_decode_inst = 4;
  EXPECT_EQ(counts_for_budget({1, 1}, p, 128), (ServiceCounts{16, 16}));
  EXPECT_EQ(counts_for_budget({1, 3}, p, 128), (ServiceCounts{8, 24}));
  EXPECT_EQ(counts_for_budget({9, 1}, p, 128), (ServiceCounts{27, 3}));
  for (int a = 1; a <= 9; ++a) {
    for (int b = 1; b <= 9; ++b) {
      auto c = counts_for_budget({a, b}, p, 128);
      ASSERT_LE(4 * (c.prefill + c.decode), 128);
    }
  }
}

TEST(PressureTest, MatchesClosedFormPerRatio) {
  ServiceProfile p;
  p.gpus_per_prefill_inst = 4;
  p.gpus_per_decode_inst = 4;
  const double in = 3000, out = 350, hit = 0.2;
  PressureTestOptions opt;
  opt.gpu_budget = 128;
  opt.placement_penalty = 1.1;
  opt.ratios = {{1, 5}, {1, 2}, {1, 1}, {2, 1}, {5, 1}};
  auto tr = flat_trace(20, in, out, hit);
  auto res = pressure_test(p, tr, opt);
  ASSERT_EQ(res.points.size(), opt.ratios.size());

  std::size_t oracle_best = 0;
  double oracle_tps = -1;
  for (std::size_t i = 0; i < opt.ratios.size(); ++i) {
    const auto& pt = res.points[i];
    const double rate = closed_form_rate(p, pt.counts, in, out, hit, opt.placement_penalty);
    EXPECT_NEAR(pt.max_arrival_rate, rate, 1e-9 * rate);
    EXPECT_NEAR(pt.max_decode_tps, rate * out, 1e-6 * rate * out);
    const bool feasible = 20 <= rate;
    EXPECT_EQ(pt.breach_at_peak == SloBreach::kNone, feasible);
    if (feasible && rate * out > oracle_tps) {
      oracle_tps = rate * out;
      oracle_best = i;
    }
  }
  EXPECT_EQ(res.best, oracle_best);
  EXPECT_EQ(res.r_opt, opt.ratios[oracle_best]);
  EXPECT_NEAR(res.m_hat, oracle_tps / res.points[oracle_best].counts.decode, 1e-6 * oracle_tps);
}

TEST(PressureTest, ExtremesBreachOppositeSlos) {
  ServiceProfile p;
  p.gpus_per_prefill_inst = 4;
  p.gpus_per_decode_inst = 4;
  PressureTestOptions opt;
  opt.ratios = {{1, 9}, {1, 1}, {9, 1}};
  auto res = pressure_test(p, flat_trace(30, 2975, 350, 0), opt);
  EXPECT_EQ(res.points.front().breach_at_peak, SloBreach::kTtft);
  EXPECT_EQ(res.points.back().breach_at_peak, SloBreach::kTbt);
  EXPECT_EQ(res.best, 1u);
}

TEST(PressureTest, TinyBudgetHasNoFeasibleRatio) {
  ServiceProfile p;
  PressureTestOptions opt;
  opt.gpu_budget = 16;
  opt.ratios = {{1, 1}, {1, 2}};
  try {
    pressure_test(p, flat_trace(100, 3000, 350, 0), opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoFeasibleRatio);
  }
}

// ---- curation ----

TEST(Curation, ScoreRespectsBudget) {
  EXPECT_DOUBLE_EQ(candidate_score({1000, 10, 0.005}, 0.01), 100.0);
  EXPECT_DOUBLE_EQ(candidate_score({1000, 10, 0.02}, 0.01), 0.0);
  EXPECT_DOUBLE_EQ(candidate_score({1000, 0, 0.0}, 0.01), 0.0);
}

TEST(Curation, SelectsArgmaxOfScores) {
  ServiceProfile p;
  p.gpus_per_prefill_inst = 4;
  p.gpus_per_decode_inst = 4;
  PressureTestOptions opt;
  opt.ratios = {{1, 3}, {1, 2}, {1, 1}};
  auto tr = flat_trace(20, 3000, 350, 0);

  std::vector<PolicyConfig> cands;
  for (int i = 0; i < 6; ++i) {
    auto c = proportional(50 + 10 * i);
    c.name = "c" + std::to_string(i);
    cands.push_back(c);
  }
  auto sim = [](const PolicyConfig& c) {
    // Deterministic, non-monotone score landscape.
    const double x = c.target;
    return CandidateOutcome{1e6 * std::sin(x / 17.0) + 2e6, 100, x > 95 ? 0.05 : 0.0};
  };
  auto res = curate_policy(p, tr, cands, opt, 0.01, sim);
  std::size_t oracle = 0;
  double best = -1;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const double s = candidate_score(sim(prepare_candidate(cands[i], res.pressure)), 0.01);
    EXPECT_DOUBLE_EQ(res.scores[i], s);
    if (s > best) {
      best = s;
      oracle = i;
    }
  }
  EXPECT_EQ(res.p_opt, oracle);
  EXPECT_EQ(res.policy.name, cands[oracle].name);
  EXPECT_EQ(res.policy.pd_ratio, res.r_opt);

  auto again = curate_policy(p, tr, cands, opt, 0.01, sim);
  EXPECT_EQ(again.p_opt, res.p_opt);
  EXPECT_EQ(again.scores, res.scores);
}

TEST(Curation, SingleCandidateIsChosen) {
  ServiceProfile p;
  PressureTestOptions opt;
  opt.gpu_budget = 256;
  opt.ratios = {{1, 1}};
  auto res = curate_policy(p, flat_trace(5, 3000, 350, 0), {proportional()}, opt, 0.01,
                           [](const PolicyConfig&) { return CandidateOutcome{0, 0, 1}; });
  EXPECT_EQ(res.p_opt, 0u);
}

TEST(Curation, AutoTargetUsesPressureRate) {
  PressureTestResult pr;
  pr.r_opt = {2, 7};
  pr.m_hat = 1000;
  pr.m_hat_prefill = 9000;
  auto c = proportional(0);
  c.auto_target = true;
  c.auto_target_fraction = 0.75;
  auto out = prepare_candidate(c, pr);
  EXPECT_DOUBLE_EQ(out.target, 750);
  EXPECT_EQ(out.pd_ratio, (PdRatio{2, 7}));
  c.metric = Metric::kPrefillTps;
  EXPECT_DOUBLE_EQ(prepare_candidate(c, pr).target, 6750);
}

TEST(Curation, PropagatesNoFeasibleRatio) {
  ServiceProfile p;
  PressureTestOptions opt;
  opt.gpu_budget = 16;
  opt.ratios = {{1, 1}};
  EXPECT_THROW(curate_policy(p, flat_trace(100, 3000, 350, 0), {proportional()}, opt, 0.01,
                             [](const PolicyConfig&) { return CandidateOutcome{}; }),
               Error);
}

}  // namespace
}  // namespace hetscale::policy
