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
#include <array>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "hetscale/error.h"
#include "text_fields.h"

namespace hetscale::policy {

namespace {

constexpr double kRoundingSlack = 1e-9;
constexpr int kMinutesPerDay = 24 * 60;

struct MetricInfo {
  Metric metric;
  const char* name;
};

constexpr std::array<MetricInfo, 8> kMetrics = {{
    {Metric::kPrefillTps, "prefill_tps"},
    {Metric::kDecodeTps, "decode_tps"},
    {Metric::kPrefillGpuUtil, "prefill_gpu_util"},
    {Metric::kDecodeGpuUtil, "decode_gpu_util"},
    {Metric::kPrefillSmAct, "prefill_sm_act"},
    {Metric::kDecodeSmAct, "decode_sm_act"},
    {Metric::kTtft, "ttft"},
    {Metric::kTbt, "tbt"},
}};

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); }

int ceil_count(double x) { return static_cast<int>(std::ceil(x - kRoundingSlack)); }
int floor_count(double x) { return static_cast<int>(std::floor(x + kRoundingSlack)); }

ScalingDecision no_change(const ServiceCounts& current, long now) {
  ScalingDecision d;
  d.tick = now;
  d.current = current;
  d.target = current;
  return d;
}

// Turns a single-role controller result into a coordinated decision.
ScalingDecision coordinate(const PolicyConfig& cfg, Action action, const ServiceCounts& current, int anchor_target,
                           double expected, double cause_value, long now) {
  ScalingDecision d = no_change(current, now);
  const Role anchor = anchor_role(cfg.metric);
  d.anchor = anchor;
  d.expected_instances = expected;
  d.cause = metric_name(cfg.metric);
  d.cause_value = cause_value;
  if (action == Action::kNoChange) return d;
  d.target = apply_pd_ratio(std::max(anchor_target, 0), anchor, cfg.pd_ratio, cfg.bounds);
  d.action = d.target == current ? Action::kNoChange : action;
  if (d.action == Action::kNoChange) d.target = current;
  return d;
}

int parse_clock(std::string_view text, bool allow_24) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) invalid(fmt::format("bad time '{}'", text));
  const std::string hh(text.substr(0, colon)), mm(text.substr(colon + 1));
  int h = 0, m = 0;
  try {
    h = static_cast<int>(text::parse_integer(hh, 0, "hour"));
    m = static_cast<int>(text::parse_integer(mm, 0, "minute"));
  } catch (const Error&) {
    invalid(fmt::format("bad time '{}'", text));
  }
  if (h < 0 || m < 0 || m >= 60 || h > 24 || (h == 24 && (m != 0 || !allow_24))) {
    invalid(fmt::format("time '{}' out of range", text));
  }
  return h * 60 + m;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

const char* metric_name(Metric metric) {
  for (const auto& m : kMetrics) {
    if (m.metric == metric) return m.name;
  }
  return "?";
}

std::optional<Metric> parse_metric(std::string_view name) {
  for (const auto& m : kMetrics) {
    if (name == m.name) return m.metric;
  }
  return std::nullopt;
}

Role anchor_role(Metric metric) {
  switch (metric) {
    case Metric::kPrefillTps:
    case Metric::kPrefillGpuUtil:
    case Metric::kPrefillSmAct:
    case Metric::kTtft:
      return Role::kPrefill;
    default:
      return Role::kDecode;
  }
}

bool is_throughput(Metric metric) { return metric == Metric::kPrefillTps || metric == Metric::kDecodeTps; }

bool is_latency(Metric metric) { return metric == Metric::kTtft || metric == Metric::kTbt; }

double metric_value(const servicesim::MetricsSample& s, Metric metric) {
  switch (metric) {
    case Metric::kPrefillTps: return s.cache_missed_prefill_tps;
    case Metric::kDecodeTps: return s.decode_tps;
    case Metric::kPrefillGpuUtil: return s.prefill_gpu_util;
    case Metric::kDecodeGpuUtil: return s.decode_gpu_util;
    case Metric::kPrefillSmAct: return s.prefill_sm_act;
    case Metric::kDecodeSmAct: return s.decode_sm_act;
    case Metric::kTtft: return s.ttft;
    case Metric::kTbt: return s.tbt;
  }
  return 0;
}

PdRatio parse_pd_ratio(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) invalid(fmt::format("P/D ratio '{}' must look like P:D", text));
  PdRatio r;
  try {
    r.prefill = static_cast<int>(text::parse_integer(std::string(trim(text.substr(0, colon))), 0, "pd_ratio"));
    r.decode = static_cast<int>(text::parse_integer(std::string(trim(text.substr(colon + 1))), 0, "pd_ratio"));
  } catch (const Error&) {
    invalid(fmt::format("P/D ratio '{}' must look like P:D", text));
  }
  if (r.prefill < 1 || r.decode < 1) invalid(fmt::format("P/D ratio '{}' must be positive", text));
  return r;
}

std::string format_pd_ratio(const PdRatio& ratio) { return fmt::format("{}:{}", ratio.prefill, ratio.decode); }

ServiceCounts apply_pd_ratio(int anchor, Role anchor_role, const PdRatio& ratio, const InstanceBounds& bounds) {
  const bool decode_anchor = anchor_role == Role::kDecode;
  const int lo = decode_anchor ? bounds.min_decode : bounds.min_prefill;
  const int hi = decode_anchor ? bounds.max_decode : bounds.max_prefill;
  const long long a = std::clamp(anchor, lo, hi);
  const long long num = decode_anchor ? ratio.prefill : ratio.decode;
  const long long den = decode_anchor ? ratio.decode : ratio.prefill;
  const long long other = (a * num + den - 1) / den;

  ServiceCounts out;
  if (decode_anchor) {
    out.decode = static_cast<int>(a);
    out.prefill = static_cast<int>(std::clamp<long long>(other, bounds.min_prefill, bounds.max_prefill));
  } else {
    out.prefill = static_cast<int>(a);
    out.decode = static_cast<int>(std::clamp<long long>(other, bounds.min_decode, bounds.max_decode));
  }
  return out;
}

ServiceCounts apply_pd_ratio(int decode_anchor, const PdRatio& ratio, const InstanceBounds& bounds) {
  return apply_pd_ratio(decode_anchor, Role::kDecode, ratio, bounds);
}

void validate_schedule(const PeriodicSchedule& schedule) {
  std::array<int, kMinutesPerDay> cover{};
  for (const auto& iv : schedule.intervals) {
    if (iv.start_minute < 0 || iv.start_minute >= kMinutesPerDay || iv.end_minute < 0 ||
        iv.end_minute > kMinutesPerDay || iv.start_minute == iv.end_minute) {
      invalid(fmt::format("schedule window [{}, {}) is malformed", iv.start_minute, iv.end_minute));
    }
    if (iv.counts.prefill < 0 || iv.counts.decode < 0) invalid("schedule counts must be non-negative");
    auto mark = [&](int from, int to) {
      for (int m = from; m < to; ++m) {
        if (cover[m]++ > 0) invalid(fmt::format("schedule windows overlap at minute {}", m));
      }
    };
    if (iv.end_minute > iv.start_minute) {
      mark(iv.start_minute, iv.end_minute);
    } else {
      mark(iv.start_minute, kMinutesPerDay);
      mark(0, iv.end_minute);
    }
  }
  for (int m = 0; m < kMinutesPerDay; ++m) {
    if (cover[m] == 0) {
      throw Error(ErrorCode::kGapInSchedule, fmt::format("schedule has no window covering {:02}:{:02}", m / 60, m % 60));
    }
  }
}

PeriodicSchedule parse_schedule(std::string_view text) {
  PeriodicSchedule schedule;
  while (!text.empty()) {
    auto semi = text.find(';');
    std::string_view item = trim(text.substr(0, semi));
    text = semi == std::string_view::npos ? std::string_view{} : text.substr(semi + 1);
    if (item.empty()) continue;
    auto dash = item.find('-');
    auto eq = item.find('=');
    auto slash = item.find('/');
    if (dash == std::string_view::npos || eq == std::string_view::npos || slash == std::string_view::npos ||
        !(dash < eq && eq < slash)) {
      invalid(fmt::format("schedule entry '{}' must look like HH:MM-HH:MM=P/D", item));
    }
    ScheduleInterval iv;
    iv.start_minute = parse_clock(trim(item.substr(0, dash)), false);
    iv.end_minute = parse_clock(trim(item.substr(dash + 1, eq - dash - 1)), true);
    try {
      iv.counts.prefill = static_cast<int>(text::parse_integer(std::string(trim(item.substr(eq + 1, slash - eq - 1))), 0, "prefill"));
      iv.counts.decode = static_cast<int>(text::parse_integer(std::string(trim(item.substr(slash + 1))), 0, "decode"));
    } catch (const Error&) {
      invalid(fmt::format("schedule entry '{}' has bad counts", item));
    }
    schedule.intervals.push_back(iv);
  }
  validate_schedule(schedule);
  return schedule;
}

const char* policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kProportional: return "proportional";
    case PolicyKind::kFeedback: return "feedback";
    case PolicyKind::kPeriodic: return "periodic";
    case PolicyKind::kStatic: return "static";
  }
  return "?";
}

std::optional<PolicyKind> parse_policy_kind(std::string_view name) {
  for (PolicyKind k : {PolicyKind::kProportional, PolicyKind::kFeedback, PolicyKind::kPeriodic, PolicyKind::kStatic}) {
    if (name == policy_kind_name(k)) return k;
  }
  return std::nullopt;
}

void validate_policy(const PolicyConfig& cfg) {
  if (!(cfg.theta_out > 0) || !(cfg.theta_in > 0) || !(cfg.theta_in < 1)) {
    invalid("need theta_out > 0 and 0 < theta_in < 1");
  }
  if (cfg.cool_out < 0 || cfg.cool_in < 0) invalid("cooling periods must be non-negative");
  if (!(cfg.alpha_out > cfg.beta_out && cfg.beta_out > 1 && 1 > cfg.gamma_in && cfg.gamma_in > 0)) {
    invalid("need alpha_out > beta_out > 1 > gamma_in > 0");
  }
  if (!(cfg.severe_step > cfg.moderate_step && cfg.moderate_step > 1 && 1 > cfg.shed_step && cfg.shed_step > 0)) {
    invalid("need severe_step > moderate_step > 1 > shed_step > 0");
  }
  if (cfg.pd_ratio.prefill < 1 || cfg.pd_ratio.decode < 1) invalid("pd_ratio must be positive");
  const auto& b = cfg.bounds;
  if (b.min_prefill < 1 || b.min_decode < 1 || b.max_prefill < b.min_prefill || b.max_decode < b.min_decode) {
    invalid("instance bounds need 1 <= min <= max for both roles");
  }
  if (!(cfg.dampening > 0 && cfg.dampening <= 1)) invalid("dampening must be in (0, 1]");
  if (cfg.smoothing_window < 1) invalid("smoothing_window must be at least 1");
  if (!(cfg.auto_target_fraction > 0)) invalid("auto_target_fraction must be positive");
  switch (cfg.kind) {
    case PolicyKind::kProportional:
      if (is_latency(cfg.metric)) invalid("latency metrics need the feedback policy");
      if (!cfg.auto_target && !(cfg.target > 0)) invalid("proportional policy needs a positive target");
      if (cfg.auto_target && !is_throughput(cfg.metric)) invalid("auto_target applies to throughput metrics only");
      break;
    case PolicyKind::kFeedback:
      if (!is_latency(cfg.metric)) invalid("feedback policy needs a latency metric");
      if (!(cfg.target > 0)) invalid("feedback policy needs a positive latency target");
      break;
    case PolicyKind::kPeriodic:
      validate_schedule(cfg.schedule);
      break;
    case PolicyKind::kStatic:
      break;
  }
}

const char* action_name(Action action) {
  switch (action) {
    case Action::kNoChange: return "NoChange";
    case Action::kScaleOut: return "ScaleOut";
    case Action::kScaleIn: return "ScaleIn";
  }
  return "?";
}

ScalingDecision proportional_decide(const PolicyConfig& cfg, const ServiceCounts& current, double observed,
                                    long last_action_tick, long now) {
  if (!(cfg.target > 0)) invalid("proportional policy target must be positive");
  const int instances = current.of(anchor_role(cfg.metric));
  if (instances < 1) throw Error(ErrorCode::kInvalidInput, "proportional control needs at least one instance");

  const double expected = instances * observed / cfg.target;
  const double ratio = expected / instances;
  const long cooling = now - last_action_tick;

  Action action = Action::kNoChange;
  if (ratio > 1 + cfg.theta_out && cooling >= cfg.cool_out) {
    action = Action::kScaleOut;
  } else if (ratio < 1 - cfg.theta_in && cooling >= cfg.cool_in) {
    action = Action::kScaleIn;
  }
  return coordinate(cfg, action, current, ceil_count(expected), expected, observed, now);
}

ScalingDecision feedback_decide(const PolicyConfig& cfg, const ServiceCounts& current, double latency,
                                long last_action_tick, long now) {
  if (!(cfg.target > 0)) invalid("feedback policy latency target must be positive");
  if (!(cfg.alpha_out > cfg.beta_out && cfg.beta_out > 1 && 1 > cfg.gamma_in && cfg.gamma_in > 0)) {
    invalid("need alpha_out > beta_out > 1 > gamma_in > 0");
  }
  const int instances = current.of(anchor_role(cfg.metric));

  double step = 1.0;
  Action action = Action::kNoChange;
  if (latency >= cfg.target * cfg.alpha_out) {
    step = cfg.severe_step;
    action = Action::kScaleOut;
  } else if (latency >= cfg.target * cfg.beta_out) {
    step = cfg.moderate_step;
    action = Action::kScaleOut;
  } else if (latency <= cfg.target * cfg.gamma_in) {
    step = cfg.shed_step;
    action = Action::kScaleIn;
  }

  const double expected = instances * step;
  const long cooling = now - last_action_tick;
  if (action == Action::kScaleOut && cooling < cfg.cool_out) action = Action::kNoChange;
  if (action == Action::kScaleIn && cooling < cfg.cool_in) action = Action::kNoChange;

  const int anchor_target = action == Action::kScaleIn ? floor_count(expected) : ceil_count(expected);
  return coordinate(cfg, action, current, anchor_target, expected, latency, now);
}

ScalingDecision periodic_decide(const PeriodicSchedule& schedule, const ServiceCounts& current, int minute_of_day,
                                long now) {
  const int minute = ((minute_of_day % kMinutesPerDay) + kMinutesPerDay) % kMinutesPerDay;
  for (const auto& iv : schedule.intervals) {
    const bool inside = iv.end_minute > iv.start_minute
                            ? minute >= iv.start_minute && minute < iv.end_minute
                            : minute >= iv.start_minute || minute < iv.end_minute;
    if (!inside) continue;
    ScalingDecision d = no_change(current, now);
    d.cause = "schedule";
    d.cause_value = minute;
    if (iv.counts == current) return d;
    d.target = iv.counts;
    const bool grows = iv.counts.prefill > current.prefill || iv.counts.decode > current.decode;
    d.action = grows ? Action::kScaleOut : Action::kScaleIn;
    return d;
  }
  throw Error(ErrorCode::kGapInSchedule,
              fmt::format("no schedule window covers {:02}:{:02}", minute / 60, minute % 60));
}

ScalingDecision anti_flap_filter(const ScalingDecision& decision, const std::vector<ActionRecord>& history,
                                 const PolicyConfig& cfg) {
  if (decision.action == Action::kNoChange) return decision;

  const Action opposite = decision.action == Action::kScaleOut ? Action::kScaleIn : Action::kScaleOut;
  const long window = decision.action == Action::kScaleOut ? cfg.cool_out : cfg.cool_in;
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (it->action != opposite) continue;
    if (decision.tick - it->tick < window) {
      ScalingDecision held = decision;
      held.action = Action::kNoChange;
      held.target = decision.current;
      return held;
    }
    break;
  }

  if (cfg.dampening >= 1.0) return decision;

  auto damp = [&](int from, int to) {
    const int delta = to - from;
    if (delta == 0) return from;
    const int size = std::max(1, ceil_count(std::abs(delta) * cfg.dampening));
    return from + (delta > 0 ? size : -size);
  };

  ScalingDecision out = decision;
  if (decision.anchor) {
    const Role a = *decision.anchor;
    out.target = apply_pd_ratio(damp(decision.current.of(a), decision.target.of(a)), a, cfg.pd_ratio, cfg.bounds);
  } else {
    out.target.prefill = damp(decision.current.prefill, decision.target.prefill);
    out.target.decode = damp(decision.current.decode, decision.target.decode);
  }
  if (out.target == out.current) out.action = Action::kNoChange;
  return out;
}

void MetricSmoother::push(const servicesim::MetricsSample& sample) {
  samples_.push_back(sample);
  while (static_cast<int>(samples_.size()) > window_) samples_.pop_front();
}

servicesim::MetricsSample MetricSmoother::mean() const {
  servicesim::MetricsSample m;
  if (samples_.empty()) return m;
  for (const auto& s : samples_) {
    m.prefill_tps += s.prefill_tps;
    m.decode_tps += s.decode_tps;
    m.cache_missed_prefill_tps += s.cache_missed_prefill_tps;
    m.prefill_gpu_util += s.prefill_gpu_util;
    m.decode_gpu_util += s.decode_gpu_util;
    m.prefill_sm_act += s.prefill_sm_act;
    m.decode_sm_act += s.decode_sm_act;
    m.ttft += s.ttft;
    m.tbt += s.tbt;
  }
  const double n = static_cast<double>(samples_.size());
  m.t = samples_.back().t;
  m.prefill_tps /= n;
  m.decode_tps /= n;
  m.cache_missed_prefill_tps /= n;
  m.prefill_gpu_util /= n;
  m.decode_gpu_util /= n;
  m.prefill_sm_act /= n;
  m.decode_sm_act /= n;
  m.ttft /= n;
  m.tbt /= n;
  return m;
}

PolicyEngine::PolicyEngine(PolicyConfig cfg) : cfg_(std::move(cfg)), smoother_(cfg_.smoothing_window) {
  validate_policy(cfg_);
}

ScalingDecision PolicyEngine::step(const servicesim::MetricsSample& sample, const ServiceCounts& current, long now,
                                   int minute_of_day) {
  smoother_.push(sample);
  const auto smoothed = smoother_.mean();

  ScalingDecision d = no_change(current, now);
  switch (cfg_.kind) {
    case PolicyKind::kProportional: {
      double observed = metric_value(smoothed, cfg_.metric);
      if (is_throughput(cfg_.metric)) observed /= std::max(1, current.of(anchor_role(cfg_.metric)));
      d = proportional_decide(cfg_, current, observed, last_action_tick_, now);
      break;
    }
    case PolicyKind::kFeedback:
      d = feedback_decide(cfg_, current, metric_value(smoothed, cfg_.metric), last_action_tick_, now);
      break;
    case PolicyKind::kPeriodic:
      d = periodic_decide(cfg_.schedule, current, minute_of_day, now);
      break;
    case PolicyKind::kStatic:
      break;
  }
  d.tick = now;
  d = anti_flap_filter(d, history_, cfg_);
  if (d.action != Action::kNoChange) {
    history_.push_back({now, d.action});
    last_action_tick_ = now;
  }
  return d;
}

const char* slo_breach_name(SloBreach breach) {
  switch (breach) {
    case SloBreach::kNone: return "none";
    case SloBreach::kTtft: return "ttft";
    case SloBreach::kTbt: return "tbt";
    case SloBreach::kBoth: return "ttft+tbt";
  }
  return "?";
}

ServiceCounts counts_for_budget(const PdRatio& ratio, const servicesim::ServiceProfile& profile, int gpu_budget) {
  const int gp = profile.gpus_per_prefill_inst;
  const int gd = profile.gpus_per_decode_inst;
  for (int d = gpu_budget / gd; d >= 1; --d) {
    const int p = std::max(1, static_cast<int>(std::lround(d * ratio.value())));
    if (static_cast<long long>(p) * gp + static_cast<long long>(d) * gd <= gpu_budget) return {p, d};
  }
  return {0, 0};
}

namespace {

SloBreach classify(const servicesim::MetricsSample& m, const servicesim::ServiceProfile& profile) {
  const bool ttft = m.ttft > profile.slo_ttft;
  const bool tbt = m.tbt > profile.slo_tbt;
  if (ttft && tbt) return SloBreach::kBoth;
  if (ttft) return SloBreach::kTtft;
  if (tbt) return SloBreach::kTbt;
  return SloBreach::kNone;
}

workload::TokenDemand demand_at_rate(const workload::TracePoint& shape, double rate) {
  workload::TracePoint p = shape;
  p.arrival_rate = rate;
  return workload::demand_of(p);
}

}  // namespace

PressureTestResult pressure_test(const servicesim::ServiceProfile& profile, const workload::WorkloadTrace& trace,
                                 const PressureTestOptions& options) {
  servicesim::validate_profile(profile);
  if (options.ratios.empty()) invalid("pressure test needs at least one candidate ratio");
  if (options.gpu_budget < 1) invalid("pressure test needs a positive GPU budget");
  if (trace.points.empty()) throw Error(ErrorCode::kInvalidInput, "pressure test needs a non-empty workload");

  const auto peak = *std::max_element(trace.points.begin(), trace.points.end(),
                                      [](const auto& a, const auto& b) { return a.arrival_rate < b.arrival_rate; });

  PressureTestResult result;
  for (const auto& ratio : options.ratios) {
    if (ratio.prefill < 1 || ratio.decode < 1) invalid("candidate ratios must be positive");
    RatioPoint pt;
    pt.ratio = ratio;
    pt.counts = counts_for_budget(ratio, profile, options.gpu_budget);
    const double cap_p = pt.counts.prefill * profile.prefill_cap_per_inst;
    const double cap_d = pt.counts.decode * profile.decode_cap_per_inst;

    auto metrics_at = [&](double rate) {
      return servicesim::step_metrics(profile, demand_at_rate(peak, rate), cap_p, cap_d, options.placement_penalty);
    };
    auto holds_slo = [&](double rate) { return classify(metrics_at(rate), profile) == SloBreach::kNone; };

    pt.breach_at_peak = classify(metrics_at(peak.arrival_rate), profile);

    // Past the rate where both pools saturate, served TPS no longer grows.
    const auto unit = demand_at_rate(peak, 1.0);
    double saturation = cap_d / unit.decode_token_rate;
    if (unit.prefill_token_rate > 0) saturation = std::max(saturation, cap_p / unit.prefill_token_rate);

    double best_rate = 0;
    if (pt.counts.decode > 0 && holds_slo(0.0)) {
      if (holds_slo(saturation)) {
        best_rate = saturation;
      } else {
        double lo = 0, hi = saturation;
        for (int i = 0; i < options.bisection_steps && hi - lo > 0; ++i) {
          const double mid = 0.5 * (lo + hi);
          (holds_slo(mid) ? lo : hi) = mid;
        }
        best_rate = lo;
      }
    }
    const auto at_best = metrics_at(best_rate);
    pt.max_arrival_rate = best_rate;
    pt.max_decode_tps = at_best.decode_tps;
    pt.max_prefill_tps = at_best.cache_missed_prefill_tps;
    result.points.push_back(pt);
  }

  bool found = false;
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const auto& pt = result.points[i];
    if (pt.breach_at_peak != SloBreach::kNone) continue;
    if (!found || pt.max_decode_tps > result.points[result.best].max_decode_tps) {
      result.best = i;
      found = true;
    }
  }
  if (!found) {
    throw Error(ErrorCode::kNoFeasibleRatio,
                fmt::format("no candidate P/D ratio holds the SLOs at peak ({} req/s) within {} GPUs",
                            peak.arrival_rate, options.gpu_budget));
  }
  const auto& best = result.points[result.best];
  result.r_opt = best.ratio;
  result.m_hat = best.max_decode_tps / best.counts.decode;
  result.m_hat_prefill = best.max_prefill_tps / best.counts.prefill;
  return result;
}

double candidate_score(const CandidateOutcome& outcome, double slo_violation_budget) {
  if (outcome.slo_violation_fraction > slo_violation_budget || !(outcome.gpu_hours > 0)) return 0.0;
  return outcome.served_tokens / outcome.gpu_hours;
}

PolicyConfig prepare_candidate(const PolicyConfig& candidate, const PressureTestResult& pressure) {
  PolicyConfig cfg = candidate;
  cfg.pd_ratio = pressure.r_opt;
  if (cfg.auto_target && cfg.kind == PolicyKind::kProportional && is_throughput(cfg.metric)) {
    const double per_instance = cfg.metric == Metric::kDecodeTps ? pressure.m_hat : pressure.m_hat_prefill;
    cfg.target = cfg.auto_target_fraction * per_instance;
  }
  return cfg;
}

CurationResult curate_policy(const servicesim::ServiceProfile& profile, const workload::WorkloadTrace& trace,
                             const std::vector<PolicyConfig>& candidates, const PressureTestOptions& options,
                             double slo_violation_budget, const CandidateSimulator& simulate) {
  if (candidates.empty()) invalid("curation needs at least one candidate policy");
  CurationResult result;
  result.pressure = pressure_test(profile, trace, options);
  result.r_opt = result.pressure.r_opt;
  result.m_hat = result.pressure.m_hat;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto prepared = prepare_candidate(candidates[i], result.pressure);
    const auto outcome = simulate(prepared);
    const double score = candidate_score(outcome, slo_violation_budget);
    result.outcomes.push_back(outcome);
    result.scores.push_back(score);
    if (i == 0 || score > result.scores[result.p_opt]) {
      result.p_opt = i;
      result.policy = prepared;
    }
  }
  return result;
}

}  // namespace hetscale::policy
