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

#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetscale/servicesim.h"
#include "hetscale/workload.h"

namespace hetscale::policy {

using servicesim::Role;

// The eight candidate scaling signals.
enum class Metric {
  kPrefillTps,  // cache-missed prefill TPS
  kDecodeTps,
  kPrefillGpuUtil,
  kDecodeGpuUtil,
  kPrefillSmAct,
  kDecodeSmAct,
  kTtft,
  kTbt,
};

const char* metric_name(Metric metric);
std::optional<Metric> parse_metric(std::string_view name);

// Which pool's instance count the metric is read against. TTFT is a prefill
// signal and TBT a decode signal.
Role anchor_role(Metric metric);

bool is_throughput(Metric metric);
bool is_latency(Metric metric);

double metric_value(const servicesim::MetricsSample& sample, Metric metric);

// Prefill:decode instance ratio, kept as integers so rounding is exact.
struct PdRatio {
  int prefill = 1;
  int decode = 1;

  double value() const { return static_cast<double>(prefill) / decode; }
  bool operator==(const PdRatio&) const = default;
};

// "P:D" with positive integers. Throws InvalidConfig.
PdRatio parse_pd_ratio(std::string_view text);
std::string format_pd_ratio(const PdRatio& ratio);

struct ServiceCounts {
  int prefill = 0;
  int decode = 0;

  int of(Role role) const { return role == Role::kPrefill ? prefill : decode; }
  bool operator==(const ServiceCounts&) const = default;
};

struct InstanceBounds {
  int min_prefill = 1;
  int max_prefill = 10000;
  int min_decode = 1;
  int max_decode = 10000;
};

// Anchor role count is kept (after clamping to its bounds) and the other
// role is rounded up from anchor x ratio, then clamped. With the decode role
// as anchor this is prefill = ceil(decode * P / D).
ServiceCounts apply_pd_ratio(int anchor, Role anchor_role, const PdRatio& ratio, const InstanceBounds& bounds);
ServiceCounts apply_pd_ratio(int decode_anchor, const PdRatio& ratio, const InstanceBounds& bounds = {});

// Static targets for a time-of-day window, [start, end) in minutes of the
// day. end may be 1440; a window with end <= start wraps past midnight.
struct ScheduleInterval {
  int start_minute = 0;
  int end_minute = 0;
  ServiceCounts counts;
};

struct PeriodicSchedule {
  std::vector<ScheduleInterval> intervals;
};

// Throws GapInSchedule when some minute is uncovered and InvalidConfig on
// overlaps or malformed windows.
void validate_schedule(const PeriodicSchedule& schedule);

// "HH:MM-HH:MM=P/D; HH:MM-HH:MM=P/D; ..." validated on load.
PeriodicSchedule parse_schedule(std::string_view text);

enum class PolicyKind { kProportional, kFeedback, kPeriodic, kStatic };

const char* policy_kind_name(PolicyKind kind);
std::optional<PolicyKind> parse_policy_kind(std::string_view name);

struct PolicyConfig {
  std::string name = "policy";
  PolicyKind kind = PolicyKind::kProportional;
  Metric metric = Metric::kDecodeTps;

  // Per-instance target for proportional control (tokens/s or a fraction),
  // target latency in seconds for feedback control.
  double target = 0;
  // When set, a throughput target is derived from the pressure test as
  // auto_target_fraction x the per-instance rate at the SLO boundary.
  bool auto_target = false;
  double auto_target_fraction = 0.8;

  double theta_out = 0.1;
  double theta_in = 0.1;
  long cool_out = 3;  // ticks
  long cool_in = 10;  // ticks

  double alpha_out = 1.5;  // severe latency breach
  double beta_out = 1.1;   // moderate latency breach
  double gamma_in = 0.6;   // latency low enough to shed capacity
  double severe_step = 1.2;
  double moderate_step = 1.1;
  double shed_step = 0.95;

  PdRatio pd_ratio;
  InstanceBounds bounds;
  double dampening = 1.0;    // fraction of each change applied, in (0, 1]
  int smoothing_window = 3;  // trailing-mean window, ticks

  PeriodicSchedule schedule;
};

// Throws InvalidConfig (zero target, threshold ordering, bad bounds, ...).
void validate_policy(const PolicyConfig& cfg);

enum class Action { kNoChange, kScaleOut, kScaleIn };

const char* action_name(Action action);

struct ScalingDecision {
  Action action = Action::kNoChange;
  long tick = 0;
  ServiceCounts current;
  ServiceCounts target;
  // Anchor role of a metric-driven decision; periodic decisions set both
  // roles directly and carry no anchor.
  std::optional<Role> anchor;
  double expected_instances = 0;  // unrounded controller output for the anchor
  std::string cause;              // metric name
  double cause_value = 0;
};

inline constexpr long kNeverScaled = std::numeric_limits<long>::min() / 4;

// Proportional control on a linear metric. `observed` is the per-instance
// metric (M_curr); the anchor role's current count is I_curr.
//   I_expected = I_curr * M_curr / M_target, R = I_expected / I_curr
//   ScaleOut iff R > 1 + theta_out and cooled for cool_out
//   ScaleIn  iff R < 1 - theta_in  and cooled for cool_in
// Scale-out rounds I_expected up; scale-in also rounds up so the kept
// capacity still covers the observed load.
ScalingDecision proportional_decide(const PolicyConfig& cfg, const ServiceCounts& current, double observed,
                                    long last_action_tick, long now);

// Multi-tier negative feedback on a latency metric:
//   L >= L_target * alpha_out  -> x severe_step  (out)
//   L >= L_target * beta_out   -> x moderate_step (out)
//   L <= L_target * gamma_in   -> x shed_step    (in)
// with the cooling gate matched to the direction of the change.
ScalingDecision feedback_decide(const PolicyConfig& cfg, const ServiceCounts& current, double latency,
                                long last_action_tick, long now);

// Targets of the window containing `minute_of_day`. Throws GapInSchedule.
ScalingDecision periodic_decide(const PeriodicSchedule& schedule, const ServiceCounts& current, int minute_of_day,
                                long now = 0);

struct ActionRecord {
  long tick = 0;
  Action action = Action::kNoChange;
};

// Drops an action that falls inside the cooling window of the most recent
// opposite-direction action, then scales the size of the change by the
// dampening factor (rounded away from zero, at least one instance).
ScalingDecision anti_flap_filter(const ScalingDecision& decision, const std::vector<ActionRecord>& history,
                                 const PolicyConfig& cfg);

// Trailing mean over the last `window` samples.
class MetricSmoother {
 public:
  explicit MetricSmoother(int window) : window_(window < 1 ? 1 : window) {}

  void push(const servicesim::MetricsSample& sample);
  bool empty() const { return samples_.empty(); }
  servicesim::MetricsSample mean() const;

 private:
  int window_;
  std::deque<servicesim::MetricsSample> samples_;
};

// Per-service controller state: smoothing, last-action clock and history.
// Single writer.
class PolicyEngine {
 public:
  explicit PolicyEngine(PolicyConfig cfg);

  const PolicyConfig& config() const { return cfg_; }
  const std::vector<ActionRecord>& history() const { return history_; }
  long last_action_tick() const { return last_action_tick_; }

  // Feeds one raw sample and returns the filtered decision for `now`.
  ScalingDecision step(const servicesim::MetricsSample& sample, const ServiceCounts& current, long now,
                       int minute_of_day);

 private:
  PolicyConfig cfg_;
  MetricSmoother smoother_;
  std::vector<ActionRecord> history_;
  long last_action_tick_ = kNeverScaled;
};

enum class SloBreach { kNone, kTtft, kTbt, kBoth };

const char* slo_breach_name(SloBreach breach);

struct RatioPoint {
  PdRatio ratio;
  ServiceCounts counts;
  double max_arrival_rate = 0;   // highest SLO-compliant request rate
  double max_decode_tps = 0;     // served decode TPS at that rate
  double max_prefill_tps = 0;    // served cache-missed prefill TPS at that rate
  SloBreach breach_at_peak = SloBreach::kNone;
};

struct PressureTestOptions {
  int gpu_budget = 128;
  std::vector<PdRatio> ratios;
  double placement_penalty = 1.0;
  int bisection_steps = 200;
};

struct PressureTestResult {
  std::vector<RatioPoint> points;
  std::size_t best = 0;
  PdRatio r_opt;
  double m_hat = 0;          // per-instance decode TPS at the chosen operating point
  double m_hat_prefill = 0;  // per-instance cache-missed prefill TPS there
};

// Largest instance split for `ratio` under the GPU budget: the most decode
// instances d such that round(d * ratio) prefill (at least 1) still fits.
ServiceCounts counts_for_budget(const PdRatio& ratio, const servicesim::ServiceProfile& profile, int gpu_budget);

// Sweeps the ratio grid at a fixed GPU budget. For each ratio it finds the
// highest request rate (with the peak tick's lengths and cache-hit rate)
// that keeps TTFT and TBT within SLO, by bisection over servicesim, and
// records which SLO the peak itself breaks. r_opt maximizes served TPS among
// ratios that hold the SLOs at peak. Throws NoFeasibleRatio.
PressureTestResult pressure_test(const servicesim::ServiceProfile& profile, const workload::WorkloadTrace& trace,
                                 const PressureTestOptions& options);

// What a candidate's end-to-end run produced.
struct CandidateOutcome {
  double served_tokens = 0;
  double gpu_hours = 0;
  double slo_violation_fraction = 0;
};

// Served tokens per GPU-hour, or 0 when the SLO-violation fraction exceeds
// the budget.
double candidate_score(const CandidateOutcome& outcome, double slo_violation_budget);

// The candidate as it is simulated: pressure-tested ratio, and a derived
// throughput target when auto_target is set.
PolicyConfig prepare_candidate(const PolicyConfig& candidate, const PressureTestResult& pressure);

struct CurationResult {
  std::size_t p_opt = 0;
  PolicyConfig policy;
  PdRatio r_opt;
  double m_hat = 0;
  std::vector<double> scores;
  std::vector<CandidateOutcome> outcomes;
  PressureTestResult pressure;
};

using CandidateSimulator = std::function<CandidateOutcome(const PolicyConfig&)>;

// Pressure test, simulate every prepared candidate, take the argmax score
// (first candidate wins ties). Propagates NoFeasibleRatio.
CurationResult curate_policy(const servicesim::ServiceProfile& profile, const workload::WorkloadTrace& trace,
                             const std::vector<PolicyConfig>& candidates, const PressureTestOptions& options,
                             double slo_violation_budget, const CandidateSimulator& simulate);

}  // namespace hetscale::policy
