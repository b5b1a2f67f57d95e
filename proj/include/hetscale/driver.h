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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hetscale/policy.h"
#include "hetscale/scheduler.h"
#include "hetscale/servicesim.h"
#include "hetscale/topology.h"
#include "hetscale/workload.h"

namespace hetscale::driver {

struct ServiceConfig {
  std::string id;
  int priority = 0;
  servicesim::ServiceProfile profile;
  scheduler::Affinity affinity;

  // Counts placed Ready and registered at t = 0. Zero means peak
  // provisioning via static_provision.
  int initial_prefill = 0;
  int initial_decode = 0;

  double gate_tolerance = 0.0;  // scheduler::kGateDisabled turns the gate off
  long soft_drain_ticks = 5;    // 0 terminates drained instances next tick
  int slo_window = 3;           // trailing ticks the soft-drain monitor averages

  std::string policy_name;
  policy::PolicyConfig policy;

  std::optional<workload::DiurnalParams> generator;  // set when no trace file
  std::string trace_file;
  workload::WorkloadTrace trace;
};

struct CurationConfig {
  policy::PressureTestOptions pressure;
  double slo_violation_budget = 0.01;
  std::vector<std::string> candidates;  // policy section names
};

struct RunConfig {
  std::filesystem::path source_dir;
  std::string cluster_file;
  topology::ClusterSpec cluster;

  long ticks = 0;  // 0: longest trace
  double tick_seconds = 60.0;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int start_minute = 0;  // clock minute of tick 0, for periodic schedules
  servicesim::StartupTicks startup;

  std::vector<ServiceConfig> services;
  std::map<std::string, policy::PolicyConfig> policies;
  CurationConfig curation;
};

// Parses the INI-style run config. Relative paths resolve against
// `source_dir`; `seed_override` replaces [run] seed. Throws ConfigError.
RunConfig parse_config(std::istream& in, const std::filesystem::path& source_dir,
                       std::optional<std::uint64_t> seed_override = std::nullopt);

// Reads the file and applies HETSCALE_SEED when set.
RunConfig load_config(const std::filesystem::path& path);

// Regenerates the traces of services that use the generator, from the
// run seed (service i uses seed + i).
void regenerate_traces(RunConfig& config);

// Instance counts that serve the trace peak with the given per-instance
// decode target (or the SLO-boundary rate when the target is unset).
policy::ServiceCounts static_provision(const ServiceConfig& service, const topology::ClusterSpec& cluster);

struct TickRow {
  servicesim::MetricsSample metrics;
  // Instances holding GPUs after the tick's scheduling cycle.
  int prefill_count = 0;
  int decode_count = 0;
  int active_prefill = 0;  // Starting or Ready
  int active_decode = 0;
  int ready_prefill = 0;  // at metrics time, after the discovery gate
  int ready_decode = 0;
  int registered_prefill = 0;
  int registered_decode = 0;
  int gpus_held = 0;
  double demand_decode_tps = 0;
  double demand_prefill_tps = 0;  // cache-missed
  double placement_penalty = 1.0;
  bool slo_violated = false;
};

struct Event {
  long t = 0;
  std::string service_id;
  std::string kind;  // decision, allocation, reinstate, terminate
  std::string action;
  int prefill_from = 0;
  int decode_from = 0;
  int prefill_to = 0;
  int decode_to = 0;
  std::string group_id;
  std::string subgroup_id;
  std::string tier;
  std::string status;
  std::string cause;
  double cause_value = 0;
};

struct ServiceSummary {
  std::string service_id;
  std::string policy_name;
  double gpu_hours = 0;
  double mean_prefill_util = 0;
  double mean_decode_util = 0;
  double slo_violation_fraction = 0;
  int scaling_actions = 0;
  int reversals = 0;
  double served_decode_tokens = 0;
  int min_decode_count = 0;
  int max_decode_count = 0;
  double mean_decode_count = 0;
};

struct ServiceReport {
  std::string service_id;
  int gpus_per_prefill = 0;
  int gpus_per_decode = 0;
  std::vector<TickRow> rows;
  ServiceSummary summary;
};

struct SimReport {
  double tick_seconds = 60.0;
  std::vector<ServiceReport> services;
  std::vector<Event> events;

  const ServiceReport& service(std::string_view id) const;
};

// Closed loop, per tick: demand, lifecycle, discovery gate, metrics, soft
// drain, policy, scheduling on a rebuilt tree, record.
SimReport run_simulation(const RunConfig& config);

// Number of adjacent opposite-direction pairs in a sequence of actions.
int count_reversals(const std::vector<policy::Action>& actions);

struct ComparisonRow {
  std::string policy_name;
  ServiceSummary summary;
};

// Runs `service_id` under each named policy with identical initial state.
// Throws InvalidInput for fewer than two policies.
std::vector<ComparisonRow> compare_policies(const RunConfig& config, const std::vector<std::string>& policy_names,
                                            const std::string& service_id);

// Pressure test plus end-to-end scoring of the configured candidates.
policy::CurationResult curate(const RunConfig& config, const std::string& service_id);

policy::CandidateOutcome outcome_of(const ServiceSummary& summary);

// timeline.csv, summary.csv and events.csv. A multi-service report places
// each service's timeline under <dir>/<service>/. Throws IoError.
void emit_report(const SimReport& report, const std::filesystem::path& dir);

void write_timeline(std::ostream& out, const ServiceReport& report);
void write_summary(std::ostream& out, const SimReport& report);
void write_events(std::ostream& out, const std::vector<Event>& events);
void write_comparison(std::ostream& out, const std::vector<ComparisonRow>& rows);

inline constexpr const char* kTimelineHeader =
    "t,prefill_tps,decode_tps,cache_missed_prefill_tps,prefill_gpu_util,decode_gpu_util,prefill_sm_act,"
    "decode_sm_act,ttft,tbt,prefill_count,decode_count";

}  // namespace hetscale::driver
