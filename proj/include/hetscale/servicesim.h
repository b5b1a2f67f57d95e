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

#include <string>
#include <vector>

#include "hetscale/topology.h"
#include "hetscale/workload.h"

// Phenomenological model of one P/D-disaggregated service. Everything here is
// a pure function of its arguments.
namespace hetscale::servicesim {

enum class Role { kPrefill, kDecode };

const char* role_name(Role role);

struct ServiceProfile {
  double prefill_cap_per_inst = 30000.0;  // cache-missed prefill tokens/s, reference GPU
  double decode_cap_per_inst = 2500.0;    // decode tokens/s, reference GPU
  double ttft_base = 0.3;                 // s
  double tbt_base = 0.02;                 // s
  double slo_ttft = 1.0;                  // s
  double slo_tbt = 0.04;                  // s
  double decode_util_floor = 0.75;
  int gpus_per_prefill_inst = 8;
  int gpus_per_decode_inst = 8;
  double reference_compute_score = 1.0;
  double reference_mem_bw_score = 1.0;
  double rho_max = 0.99;
};

// Throws InvalidConfig.
void validate_profile(const ServiceProfile& profile);

int gpus_per_instance(const ServiceProfile& profile, Role role);

enum class InstanceState { kStarting, kReady, kSoftDrained, kTerminated };

const char* state_name(InstanceState state);

struct Instance {
  long id = 0;
  std::string service_id;
  std::string group_id;
  Role role = Role::kPrefill;
  topology::GpuType gpu;
  std::string node_id;
  int gpus = 0;  // held on node_id until Terminated
  std::string s2;
  InstanceState state = InstanceState::kStarting;
  bool registered = false;
  long start_tick = 0;
  long drain_start_tick = -1;
};

// Only Ready and registered instances carry load.
inline bool serves_load(const Instance& inst) { return inst.state == InstanceState::kReady && inst.registered; }

// Starting or Ready: what the control plane counts as provisioned.
inline bool is_active(const Instance& inst) {
  return inst.state == InstanceState::kStarting || inst.state == InstanceState::kReady;
}

// GPUs stay held until an instance terminates, including while soft-drained.
inline bool holds_gpus(const Instance& inst) { return inst.state != InstanceState::kTerminated; }

// Sum of per-instance capacity over serving instances of `role`, scaled by
// the GPU's compute (prefill) or memory-bandwidth (decode) score relative to
// the reference GPU.
double effective_capacity(const std::vector<Instance>& instances, Role role, const ServiceProfile& profile);

struct MetricsSample {
  long t = 0;
  double prefill_tps = 0;               // raw input tokens/s served, cached tokens included
  double decode_tps = 0;
  double cache_missed_prefill_tps = 0;
  double prefill_gpu_util = 0;
  double decode_gpu_util = 0;
  double prefill_sm_act = 0;
  double decode_sm_act = 0;
  double ttft = 0;  // s
  double tbt = 0;   // s
};

// Load factor demand/capacity clipped to [0, rho_max]. With no capacity any
// positive demand saturates.
double load_factor(double demand, double capacity, double rho_max);

// Per-tick observables. Prefill utilization is linear in load, decode
// utilization sits on a floor from KV-cache memory traffic, and latency
// follows base / (1 - rho).
MetricsSample step_metrics(const ServiceProfile& profile, const workload::TokenDemand& demand,
                           double prefill_capacity, double decode_capacity, double placement_penalty, long t = 0);

MetricsSample step_metrics(const ServiceProfile& profile, const workload::TokenDemand& demand,
                           const std::vector<Instance>& instances, double placement_penalty, long t = 0);

// Cross-S2 KV transfer sees ~20% less bandwidth, so transfer time scales by
// 1 / 0.8.
inline constexpr double kCrossS2Penalty = 1.0 / (1.0 - 0.2);

// S2 switch of each prefill and decode instance of one Deployment Group.
struct GroupPlacement {
  std::vector<std::string> prefill_s2;
  std::vector<std::string> decode_s2;
};

// Mean over every prefill-decode pair inside each group: 1.0 for a same-S2
// pair, kCrossS2Penalty for a cross-S2 pair. 1.0 when there are no pairs.
double kv_transfer_penalty(const std::vector<GroupPlacement>& groups);
double kv_transfer_penalty(const GroupPlacement& group);

struct StartupTicks {
  long prefill = 3;
  long decode = 3;
};

// Starting -> Ready once the role's startup delay has elapsed. Registration
// is left to the discovery gate.
void advance_lifecycle(std::vector<Instance>& instances, long t, const StartupTicks& startup);

}  // namespace hetscale::servicesim
