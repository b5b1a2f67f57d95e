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

#include "hetscale/servicesim.h"

#include <algorithm>

#include <fmt/format.h>

#include "hetscale/error.h"

namespace hetscale::servicesim {

namespace {
constexpr double kLatencyEpsilon = 1e-6;
constexpr double kPrefillSmScale = 0.85;
constexpr double kDecodeSmFloorScale = 0.5;
}  // namespace

const char* role_name(Role role) { return role == Role::kPrefill ? "prefill" : "decode"; }

const char* state_name(InstanceState state) {
  switch (state) {
    case InstanceState::kStarting: return "Starting";
    case InstanceState::kReady: return "Ready";
    case InstanceState::kSoftDrained: return "SoftDrained";
    case InstanceState::kTerminated: return "Terminated";
  }
  return "?";
}

void validate_profile(const ServiceProfile& p) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, "service profile: " + msg); };
  if (!(p.prefill_cap_per_inst > 0) || !(p.decode_cap_per_inst > 0)) fail("capacities must be positive");
  if (!(p.decode_util_floor >= 0 && p.decode_util_floor < 1)) fail("decode_util_floor must be in [0, 1)");
  if (!(p.ttft_base > 0) || !(p.tbt_base > 0)) fail("base latencies must be positive");
  if (!(p.slo_ttft > p.ttft_base) || !(p.slo_tbt > p.tbt_base)) fail("SLOs must exceed base latencies");
  if (p.gpus_per_prefill_inst < 1 || p.gpus_per_decode_inst < 1) fail("instances need at least one GPU");
  if (!(p.reference_compute_score > 0) || !(p.reference_mem_bw_score > 0)) fail("reference scores must be positive");
  if (!(p.rho_max > 0 && p.rho_max < 1)) fail("rho_max must be in (0, 1)");
}

int gpus_per_instance(const ServiceProfile& profile, Role role) {
  return role == Role::kPrefill ? profile.gpus_per_prefill_inst : profile.gpus_per_decode_inst;
}

double effective_capacity(const std::vector<Instance>& instances, Role role, const ServiceProfile& profile) {
  double total = 0;
  for (const auto& inst : instances) {
    if (inst.role != role || !serves_load(inst)) continue;
    total += role == Role::kPrefill
                 ? profile.prefill_cap_per_inst * inst.gpu.compute_score / profile.reference_compute_score
                 : profile.decode_cap_per_inst * inst.gpu.mem_bw_score / profile.reference_mem_bw_score;
  }
  return total;
}

double load_factor(double demand, double capacity, double rho_max) {
  if (demand <= 0) return 0.0;
  if (capacity <= 0) return rho_max;
  return std::clamp(demand / capacity, 0.0, rho_max);
}

MetricsSample step_metrics(const ServiceProfile& profile, const workload::TokenDemand& demand,
                           double prefill_capacity, double decode_capacity, double placement_penalty, long t) {
  MetricsSample m;
  m.t = t;

  const double served_missed = std::min(demand.prefill_token_rate, prefill_capacity);
  const double served_fraction = demand.prefill_token_rate > 0 ? served_missed / demand.prefill_token_rate : 1.0;
  m.cache_missed_prefill_tps = served_missed;
  m.prefill_tps = demand.raw_prefill_token_rate * served_fraction;
  m.decode_tps = std::min(demand.decode_token_rate, decode_capacity);

  const double rho_p = load_factor(demand.prefill_token_rate, prefill_capacity, profile.rho_max);
  const double rho_d = load_factor(demand.decode_token_rate, decode_capacity, profile.rho_max);
  const double floor = profile.decode_util_floor;

  m.prefill_gpu_util = rho_p;
  m.prefill_sm_act = kPrefillSmScale * rho_p;
  m.decode_gpu_util = floor + (1.0 - floor) * rho_d;
  m.decode_sm_act = kDecodeSmFloorScale * floor + (1.0 - kDecodeSmFloorScale * floor) * rho_d;

  m.ttft = profile.ttft_base * placement_penalty / std::max(kLatencyEpsilon, 1.0 - rho_p);
  m.tbt = profile.tbt_base / std::max(kLatencyEpsilon, 1.0 - rho_d);
  return m;
}

MetricsSample step_metrics(const ServiceProfile& profile, const workload::TokenDemand& demand,
                           const std::vector<Instance>& instances, double placement_penalty, long t) {
  return step_metrics(profile, demand, effective_capacity(instances, Role::kPrefill, profile),
                      effective_capacity(instances, Role::kDecode, profile), placement_penalty, t);
}

double kv_transfer_penalty(const std::vector<GroupPlacement>& groups) {
  double weighted = 0;
  double pairs = 0;
  for (const auto& g : groups) {
    for (const auto& p : g.prefill_s2) {
      for (const auto& d : g.decode_s2) {
        weighted += p == d ? 1.0 : kCrossS2Penalty;
        pairs += 1;
      }
    }
  }
  return pairs > 0 ? weighted / pairs : 1.0;
}

double kv_transfer_penalty(const GroupPlacement& group) { return kv_transfer_penalty(std::vector<GroupPlacement>{group}); }

void advance_lifecycle(std::vector<Instance>& instances, long t, const StartupTicks& startup) {
  for (auto& inst : instances) {
    if (inst.state != InstanceState::kStarting) continue;
    const long delay = inst.role == Role::kPrefill ? startup.prefill : startup.decode;
    if (t - inst.start_tick >= delay) inst.state = InstanceState::kReady;
  }
}

}  // namespace hetscale::servicesim
