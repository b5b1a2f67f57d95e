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

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetscale/policy.h"
#include "hetscale/servicesim.h"
#include "hetscale/topology.h"

namespace hetscale::scheduler {

using servicesim::Instance;
using servicesim::Role;
using topology::RdmaSubgroup;
using topology::Tier;
using topology::TopologyTree;

// SameS1 requires both roles under one S1 and therefore High-tier subgroups.
// SameS2 and SameCluster accept any subgroup holding both GPU types; every
// subgroup lies under a single S2, so both bind a group to one subgroup.
enum class AffinityScope { kSameS1, kSameS2, kSameCluster };

const char* affinity_scope_name(AffinityScope scope);
std::optional<AffinityScope> parse_affinity_scope(std::string_view name);

enum class GroupState { kActive, kDraining };

const char* group_state_name(GroupState state);

struct DeploymentGroup {
  std::string group_id;
  std::string service_id;
  AffinityScope scope = AffinityScope::kSameS2;
  std::string bound_subgroup;
  Tier tier = Tier::kLow;
  std::string cluster;
  GroupState state = GroupState::kActive;
};

// Placement requirements of one service.
struct Affinity {
  AffinityScope scope = AffinityScope::kSameS2;
  std::string prefill_gpu_type;
  std::string decode_gpu_type;
  int gpus_per_prefill = 8;
  int gpus_per_decode = 8;
};

enum class RequestType { kScaleOut, kScaleIn };

const char* request_type_name(RequestType type);

struct ScalingRequest {
  std::string service_id;
  RequestType type = RequestType::kScaleOut;
  int prefill_delta = 0;  // >= 0; the direction is carried by `type`
  int decode_delta = 0;
  int priority = 0;  // larger is more important
  Affinity affinity;
};

enum class AllocationStatus { kFull, kPartial, kAtomicPlacementFailed, kNothingToDeduct };

const char* allocation_status_name(AllocationStatus status);

struct PodAssignment {
  Role role = Role::kPrefill;
  std::string node_id;
  int gpus = 0;
};

// One request's effect on one group. A request spread over several groups
// yields several allocations that share `request_index` and `status`.
struct Allocation {
  std::size_t request_index = 0;
  std::string service_id;
  RequestType type = RequestType::kScaleOut;
  AllocationStatus status = AllocationStatus::kFull;

  std::string group_id;  // empty when nothing was placed
  bool new_group = false;
  std::string subgroup_id;
  Tier tier = Tier::kLow;
  std::string cluster;
  AffinityScope scope = AffinityScope::kSameS2;

  // Smallest ratio-consistent block that was placed atomically; equals the
  // whole request when it fit in one piece.
  int unit_prefill = 0;
  int unit_decode = 0;

  int prefill_requested = 0;
  int decode_requested = 0;
  std::vector<PodAssignment> pods;        // ScaleOut
  std::vector<long> deducted_prefill;     // ScaleIn, instance ids
  std::vector<long> deducted_decode;

  int prefill_count() const;
  int decode_count() const;
};

// Persistent scheduling state shared by all services.
struct SchedulerState {
  std::vector<DeploymentGroup> groups;
  std::vector<Instance> instances;
  long next_instance_id = 0;
  long next_group_seq = 0;

  DeploymentGroup* find_group(std::string_view group_id);
  const DeploymentGroup* find_group(std::string_view group_id) const;
};

// Subgroups that may host a service with this affinity, in placement order:
// tier ascending, subgroups already hosting one of the service's groups first
// within a tier, then id.
std::vector<const RdmaSubgroup*> candidate_subgroups(const std::vector<RdmaSubgroup>& subgroups,
                                                     const Affinity& affinity, std::string_view service_id,
                                                     const SchedulerState& state);

// Pod placement of `prefill` + `decode` instances on the subgroup's nodes, or
// nullopt when they do not fit together. Each instance occupies one node.
std::optional<std::vector<PodAssignment>> fit_pods(const TopologyTree& tree, const RdmaSubgroup& subgroup,
                                                   const Affinity& affinity, int prefill, int decode);

// Groups of the service ordered for scale-in: tier descending, then id.
std::vector<const DeploymentGroup*> scale_in_order(const SchedulerState& state, std::string_view service_id);

// Victims within one group for one role, most disposable first: Starting
// (newest first), then Ready unregistered, then Ready registered.
std::vector<long> scale_in_victims(const SchedulerState& state, std::string_view group_id, Role role);

// Processes requests by priority (ties by service id, then input order) and
// deducts placed pods from `tree`. `state` is read, not changed.
std::vector<Allocation> schedule_cycle(const std::vector<ScalingRequest>& requests, TopologyTree& tree,
                                       const std::vector<RdmaSubgroup>& subgroups, const SchedulerState& state);

// Creates instances for placed pods (Starting at `now`), soft-drains or
// terminates deducted ones and updates group states.
void apply_allocations(SchedulerState& state, const std::vector<Allocation>& allocations,
                       const topology::ClusterSpec& cluster, long now);

// GPUs held per node by instances that are not Terminated.
std::map<std::string, int> gpus_in_use(const SchedulerState& state);

struct SoftDrainUpdate {
  std::vector<long> reinstated;
  std::vector<long> terminated;
};

// On `slo_breach` every SoftDrained instance of the service returns to Ready
// and registered; otherwise those drained for `observe_ticks` terminate.
SoftDrainUpdate update_soft_drain(SchedulerState& state, std::string_view service_id, bool slo_breach, long now,
                                  long observe_ticks);

inline constexpr double kGateDisabled = std::numeric_limits<double>::infinity();

struct GateOutcome {
  int registered_prefill = 0;
  int registered_decode = 0;
  int suspended_prefill = 0;
  int suspended_decode = 0;
};

// Registered counts chosen by the gate for `ready_prefill`/`ready_decode`
// Ready instances: the largest total with
//   max(1, floor(d*r*(1-tol))) <= p <= max(1, ceil(d*r*(1+tol)))
// (or nothing). Ties prefer more decode.
std::pair<int, int> gate_counts(int ready_prefill, int ready_decode, const policy::PdRatio& ratio,
                                double tolerance);

// Applies the gate to the service's Ready instances. Already registered
// instances keep registration first, then the oldest.
GateOutcome discovery_gate(SchedulerState& state, std::string_view service_id, const policy::PdRatio& ratio,
                           double tolerance);

// Marks groups with no Starting or Ready instance Draining (and the reverse),
// and drops groups that no longer hold GPUs.
void refresh_groups(SchedulerState& state);

}  // namespace hetscale::scheduler
