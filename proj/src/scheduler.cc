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

#include "hetscale/scheduler.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>
#include <unordered_map>

#include <fmt/format.h>

#include "hetscale/error.h"

namespace hetscale::scheduler {

using servicesim::InstanceState;

const char* affinity_scope_name(AffinityScope scope) {
  switch (scope) {
    case AffinityScope::kSameS1: return "same_s1";
    case AffinityScope::kSameS2: return "same_s2";
    case AffinityScope::kSameCluster: return "same_cluster";
  }
  return "?";
}

std::optional<AffinityScope> parse_affinity_scope(std::string_view name) {
  for (auto s : {AffinityScope::kSameS1, AffinityScope::kSameS2, AffinityScope::kSameCluster}) {
    if (name == affinity_scope_name(s)) return s;
  }
  return std::nullopt;
}

const char* group_state_name(GroupState state) { return state == GroupState::kActive ? "active" : "draining"; }

const char* request_type_name(RequestType type) { return type == RequestType::kScaleOut ? "ScaleOut" : "ScaleIn"; }

const char* allocation_status_name(AllocationStatus status) {
  switch (status) {
    case AllocationStatus::kFull: return "full";
    case AllocationStatus::kPartial: return "partial";
    case AllocationStatus::kAtomicPlacementFailed: return "atomic_placement_failed";
    case AllocationStatus::kNothingToDeduct: return "nothing_to_deduct";
  }
  return "?";
}

int Allocation::prefill_count() const {
  if (type == RequestType::kScaleIn) return static_cast<int>(deducted_prefill.size());
  return static_cast<int>(std::count_if(pods.begin(), pods.end(), [](const auto& p) { return p.role == Role::kPrefill; }));
}

int Allocation::decode_count() const {
  if (type == RequestType::kScaleIn) return static_cast<int>(deducted_decode.size());
  return static_cast<int>(std::count_if(pods.begin(), pods.end(), [](const auto& p) { return p.role == Role::kDecode; }));
}

DeploymentGroup* SchedulerState::find_group(std::string_view group_id) {
  for (auto& g : groups) {
    if (g.group_id == group_id) return &g;
  }
  return nullptr;
}

const DeploymentGroup* SchedulerState::find_group(std::string_view group_id) const {
  return const_cast<SchedulerState*>(this)->find_group(group_id);
}

namespace {

bool eligible(const RdmaSubgroup& sg, const Affinity& affinity) {
  if (affinity.scope == AffinityScope::kSameS1 && sg.tier != Tier::kHigh) return false;
  return sg.gpu_types_present.count(affinity.prefill_gpu_type) > 0 &&
         sg.gpu_types_present.count(affinity.decode_gpu_type) > 0;
}

// Group of the service bound to the subgroup, lowest id first.
const DeploymentGroup* group_in(const SchedulerState& state, std::string_view service_id, const RdmaSubgroup& sg,
                                AffinityScope scope) {
  const DeploymentGroup* found = nullptr;
  for (const auto& g : state.groups) {
    if (g.service_id != service_id || g.bound_subgroup != sg.id || g.scope != scope) continue;
    if (!found || g.group_id < found->group_id) found = &g;
  }
  return found;
}

std::vector<PodAssignment> pack_single_type(const TopologyTree& tree, const std::vector<std::string>& nodes, Role role,
                                            int gpus, int count, bool& ok) {
  std::vector<PodAssignment> pods;
  for (const auto& n : nodes) {
    int slots = tree.node_free(n) / gpus;
    while (slots-- > 0 && static_cast<int>(pods.size()) < count) pods.push_back({role, n, gpus});
    if (static_cast<int>(pods.size()) == count) break;
  }
  ok = static_cast<int>(pods.size()) == count;
  return pods;
}

}  // namespace

std::vector<const RdmaSubgroup*> candidate_subgroups(const std::vector<RdmaSubgroup>& subgroups,
                                                     const Affinity& affinity, std::string_view service_id,
                                                     const SchedulerState& state) {
  std::vector<std::tuple<int, int, std::string_view, const RdmaSubgroup*>> keyed;
  for (const auto& sg : subgroups) {
    if (!eligible(sg, affinity)) continue;
    const bool hosts = group_in(state, service_id, sg, affinity.scope) != nullptr;
    keyed.emplace_back(static_cast<int>(sg.tier), hosts ? 0 : 1, sg.id, &sg);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<const RdmaSubgroup*> out;
  out.reserve(keyed.size());
  for (const auto& k : keyed) out.push_back(std::get<3>(k));
  return out;
}

std::optional<std::vector<PodAssignment>> fit_pods(const TopologyTree& tree, const RdmaSubgroup& subgroup,
                                                   const Affinity& affinity, int prefill, int decode) {
  const int gp = affinity.gpus_per_prefill, gd = affinity.gpus_per_decode;
  if (gp < 1 || gd < 1) throw Error(ErrorCode::kInvalidConfig, "instances need at least one GPU");

  auto nodes_of = [&](const std::string& type) {
    std::vector<std::string> out;
    for (const auto& n : subgroup.node_ids) {
      if (tree.node(n).gpu_type == type) out.push_back(n);
    }
    return out;
  };

  if (affinity.prefill_gpu_type != affinity.decode_gpu_type) {
    bool ok_p = false, ok_d = false;
    auto pods = pack_single_type(tree, nodes_of(affinity.prefill_gpu_type), Role::kPrefill, gp, prefill, ok_p);
    auto dpods = pack_single_type(tree, nodes_of(affinity.decode_gpu_type), Role::kDecode, gd, decode, ok_d);
    if (!ok_p || !ok_d) return std::nullopt;
    pods.insert(pods.end(), dpods.begin(), dpods.end());
    return pods;
  }

  // Shared node pool: best[i][x] is the most decode instances the first i
  // nodes can host alongside exactly x prefill instances (-1 unreachable).
  const auto nodes = nodes_of(affinity.prefill_gpu_type);
  const std::size_t n = nodes.size();
  std::vector<std::vector<int>> best(n + 1, std::vector<int>(prefill + 1, -1));
  std::vector<std::vector<int>> choice(n + 1, std::vector<int>(prefill + 1, 0));
  best[0][0] = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int free = tree.node_free(nodes[i]);
    for (int x = 0; x <= prefill; ++x) {
      if (best[i][x] < 0) continue;
      for (int a = 0; x + a <= prefill && a * gp <= free; ++a) {
        const int value = best[i][x] + (free - a * gp) / gd;
        if (value > best[i + 1][x + a]) {
          best[i + 1][x + a] = value;
          choice[i + 1][x + a] = a;
        }
      }
    }
  }
  if (best[n][prefill] < decode) return std::nullopt;

  std::vector<int> per_node_prefill(n);
  for (std::size_t i = n, x = prefill; i > 0; --i) {
    per_node_prefill[i - 1] = choice[i][x];
    x -= choice[i][x];
  }
  std::vector<PodAssignment> pods;
  int decode_left = decode;
  for (std::size_t i = 0; i < n; ++i) {
    const int a = per_node_prefill[i];
    for (int k = 0; k < a; ++k) pods.push_back({Role::kPrefill, nodes[i], gp});
    int b = std::min(decode_left, (tree.node_free(nodes[i]) - a * gp) / gd);
    decode_left -= b;
    while (b-- > 0) pods.push_back({Role::kDecode, nodes[i], gd});
  }
  return pods;
}

std::vector<const DeploymentGroup*> scale_in_order(const SchedulerState& state, std::string_view service_id) {
  std::vector<const DeploymentGroup*> out;
  for (const auto& g : state.groups) {
    if (g.service_id == service_id) out.push_back(&g);
  }
  std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
    if (a->tier != b->tier) return a->tier > b->tier;
    return a->group_id < b->group_id;
  });
  return out;
}

std::vector<long> scale_in_victims(const SchedulerState& state, std::string_view group_id, Role role) {
  std::vector<const Instance*> pool;
  for (const auto& inst : state.instances) {
    if (inst.group_id == group_id && inst.role == role && servicesim::is_active(inst)) pool.push_back(&inst);
  }
  auto rank = [](const Instance* i) {
    if (i->state == InstanceState::kStarting) return 0;
    return i->registered ? 2 : 1;
  };
  std::sort(pool.begin(), pool.end(), [&](const Instance* a, const Instance* b) {
    if (rank(a) != rank(b)) return rank(a) < rank(b);
    if (a->start_tick != b->start_tick) return a->start_tick > b->start_tick;
    return a->id > b->id;
  });
  std::vector<long> ids;
  ids.reserve(pool.size());
  for (const auto* i : pool) ids.push_back(i->id);
  return ids;
}

namespace {

class CycleRunner {
 public:
  CycleRunner(TopologyTree& tree, const std::vector<RdmaSubgroup>& subgroups, const SchedulerState& state)
      : tree_(tree), subgroups_(subgroups), state_(state), next_group_seq_(state.next_group_seq) {}

  void scale_out(std::size_t index, const ScalingRequest& r, std::vector<Allocation>& out) {
    if (r.prefill_delta == 0 && r.decode_delta == 0) return;
    const auto cands = candidate_subgroups(subgroups_, r.affinity, r.service_id, state_);

    for (const auto* sg : cands) {
      if (auto pods = fit_pods(tree_, *sg, r.affinity, r.prefill_delta, r.decode_delta)) {
        commit(*pods);
        out.push_back(make(index, r, *sg, std::move(*pods), r.prefill_delta, r.decode_delta, AllocationStatus::kFull));
        return;
      }
    }

    // Place ratio-consistent blocks one at a time, each on the first
    // candidate that takes it whole.
    const int g = std::gcd(r.prefill_delta, r.decode_delta);
    const int up = r.prefill_delta / g, ud = r.decode_delta / g;
    std::vector<std::vector<PodAssignment>> placed(cands.size());
    if (g > 1) {
      for (int u = 0; u < g; ++u) {
        bool any = false;
        for (std::size_t c = 0; c < cands.size(); ++c) {
          if (auto pods = fit_pods(tree_, *cands[c], r.affinity, up, ud)) {
            commit(*pods);
            placed[c].insert(placed[c].end(), pods->begin(), pods->end());
            any = true;
            break;
          }
        }
        if (!any) break;
      }
    }
    const std::size_t before = out.size();
    for (std::size_t c = 0; c < cands.size(); ++c) {
      if (placed[c].empty()) continue;
      out.push_back(make(index, r, *cands[c], std::move(placed[c]), up, ud, AllocationStatus::kPartial));
    }
    if (out.size() == before) {
      Allocation a = base(index, r);
      a.status = AllocationStatus::kAtomicPlacementFailed;
      a.unit_prefill = r.prefill_delta;
      a.unit_decode = r.decode_delta;
      out.push_back(std::move(a));
    }
  }

  void scale_in(std::size_t index, const ScalingRequest& r, std::vector<Allocation>& out) {
    if (r.prefill_delta == 0 && r.decode_delta == 0) return;
    int left_p = r.prefill_delta, left_d = r.decode_delta;
    const std::size_t before = out.size();
    for (const auto* g : scale_in_order(state_, r.service_id)) {
      if (left_p == 0 && left_d == 0) break;
      auto take = [&](Role role, int& left) {
        auto ids = scale_in_victims(state_, g->group_id, role);
        if (static_cast<int>(ids.size()) > left) ids.resize(left);
        left -= static_cast<int>(ids.size());
        return ids;
      };
      Allocation a = base(index, r);
      a.deducted_prefill = take(Role::kPrefill, left_p);
      a.deducted_decode = take(Role::kDecode, left_d);
      if (a.deducted_prefill.empty() && a.deducted_decode.empty()) continue;
      a.group_id = g->group_id;
      a.subgroup_id = g->bound_subgroup;
      a.tier = g->tier;
      a.cluster = g->cluster;
      a.scope = g->scope;
      out.push_back(std::move(a));
    }
    const bool full = left_p == 0 && left_d == 0;
    if (out.size() == before) {
      Allocation a = base(index, r);
      a.status = AllocationStatus::kNothingToDeduct;
      out.push_back(std::move(a));
      return;
    }
    for (std::size_t i = before; i < out.size(); ++i) {
      out[i].status = full ? AllocationStatus::kFull : AllocationStatus::kPartial;
    }
  }

 private:
  static Allocation base(std::size_t index, const ScalingRequest& r) {
    Allocation a;
    a.request_index = index;
    a.service_id = r.service_id;
    a.type = r.type;
    a.scope = r.affinity.scope;
    a.prefill_requested = r.prefill_delta;
    a.decode_requested = r.decode_delta;
    return a;
  }

  void commit(const std::vector<PodAssignment>& pods) {
    for (const auto& p : pods) tree_.virtual_assign(p.node_id, p.gpus);
  }

  Allocation make(std::size_t index, const ScalingRequest& r, const RdmaSubgroup& sg, std::vector<PodAssignment> pods,
                  int unit_p, int unit_d, AllocationStatus status) {
    Allocation a = base(index, r);
    a.status = status;
    a.subgroup_id = sg.id;
    a.tier = sg.tier;
    a.cluster = sg.cluster;
    a.unit_prefill = unit_p;
    a.unit_decode = unit_d;
    a.pods = std::move(pods);
    if (const auto* g = group_in(state_, r.service_id, sg, r.affinity.scope)) {
      a.group_id = g->group_id;
    } else {
      const auto key = r.service_id + "\n" + sg.id + "\n" + affinity_scope_name(r.affinity.scope);
      auto it = created_.find(key);
      if (it == created_.end()) {
        it = created_.emplace(key, fmt::format("{}-g{}", r.service_id, next_group_seq_++)).first;
        a.new_group = true;
      }
      a.group_id = it->second;
    }
    return a;
  }

  TopologyTree& tree_;
  const std::vector<RdmaSubgroup>& subgroups_;
  const SchedulerState& state_;
  long next_group_seq_;
  std::unordered_map<std::string, std::string> created_;
};

}  // namespace

std::vector<Allocation> schedule_cycle(const std::vector<ScalingRequest>& requests, TopologyTree& tree,
                                       const std::vector<RdmaSubgroup>& subgroups, const SchedulerState& state) {
  std::vector<std::size_t> order(requests.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = requests[a];
    const auto& rb = requests[b];
    if (ra.priority != rb.priority) return ra.priority > rb.priority;
    return ra.service_id < rb.service_id;
  });

  CycleRunner runner(tree, subgroups, state);
  std::vector<Allocation> out;
  for (std::size_t i : order) {
    const auto& r = requests[i];
    if (r.prefill_delta < 0 || r.decode_delta < 0) {
      throw Error(ErrorCode::kInvalidInput, fmt::format("request for '{}' has a negative delta", r.service_id));
    }
    if (r.type == RequestType::kScaleOut) {
      runner.scale_out(i, r, out);
    } else {
      runner.scale_in(i, r, out);
    }
  }
  return out;
}

void apply_allocations(SchedulerState& state, const std::vector<Allocation>& allocations,
                       const topology::ClusterSpec& cluster, long now) {
  std::unordered_map<std::string, const topology::NodeSpec*> nodes;
  for (const auto& n : cluster.nodes) nodes.emplace(n.node_id, &n);
  std::unordered_map<long, Instance*> by_id;
  for (auto& inst : state.instances) by_id.emplace(inst.id, &inst);

  std::vector<Instance> added;
  for (const auto& a : allocations) {
    if (a.type == RequestType::kScaleOut) {
      if (a.pods.empty()) continue;
      DeploymentGroup* g = state.find_group(a.group_id);
      if (!g) {
        state.groups.push_back({a.group_id, a.service_id, a.scope, a.subgroup_id, a.tier, a.cluster,
                                GroupState::kActive});
        if (a.new_group) ++state.next_group_seq;
        g = &state.groups.back();
      }
      g->state = GroupState::kActive;
      for (const auto& p : a.pods) {
        auto it = nodes.find(p.node_id);
        if (it == nodes.end()) throw Error(ErrorCode::kInvalidInput, fmt::format("unknown node '{}'", p.node_id));
        const auto* type = cluster.find_gpu_type(it->second->gpu_type);
        Instance inst;
        inst.id = state.next_instance_id++;
        inst.service_id = a.service_id;
        inst.group_id = a.group_id;
        inst.role = p.role;
        inst.gpu = type ? *type : topology::GpuType{it->second->gpu_type};
        inst.node_id = p.node_id;
        inst.gpus = p.gpus;
        inst.s2 = it->second->s2;
        inst.state = InstanceState::kStarting;
        inst.start_tick = now;
        added.push_back(std::move(inst));
      }
    } else {
      for (const auto* ids : {&a.deducted_prefill, &a.deducted_decode}) {
        for (long id : *ids) {
          auto it = by_id.find(id);
          if (it == by_id.end()) continue;
          Instance& inst = *it->second;
          if (inst.state == InstanceState::kStarting) {
            inst.state = InstanceState::kTerminated;
          } else if (inst.state == InstanceState::kReady) {
            inst.state = InstanceState::kSoftDrained;
            inst.drain_start_tick = now;
          }
          inst.registered = false;
        }
      }
    }
  }
  state.instances.insert(state.instances.end(), std::make_move_iterator(added.begin()),
                         std::make_move_iterator(added.end()));
  refresh_groups(state);
}

std::map<std::string, int> gpus_in_use(const SchedulerState& state) {
  std::map<std::string, int> used;
  for (const auto& inst : state.instances) {
    if (servicesim::holds_gpus(inst)) used[inst.node_id] += inst.gpus;
  }
  return used;
}

SoftDrainUpdate update_soft_drain(SchedulerState& state, std::string_view service_id, bool slo_breach, long now,
                                  long observe_ticks) {
  SoftDrainUpdate out;
  for (auto& inst : state.instances) {
    if (inst.service_id != service_id || inst.state != InstanceState::kSoftDrained) continue;
    if (slo_breach) {
      inst.state = InstanceState::kReady;
      inst.registered = true;
      inst.drain_start_tick = -1;
      out.reinstated.push_back(inst.id);
    } else if (now - inst.drain_start_tick >= observe_ticks) {
      inst.state = InstanceState::kTerminated;
      out.terminated.push_back(inst.id);
    }
  }
  if (!out.reinstated.empty() || !out.terminated.empty()) refresh_groups(state);
  return out;
}

std::pair<int, int> gate_counts(int ready_prefill, int ready_decode, const policy::PdRatio& ratio, double tolerance) {
  if (tolerance < 0) throw Error(ErrorCode::kInvalidConfig, "gate tolerance must be non-negative");
  if (std::isinf(tolerance)) return {ready_prefill, ready_decode};
  constexpr double kSlack = 1e-9;
  std::pair<int, int> best{0, 0};
  for (int d = ready_decode; d >= 1; --d) {
    const double exact = static_cast<double>(d) * ratio.prefill / ratio.decode;
    const int lo = std::max(1, static_cast<int>(std::floor(exact * (1 - tolerance) + kSlack)));
    const int hi = std::max(1, static_cast<int>(std::ceil(exact * (1 + tolerance) - kSlack)));
    if (lo > ready_prefill) continue;
    const int p = std::min(hi, ready_prefill);
    if (p + d > best.first + best.second) best = {p, d};
  }
  return best;
}

GateOutcome discovery_gate(SchedulerState& state, std::string_view service_id, const policy::PdRatio& ratio,
                           double tolerance) {
  std::vector<Instance*> ready[2];
  for (auto& inst : state.instances) {
    if (inst.service_id == service_id && inst.state == InstanceState::kReady) {
      ready[inst.role == Role::kPrefill ? 0 : 1].push_back(&inst);
    }
  }
  for (auto& pool : ready) {
    std::sort(pool.begin(), pool.end(), [](const Instance* a, const Instance* b) {
      if (a->registered != b->registered) return a->registered;
      if (a->start_tick != b->start_tick) return a->start_tick < b->start_tick;
      return a->id < b->id;
    });
  }
  const auto [p, d] = gate_counts(static_cast<int>(ready[0].size()), static_cast<int>(ready[1].size()), ratio,
                                  tolerance);
  for (std::size_t i = 0; i < ready[0].size(); ++i) ready[0][i]->registered = static_cast<int>(i) < p;
  for (std::size_t i = 0; i < ready[1].size(); ++i) ready[1][i]->registered = static_cast<int>(i) < d;

  GateOutcome out;
  out.registered_prefill = p;
  out.registered_decode = d;
  out.suspended_prefill = static_cast<int>(ready[0].size()) - p;
  out.suspended_decode = static_cast<int>(ready[1].size()) - d;
  return out;
}

void refresh_groups(SchedulerState& state) {
  std::unordered_map<std::string, std::pair<bool, bool>> seen;  // active, holds GPUs
  for (const auto& inst : state.instances) {
    auto& s = seen[inst.group_id];
    s.first = s.first || servicesim::is_active(inst);
    s.second = s.second || servicesim::holds_gpus(inst);
  }
  std::erase_if(state.groups, [&](const DeploymentGroup& g) {
    auto it = seen.find(g.group_id);
    return it == seen.end() || !it->second.second;
  });
  for (auto& g : state.groups) g.state = seen[g.group_id].first ? GroupState::kActive : GroupState::kDraining;
}

}  // namespace hetscale::scheduler
