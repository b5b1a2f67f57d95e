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

#include "scheduler_oracle.h"

#include <algorithm>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "test_util.h"

namespace hetscale::testing {

using scheduler::Affinity;
using scheduler::AffinityScope;
using scheduler::Allocation;
using scheduler::AllocationStatus;
using scheduler::RequestType;
using scheduler::ScalingRequest;
using servicesim::Role;
using topology::build_tree;
using topology::classify_subgroups;
using topology::Tier;

namespace {

struct NodeSlot {
  std::string type;
  int free;
};

using Memo = std::map<std::tuple<std::size_t, int, int>, bool>;

bool fit_from(const std::vector<NodeSlot>& nodes, std::size_t i, int x, int y, const Affinity& aff, Memo& memo) {
  if (x == 0 && y == 0) return true;
  if (i == nodes.size()) return false;
  const auto key = std::make_tuple(i, x, y);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  bool ok = false;
  for (int a = 0; a <= x && !ok; ++a) {
    if (a > 0 && nodes[i].type != aff.prefill_gpu_type) break;
    for (int b = 0; b <= y && !ok; ++b) {
      if (b > 0 && nodes[i].type != aff.decode_gpu_type) break;
      if (a * aff.gpus_per_prefill + b * aff.gpus_per_decode > nodes[i].free) break;
      ok = fit_from(nodes, i + 1, x - a, y - b, aff, memo);
    }
  }
  memo[key] = ok;
  return ok;
}

std::string outcome_key(const std::vector<Allocation>& allocs) {
  std::string key;
  for (const auto& a : allocs) {
    key += fmt::format("{}|{}|{}|{}|{}|{}|", a.service_id, a.group_id, scheduler::allocation_status_name(a.status),
                       a.prefill_count(), a.decode_count(), a.subgroup_id);
    for (const auto& p : a.pods) key += fmt::format("{}:{}:{},", static_cast<int>(p.role), p.node_id, p.gpus);
    for (long id : a.deducted_prefill) key += fmt::format("-p{}", id);
    for (long id : a.deducted_decode) key += fmt::format("-d{}", id);
    key += ';';
  }
  return key;
}

}  // namespace

bool brute_fit(const topology::TopologyTree& tree, const topology::RdmaSubgroup& sg, const Affinity& aff, int x,
               int y) {
  std::vector<NodeSlot> nodes;
  for (const auto& n : sg.node_ids) nodes.push_back({tree.node(n).gpu_type, tree.node_free(n)});
  Memo memo;
  return fit_from(nodes, 0, x, y, aff, memo);
}

bool independently_eligible(const topology::RdmaSubgroup& sg, const Affinity& aff) {
  if (aff.scope == AffinityScope::kSameS1 && sg.tier != Tier::kHigh) return false;
  return sg.gpu_types_present.count(aff.prefill_gpu_type) && sg.gpu_types_present.count(aff.decode_gpu_type);
}

Scenario random_scenario(std::mt19937_64& rng) {
  Scenario sc;
  std::uniform_int_distribution<int> nodes(3, 20);
  sc.spec = random_cluster(rng, nodes(rng), 5, 3, 0.35);
  std::uniform_int_distribution<int> delta(1, 4), pow2(0, 2), coin(0, 1), prio(0, 2), scope(0, 2);
  const std::vector<std::string> types = {"A", "B"};
  const int services = 1 + static_cast<int>(rng() % 3);
  std::vector<Affinity> affs;
  for (int s = 0; s < services; ++s) {
    affs.push_back({static_cast<AffinityScope>(scope(rng)), types[coin(rng)], types[coin(rng)], 1 << pow2(rng),
                    1 << pow2(rng)});
  }
  {
    auto tree = build_tree(sc.spec);
    const auto sgs = classify_subgroups(tree);
    std::vector<ScalingRequest> warm;
    for (int s = 0; s < services; ++s) {
      if (coin(rng)) {
        warm.push_back({fmt::format("s{}", s), RequestType::kScaleOut, 1 + delta(rng) / 2, 1 + delta(rng) / 2, 0,
                        affs[s]});
      }
    }
    scheduler::apply_allocations(sc.state, scheduler::schedule_cycle(warm, tree, sgs, sc.state), sc.spec, 0);
    for (auto& i : sc.state.instances) {
      if (coin(rng)) i.state = servicesim::InstanceState::kReady;
    }
  }
  for (int s = 0; s < services; ++s) {
    ScalingRequest r{fmt::format("s{}", s), RequestType::kScaleOut, delta(rng), delta(rng), prio(rng), affs[s]};
    if (coin(rng) && coin(rng)) {
      r.type = RequestType::kScaleIn;
      r.prefill_delta -= 1;  // scale-in deltas may be zero for one role
      r.decode_delta -= coin(rng);
    }
    sc.requests.push_back(r);
  }
  return sc;
}

void check_cycle(const Scenario& sc, const std::vector<Allocation>& allocs, CycleViolations& out) {
  ++out.cycles;
  const auto used = scheduler::gpus_in_use(sc.state);
  auto tree = build_tree(sc.spec, used);
  const auto start = build_tree(sc.spec, used);
  const auto sgs = classify_subgroups(tree);
  std::map<std::size_t, std::pair<int, int>> per_request;
  std::map<std::string, int> assigned_on_node;

  for (const auto& a : allocs) {
    const auto& r = sc.requests[a.request_index];
    if (a.type == RequestType::kScaleIn) {
      if (a.prefill_count() > r.prefill_delta || a.decode_count() > r.decode_delta) {
        out.virtual_alloc.push_back(fmt::format("scale-in of {} deducted more than requested", r.service_id));
      }
      continue;
    }
    if (a.status == AllocationStatus::kAtomicPlacementFailed || a.status == AllocationStatus::kPartial) {
      ++out.shortfalls;
    }
    if (a.status == AllocationStatus::kAtomicPlacementFailed) {
      if (!a.pods.empty()) out.atomicity.push_back(fmt::format("failed placement of {} carries pods", r.service_id));
      for (const auto& sg : sgs) {
        if (independently_eligible(sg, r.affinity) && brute_fit(tree, sg, r.affinity, a.unit_prefill, a.unit_decode)) {
          out.priority.push_back(fmt::format("{} failed although {} could host a block", r.service_id, sg.id));
        }
      }
      continue;
    }
    for (const auto& sg : sgs) {
      if (!independently_eligible(sg, r.affinity) || sg.tier >= a.tier) continue;
      ++out.conservation_checks;
      if (brute_fit(tree, sg, r.affinity, a.unit_prefill, a.unit_decode)) {
        out.priority.push_back(fmt::format("{} placed in {} ({}) while lower-tier {} ({}) fit", r.service_id,
                                           a.subgroup_id, topology::tier_name(a.tier), sg.id,
                                           topology::tier_name(sg.tier)));
      }
    }
    const auto sg_it = std::find_if(sgs.begin(), sgs.end(), [&](const auto& s) { return s.id == a.subgroup_id; });
    if (sg_it == sgs.end() || !independently_eligible(*sg_it, r.affinity)) {
      out.affinity.push_back(fmt::format("{} placed in ineligible subgroup {}", r.service_id, a.subgroup_id));
      continue;
    }
    std::set<std::string> s2s;
    for (const auto& p : a.pods) {
      if (std::find(sg_it->node_ids.begin(), sg_it->node_ids.end(), p.node_id) == sg_it->node_ids.end()) {
        out.affinity.push_back(fmt::format("pod on {} outside subgroup {}", p.node_id, a.subgroup_id));
      }
      const auto& node = tree.node(p.node_id);
      if (node.gpu_type != (p.role == Role::kPrefill ? r.affinity.prefill_gpu_type : r.affinity.decode_gpu_type)) {
        out.affinity.push_back(fmt::format("pod on {} has the wrong GPU type", p.node_id));
      }
      s2s.insert(node.s2);
      tree.virtual_assign(p.node_id, p.gpus);
      assigned_on_node[p.node_id] += p.gpus;
    }
    if (s2s.size() > 1) out.affinity.push_back(fmt::format("group {} spans {} S2s", a.group_id, s2s.size()));
    const int k = a.unit_decode > 0 ? a.decode_count() / a.unit_decode : a.prefill_count() / a.unit_prefill;
    if (a.prefill_count() != k * a.unit_prefill || a.decode_count() != k * a.unit_decode) {
      out.atomicity.push_back(fmt::format("{} placed a partial ratio block", r.service_id));
    }
    per_request[a.request_index].first += a.prefill_count();
    per_request[a.request_index].second += a.decode_count();
    ++out.placements;
  }

  for (const auto& [idx, counts] : per_request) {
    const auto& r = sc.requests[idx];
    if (counts.first > r.prefill_delta || counts.second > r.decode_delta) {
      out.virtual_alloc.push_back(fmt::format("{} placed more than requested", r.service_id));
    }
    if (r.prefill_delta > 0 && r.decode_delta > 0 && (counts.first > 0) != (counts.second > 0)) {
      out.atomicity.push_back(fmt::format("{} changed {}P/{}D for a {}P/{}D request", r.service_id, counts.first,
                                          counts.second, r.prefill_delta, r.decode_delta));
    }
  }

  // Per-subgroup and per-type recount against cycle-start capacity.
  for (const auto& sg : sgs) {
    for (const auto& type : sg.gpu_types_present) {
      int assigned = 0, capacity = 0;
      for (const auto& a : allocs) {
        if (a.subgroup_id != sg.id) continue;
        for (const auto& p : a.pods) {
          if (start.node(p.node_id).gpu_type == type) assigned += p.gpus;
        }
      }
      for (const auto& n : sg.node_ids) {
        if (start.node(n).gpu_type == type) capacity += start.node_free(n);
      }
      if (assigned > capacity) {
        out.virtual_alloc.push_back(fmt::format("{} {}: {} GPUs assigned of {} free", sg.id, type, assigned, capacity));
      }
    }
  }
}

CycleViolations run_randomized_cycles(std::uint64_t seed, int trials) {
  std::mt19937_64 rng(seed);
  CycleViolations out;
  for (int trial = 0; trial < trials; ++trial) {
    const auto sc = random_scenario(rng);
    std::vector<std::size_t> perm(sc.requests.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::string reference;
    do {
      Scenario shuffled = sc;
      for (std::size_t i = 0; i < perm.size(); ++i) shuffled.requests[i] = sc.requests[perm[i]];
      const auto used = scheduler::gpus_in_use(shuffled.state);
      auto tree = build_tree(shuffled.spec, used);
      const auto sgs = classify_subgroups(tree);
      const auto allocs = scheduler::schedule_cycle(shuffled.requests, tree, sgs, shuffled.state);
      check_cycle(shuffled, allocs, out);

      // Scale-in releases stay invisible inside the cycle: each node's free
      // count only drops by what was placed on it.
      const auto start = build_tree(shuffled.spec, used);
      std::map<std::string, int> placed;
      for (const auto& a : allocs) {
        for (const auto& p : a.pods) placed[p.node_id] += p.gpus;
      }
      for (const auto& n : shuffled.spec.nodes) {
        if (tree.node_free(n.node_id) != start.node_free(n.node_id) - placed[n.node_id]) {
          out.virtual_alloc.push_back(fmt::format("trial {}: node {} changed by more than its placements", trial,
                                                  n.node_id));
        }
      }

      const std::string key = outcome_key(allocs);
      if (reference.empty()) {
        reference = key;
      } else if (key != reference) {
        out.order.push_back(fmt::format("trial {}: request order changed the outcome", trial));
      }

      // Only the next rebuild sees the applied releases and placements.
      scheduler::apply_allocations(shuffled.state, allocs, shuffled.spec, 1);
      const auto rebuilt = build_tree(shuffled.spec, scheduler::gpus_in_use(shuffled.state));
      for (const auto& n : shuffled.spec.nodes) {
        int held = 0;
        for (const auto& i : shuffled.state.instances) {
          if (i.node_id == n.node_id && servicesim::holds_gpus(i)) held += i.gpus;
        }
        if (held > n.gpu_count || rebuilt.node_free(n.node_id) != n.gpu_count - held) {
          out.virtual_alloc.push_back(fmt::format("trial {}: node {} recount mismatch after rebuild", trial,
                                                  n.node_id));
        }
      }
      for (const auto& g : shuffled.state.groups) {
        std::set<std::string> s2s;
        for (const auto& i : shuffled.state.instances) {
          if (i.group_id == g.group_id && servicesim::holds_gpus(i)) s2s.insert(i.s2);
        }
        if (s2s.size() > 1) out.affinity.push_back(fmt::format("trial {}: group {} spans S2s", trial, g.group_id));
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return out;
}

}  // namespace hetscale::testing
