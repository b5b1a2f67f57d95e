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

#include <compare>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace hetscale::topology {

struct GpuType {
  std::string name;
  double compute_score = 1.0;  // relative prefill tokens/s per GPU
  double mem_bw_score = 1.0;   // relative decode tokens/s per GPU
  double hbm_capacity_gb = 0.0;
};

struct NodeSpec {
  std::string node_id;
  std::string gpu_type;
  int gpu_count = 0;
  std::string s0;
  std::string s1;
  std::string s2;
  std::string cluster;
  std::string vdc;
};

struct ClusterSpec {
  std::vector<GpuType> gpu_types;
  std::vector<NodeSpec> nodes;

  // nullptr when the name is unknown.
  const GpuType* find_gpu_type(std::string_view name) const;
};

enum class SwitchLevel { kS0, kS1, kS2, kCluster, kVdc };

const char* switch_level_name(SwitchLevel level);

struct SwitchRef {
  SwitchLevel level = SwitchLevel::kS0;
  std::string id;

  auto operator<=>(const SwitchRef&) const = default;
};

// Hierarchical view VDC -> cluster -> S2 -> S1 -> S0 -> node with live
// free-GPU counters. Aggregates are kept per (switch, gpu type) and always
// equal the sum over the node counters below the switch.
//
// Single writer: only the scheduling cycle mutates a tree. Capacity only ever
// goes down inside a tree's lifetime; releases become visible through a
// rebuild.
class TopologyTree {
 public:
  const ClusterSpec& spec() const { return spec_; }

  bool has_node(std::string_view node_id) const;
  const NodeSpec& node(std::string_view node_id) const;
  int node_free(std::string_view node_id) const;

  // Free GPUs below `sw`, optionally restricted to one GPU type.
  int free_gpus(const SwitchRef& sw) const;
  int free_gpus(const SwitchRef& sw, std::string_view gpu_type) const;

  // Physical GPU types below `sw`, independent of occupancy.
  std::set<std::string> gpu_types_under(const SwitchRef& sw) const;

  // Sorted node ids below `sw`.
  std::vector<std::string> nodes_under(const SwitchRef& sw) const;

  // Sorted ids of direct children one level down; empty for S0.
  std::vector<std::string> children(const SwitchRef& sw) const;

  // Sorted ids of all switches at a level.
  std::vector<std::string> switches(SwitchLevel level) const;

  // The switch at `level` above `node_id`.
  SwitchRef ancestor(std::string_view node_id, SwitchLevel level) const;

  // Deducts `gpus` from the node and every ancestor aggregate. Throws
  // InsufficientCapacity (tree unchanged) if the node has fewer free GPUs.
  void virtual_assign(std::string_view node_id, int gpus);

 private:
  friend TopologyTree build_tree(const ClusterSpec& spec, const std::map<std::string, int>& used_gpus);

  std::size_t index_of(std::string_view node_id) const;

  ClusterSpec spec_;
  std::map<std::string, std::size_t, std::less<>> node_index_;
  std::vector<int> node_free_;
  std::map<SwitchRef, std::map<std::string, int>> free_by_type_;
  std::map<SwitchRef, std::set<std::string>> children_;
  std::map<SwitchRef, std::vector<std::string>> nodes_under_;
};

// Builds a tree with every GPU free. Throws InvalidInput (empty list, unknown
// or invalid GPU type, non-positive gpu_count), DuplicateNode, or
// InconsistentHierarchy (a switch id with two different parents).
TopologyTree build_tree(const ClusterSpec& spec);

// Rebuild from cluster state: `used_gpus` maps node id to GPUs currently held
// by instances that have not terminated.
TopologyTree build_tree(const ClusterSpec& spec, const std::map<std::string, int>& used_gpus);

enum class Tier { kLow = 0, kMedium = 1, kHigh = 2 };

const char* tier_name(Tier tier);

// One subgroup per S2 (Low/Medium) or per heterogeneous S1 (High). An S2
// subgroup covers the nodes of its S2 that were not extracted into a High
// subgroup, and its members are the S2 plus its remaining S1 switches.
struct RdmaSubgroup {
  std::string id;
  Tier tier = Tier::kLow;
  SwitchRef anchor;
  std::vector<SwitchRef> member_switches;
  std::set<std::string> gpu_types_present;
  std::vector<std::string> node_ids;
  std::string cluster;
};

// Partition of every S1/S2 switch into tiered subgroups, sorted by id.
std::vector<RdmaSubgroup> classify_subgroups(const TopologyTree& tree);

// Free GPUs of `gpu_type` on the subgroup's nodes.
int subgroup_free(const TopologyTree& tree, const RdmaSubgroup& sg, std::string_view gpu_type);

// Canonical text form, one subgroup per line.
std::string serialize_subgroups(const std::vector<RdmaSubgroup>& subgroups);

// Cluster description file, one record per line:
//   gpu_type name=H20 compute_score=1.0 mem_bw_score=1.0 hbm_capacity=96
//   node node_id=n0 gpu_type=H20 gpu_count=8 s0=r0 s1=m0 s2=b0 cluster=c0 vdc=v0
// Blank lines and lines starting with '#' are ignored. Unknown or missing
// fields raise ParseError with the line number.
ClusterSpec parse_cluster(std::istream& in);
ClusterSpec load_cluster(const std::string& path);
void write_cluster(std::ostream& out, const ClusterSpec& spec);

}  // namespace hetscale::topology
