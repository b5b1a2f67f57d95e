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

#include "hetscale/topology.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "hetscale/error.h"
#include "text_fields.h"

namespace hetscale::topology {

namespace {

void add_parent(std::map<std::string, std::string>& parents, const char* level,
                const std::string& child, const std::string& parent) {
  auto [it, inserted] = parents.emplace(child, parent);
  if (!inserted && it->second != parent) {
    throw Error(ErrorCode::kInconsistentHierarchy,
                fmt::format("{} '{}' has two parents: '{}' and '{}'", level, child, it->second, parent));
  }
}

std::vector<SwitchRef> chain_of(const NodeSpec& n) {
  return {{SwitchLevel::kS0, n.s0},
          {SwitchLevel::kS1, n.s1},
          {SwitchLevel::kS2, n.s2},
          {SwitchLevel::kCluster, n.cluster},
          {SwitchLevel::kVdc, n.vdc}};
}

void validate_gpu_types(const ClusterSpec& spec) {
  std::set<std::string> names;
  for (const auto& g : spec.gpu_types) {
    if (g.name.empty()) throw Error(ErrorCode::kInvalidInput, "gpu type with empty name");
    if (!names.insert(g.name).second) {
      throw Error(ErrorCode::kInvalidInput, fmt::format("gpu type '{}' declared twice", g.name));
    }
    if (!(g.compute_score > 0) || !(g.mem_bw_score > 0) || !(g.hbm_capacity_gb > 0)) {
      throw Error(ErrorCode::kInvalidInput, fmt::format("gpu type '{}' needs positive scores and HBM", g.name));
    }
  }
}

}  // namespace

const GpuType* ClusterSpec::find_gpu_type(std::string_view name) const {
  for (const auto& g : gpu_types) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

const char* switch_level_name(SwitchLevel level) {
  switch (level) {
    case SwitchLevel::kS0: return "s0";
    case SwitchLevel::kS1: return "s1";
    case SwitchLevel::kS2: return "s2";
    case SwitchLevel::kCluster: return "cluster";
    case SwitchLevel::kVdc: return "vdc";
  }
  return "?";
}

const char* tier_name(Tier tier) {
  switch (tier) {
    case Tier::kLow: return "Low";
    case Tier::kMedium: return "Medium";
    case Tier::kHigh: return "High";
  }
  return "?";
}

TopologyTree build_tree(const ClusterSpec& spec) { return build_tree(spec, {}); }

TopologyTree build_tree(const ClusterSpec& spec, const std::map<std::string, int>& used_gpus) {
  if (spec.nodes.empty()) throw Error(ErrorCode::kInvalidInput, "cluster has no nodes");
  validate_gpu_types(spec);

  TopologyTree tree;
  tree.spec_ = spec;

  std::map<std::string, std::string> s0_parent, s1_parent, s2_parent, cluster_parent;
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const NodeSpec& n = spec.nodes[i];
    for (const std::string* id : {&n.node_id, &n.s0, &n.s1, &n.s2, &n.cluster, &n.vdc}) {
      if (id->empty()) throw Error(ErrorCode::kInvalidInput, fmt::format("node #{} has an empty identifier", i));
    }
    if (spec.find_gpu_type(n.gpu_type) == nullptr) {
      throw Error(ErrorCode::kInvalidInput, fmt::format("node '{}' uses unknown gpu type '{}'", n.node_id, n.gpu_type));
    }
    if (n.gpu_count < 1) {
      throw Error(ErrorCode::kInvalidInput, fmt::format("node '{}' has gpu_count {}", n.node_id, n.gpu_count));
    }
    if (!tree.node_index_.emplace(n.node_id, i).second) {
      throw Error(ErrorCode::kDuplicateNode, fmt::format("node '{}' listed twice", n.node_id));
    }
    add_parent(s0_parent, "s0", n.s0, n.s1);
    add_parent(s1_parent, "s1", n.s1, n.s2);
    add_parent(s2_parent, "s2", n.s2, n.cluster);
    add_parent(cluster_parent, "cluster", n.cluster, n.vdc);
  }

  for (const auto& [node_id, used] : used_gpus) {
    auto it = tree.node_index_.find(node_id);
    if (it == tree.node_index_.end()) {
      throw Error(ErrorCode::kInvalidInput, fmt::format("usage recorded for unknown node '{}'", node_id));
    }
    if (used < 0 || used > spec.nodes[it->second].gpu_count) {
      throw Error(ErrorCode::kInvalidInput, fmt::format("node '{}' usage {} out of range", node_id, used));
    }
  }

  tree.node_free_.resize(spec.nodes.size());
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const NodeSpec& n = spec.nodes[i];
    auto used = used_gpus.find(n.node_id);
    const int free = n.gpu_count - (used == used_gpus.end() ? 0 : used->second);
    tree.node_free_[i] = free;

    const auto chain = chain_of(n);
    for (std::size_t level = 0; level < chain.size(); ++level) {
      tree.free_by_type_[chain[level]][n.gpu_type] += free;
      tree.nodes_under_[chain[level]].push_back(n.node_id);
      if (level > 0) tree.children_[chain[level]].insert(chain[level - 1].id);
    }
  }
  for (auto& [sw, ids] : tree.nodes_under_) std::sort(ids.begin(), ids.end());
  return tree;
}

std::size_t TopologyTree::index_of(std::string_view node_id) const {
  auto it = node_index_.find(node_id);
  if (it == node_index_.end()) {
    throw Error(ErrorCode::kInvalidInput, fmt::format("unknown node '{}'", node_id));
  }
  return it->second;
}

bool TopologyTree::has_node(std::string_view node_id) const { return node_index_.find(node_id) != node_index_.end(); }

const NodeSpec& TopologyTree::node(std::string_view node_id) const { return spec_.nodes[index_of(node_id)]; }

int TopologyTree::node_free(std::string_view node_id) const { return node_free_[index_of(node_id)]; }

int TopologyTree::free_gpus(const SwitchRef& sw) const {
  auto it = free_by_type_.find(sw);
  if (it == free_by_type_.end()) return 0;
  int total = 0;
  for (const auto& [type, n] : it->second) total += n;
  return total;
}

int TopologyTree::free_gpus(const SwitchRef& sw, std::string_view gpu_type) const {
  auto it = free_by_type_.find(sw);
  if (it == free_by_type_.end()) return 0;
  auto jt = it->second.find(std::string(gpu_type));
  return jt == it->second.end() ? 0 : jt->second;
}

std::set<std::string> TopologyTree::gpu_types_under(const SwitchRef& sw) const {
  std::set<std::string> types;
  auto it = free_by_type_.find(sw);
  if (it != free_by_type_.end()) {
    for (const auto& [type, n] : it->second) types.insert(type);
  }
  return types;
}

std::vector<std::string> TopologyTree::nodes_under(const SwitchRef& sw) const {
  auto it = nodes_under_.find(sw);
  return it == nodes_under_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<std::string> TopologyTree::children(const SwitchRef& sw) const {
  auto it = children_.find(sw);
  if (it == children_.end()) return {};
  return {it->second.begin(), it->second.end()};
}

std::vector<std::string> TopologyTree::switches(SwitchLevel level) const {
  std::vector<std::string> ids;
  for (const auto& [sw, types] : free_by_type_) {
    if (sw.level == level) ids.push_back(sw.id);
  }
  return ids;
}

SwitchRef TopologyTree::ancestor(std::string_view node_id, SwitchLevel level) const {
  return chain_of(node(node_id))[static_cast<std::size_t>(level)];
}

void TopologyTree::virtual_assign(std::string_view node_id, int gpus) {
  const std::size_t i = index_of(node_id);
  if (gpus < 0) throw Error(ErrorCode::kInvalidInput, "negative assignment");
  if (gpus > node_free_[i]) {
    throw Error(ErrorCode::kInsufficientCapacity,
                fmt::format("node '{}' has {} free GPUs, {} requested", node_id, node_free_[i], gpus));
  }
  const NodeSpec& n = spec_.nodes[i];
  node_free_[i] -= gpus;
  for (const auto& sw : chain_of(n)) free_by_type_[sw][n.gpu_type] -= gpus;
}

std::vector<RdmaSubgroup> classify_subgroups(const TopologyTree& tree) {
  std::vector<RdmaSubgroup> out;
  for (const std::string& s2 : tree.switches(SwitchLevel::kS2)) {
    const SwitchRef s2_ref{SwitchLevel::kS2, s2};
    const auto s2_nodes = tree.nodes_under(s2_ref);
    const std::string cluster = tree.ancestor(s2_nodes.front(), SwitchLevel::kCluster).id;

    RdmaSubgroup residual;
    residual.id = "s2/" + s2;
    residual.anchor = s2_ref;
    residual.member_switches.push_back(s2_ref);
    residual.cluster = cluster;

    for (const std::string& s1 : tree.children(s2_ref)) {
      const SwitchRef s1_ref{SwitchLevel::kS1, s1};
      auto types = tree.gpu_types_under(s1_ref);
      auto nodes = tree.nodes_under(s1_ref);
      if (types.size() >= 2) {
        RdmaSubgroup high;
        high.id = "s1/" + s1;
        high.tier = Tier::kHigh;
        high.anchor = s1_ref;
        high.member_switches.push_back(s1_ref);
        high.gpu_types_present = std::move(types);
        high.node_ids = std::move(nodes);
        high.cluster = cluster;
        out.push_back(std::move(high));
      } else {
        residual.member_switches.push_back(s1_ref);
        residual.gpu_types_present.insert(types.begin(), types.end());
        residual.node_ids.insert(residual.node_ids.end(), nodes.begin(), nodes.end());
      }
    }
    std::sort(residual.node_ids.begin(), residual.node_ids.end());
    residual.tier = residual.gpu_types_present.size() >= 2 ? Tier::kMedium : Tier::kLow;
    out.push_back(std::move(residual));
  }
  std::sort(out.begin(), out.end(), [](const RdmaSubgroup& a, const RdmaSubgroup& b) { return a.id < b.id; });
  return out;
}

int subgroup_free(const TopologyTree& tree, const RdmaSubgroup& sg, std::string_view gpu_type) {
  int total = 0;
  for (const auto& id : sg.node_ids) {
    if (tree.node(id).gpu_type == gpu_type) total += tree.node_free(id);
  }
  return total;
}

std::string serialize_subgroups(const std::vector<RdmaSubgroup>& subgroups) {
  std::string out;
  for (const auto& sg : subgroups) {
    std::vector<std::string> members;
    for (const auto& m : sg.member_switches) members.push_back(fmt::format("{}:{}", switch_level_name(m.level), m.id));
    out += fmt::format("{} tier={} cluster={} members={} types={} nodes={}\n", sg.id, tier_name(sg.tier), sg.cluster,
                       fmt::join(members, ","), fmt::join(sg.gpu_types_present, ","), fmt::join(sg.node_ids, ","));
  }
  return out;
}

ClusterSpec parse_cluster(std::istream& in) {
  ClusterSpec spec;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto record = text::parse_record(line, line_no);
    if (!record) continue;
    if (record->kind == "gpu_type") {
      text::FieldReader r(*record, line_no, {"name", "compute_score", "mem_bw_score", "hbm_capacity"});
      GpuType g;
      g.name = r.str("name");
      g.compute_score = r.number("compute_score");
      g.mem_bw_score = r.number("mem_bw_score");
      g.hbm_capacity_gb = r.number("hbm_capacity");
      spec.gpu_types.push_back(std::move(g));
    } else if (record->kind == "node") {
      text::FieldReader r(*record, line_no, {"node_id", "gpu_type", "gpu_count", "s0", "s1", "s2", "cluster", "vdc"});
      NodeSpec n;
      n.node_id = r.str("node_id");
      n.gpu_type = r.str("gpu_type");
      n.gpu_count = r.integer("gpu_count");
      n.s0 = r.str("s0");
      n.s1 = r.str("s1");
      n.s2 = r.str("s2");
      n.cluster = r.str("cluster");
      n.vdc = r.str("vdc");
      spec.nodes.push_back(std::move(n));
    } else {
      throw Error(ErrorCode::kParseError, fmt::format("line {}: unknown record '{}'", line_no, record->kind), line_no);
    }
  }
  return spec;
}

ClusterSpec load_cluster(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("cannot open cluster file '{}'", path));
  return parse_cluster(in);
}

void write_cluster(std::ostream& out, const ClusterSpec& spec) {
  for (const auto& g : spec.gpu_types) {
    out << fmt::format("gpu_type name={} compute_score={} mem_bw_score={} hbm_capacity={}\n", g.name, g.compute_score,
                       g.mem_bw_score, g.hbm_capacity_gb);
  }
  for (const auto& n : spec.nodes) {
    out << fmt::format("node node_id={} gpu_type={} gpu_count={} s0={} s1={} s2={} cluster={} vdc={}\n", n.node_id,
                       n.gpu_type, n.gpu_count, n.s0, n.s1, n.s2, n.cluster, n.vdc);
  }
}

}  // namespace hetscale::topology
