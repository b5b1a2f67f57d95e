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

#include "hetscale/driver.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include <fmt/format.h>

#include "hetscale/error.h"

namespace hetscale::driver {

using policy::Action;
using servicesim::Instance;
using servicesim::InstanceState;
using servicesim::Role;

const ServiceReport& SimReport::service(std::string_view id) const {
  for (const auto& s : services) {
    if (s.service_id == id) return s;
  }
  throw Error(ErrorCode::kInvalidInput, fmt::format("no service '{}' in report", id));
}

policy::ServiceCounts static_provision(const ServiceConfig& service, const topology::ClusterSpec& cluster) {
  const auto& p = service.profile;
  const auto& pol = service.policy;
  double rate = 0;
  if (pol.kind == policy::PolicyKind::kProportional && pol.metric == policy::Metric::kDecodeTps && pol.target > 0) {
    rate = pol.target;
  } else {
    const auto* type = cluster.find_gpu_type(service.affinity.decode_gpu_type);
    const double score = type ? type->mem_bw_score : p.reference_mem_bw_score;
    rate = p.decode_cap_per_inst * score / p.reference_mem_bw_score * (1 - p.tbt_base / p.slo_tbt);
  }
  double peak = 0;
  for (const auto& pt : service.trace.points) peak = std::max(peak, workload::demand_of(pt).decode_token_rate);
  // Whole ratio blocks, so the deployment splits into placeable units.
  const int block = pol.pd_ratio.decode / std::gcd(pol.pd_ratio.prefill, pol.pd_ratio.decode);
  int decode = std::max(1, static_cast<int>(std::ceil(peak / rate - 1e-9)));
  decode = (decode + block - 1) / block * block;
  return policy::apply_pd_ratio(decode, pol.pd_ratio, pol.bounds);
}

int count_reversals(const std::vector<Action>& actions) {
  int n = 0;
  Action prev = Action::kNoChange;
  for (Action a : actions) {
    if (a == Action::kNoChange) continue;
    if (prev != Action::kNoChange && a != prev) ++n;
    prev = a;
  }
  return n;
}

namespace {

struct Tally {
  int held_p = 0, held_d = 0, active_p = 0, active_d = 0, ready_p = 0, ready_d = 0, reg_p = 0, reg_d = 0, gpus = 0;
};

Tally tally(const std::vector<Instance>& instances, std::string_view service_id) {
  Tally t;
  for (const auto& i : instances) {
    if (i.service_id != service_id || !servicesim::holds_gpus(i)) continue;
    const bool pre = i.role == Role::kPrefill;
    (pre ? t.held_p : t.held_d)++;
    if (servicesim::is_active(i)) (pre ? t.active_p : t.active_d)++;
    if (i.state == InstanceState::kReady) (pre ? t.ready_p : t.ready_d)++;
    if (servicesim::serves_load(i)) (pre ? t.reg_p : t.reg_d)++;
    t.gpus += i.gpus;
  }
  return t;
}

std::vector<Instance> instances_of(const std::vector<Instance>& all, std::string_view service_id) {
  std::vector<Instance> out;
  for (const auto& i : all) {
    if (i.service_id == service_id) out.push_back(i);
  }
  return out;
}

double placement_penalty(const scheduler::SchedulerState& state, std::string_view service_id) {
  std::map<std::string, servicesim::GroupPlacement> groups;
  for (const auto& i : state.instances) {
    if (i.service_id != service_id || !servicesim::serves_load(i)) continue;
    auto& g = groups[i.group_id];
    (i.role == Role::kPrefill ? g.prefill_s2 : g.decode_s2).push_back(i.s2);
  }
  std::vector<servicesim::GroupPlacement> list;
  for (auto& [_, g] : groups) list.push_back(std::move(g));
  return servicesim::kv_transfer_penalty(list);
}

long trace_ticks(const workload::WorkloadTrace& trace) {
  return trace.points.empty() ? 0 : trace.points.back().t + 1;
}

Event allocation_event(long t, const scheduler::Allocation& a) {
  Event e;
  e.t = t;
  e.service_id = a.service_id;
  e.kind = "allocation";
  e.action = scheduler::request_type_name(a.type);
  e.prefill_from = a.prefill_requested;
  e.decode_from = a.decode_requested;
  e.prefill_to = a.prefill_count();
  e.decode_to = a.decode_count();
  e.group_id = a.group_id;
  e.subgroup_id = a.subgroup_id;
  e.tier = a.subgroup_id.empty() ? "" : topology::tier_name(a.tier);
  e.status = scheduler::allocation_status_name(a.status);
  return e;
}

void summarize(ServiceReport& r, const std::vector<Action>& actions, const std::string& policy_name,
               double tick_seconds) {
  auto& s = r.summary;
  s.service_id = r.service_id;
  s.policy_name = policy_name;
  s.scaling_actions = static_cast<int>(actions.size());
  s.reversals = count_reversals(actions);
  if (r.rows.empty()) return;
  int violations = 0;
  s.min_decode_count = r.rows.front().active_decode;
  for (const auto& row : r.rows) {
    s.gpu_hours += (row.prefill_count * r.gpus_per_prefill + row.decode_count * r.gpus_per_decode) * tick_seconds / 3600.0;
    s.mean_prefill_util += row.metrics.prefill_gpu_util;
    s.mean_decode_util += row.metrics.decode_gpu_util;
    s.served_decode_tokens += row.metrics.decode_tps * tick_seconds;
    s.mean_decode_count += row.active_decode;
    s.min_decode_count = std::min(s.min_decode_count, row.active_decode);
    s.max_decode_count = std::max(s.max_decode_count, row.active_decode);
    violations += row.slo_violated ? 1 : 0;
  }
  const double n = static_cast<double>(r.rows.size());
  s.mean_prefill_util /= n;
  s.mean_decode_util /= n;
  s.mean_decode_count /= n;
  s.slo_violation_fraction = violations / n;
}

struct Runtime {
  const ServiceConfig* cfg;
  policy::PolicyEngine engine;
  std::deque<servicesim::MetricsSample> window;
  ServiceReport report;
  std::vector<Action> actions;
};

void resolve_initial_counts(RunConfig& config) {
  for (auto& svc : config.services) {
    if (svc.initial_prefill > 0 && svc.initial_decode > 0) continue;
    const auto c = static_provision(svc, config.cluster);
    svc.initial_prefill = c.prefill;
    svc.initial_decode = c.decode;
  }
}

std::size_t service_index(const RunConfig& config, const std::string& service_id) {
  for (std::size_t i = 0; i < config.services.size(); ++i) {
    if (config.services[i].id == service_id) return i;
  }
  throw Error(ErrorCode::kConfigError, fmt::format("no service '{}' in config", service_id));
}

}  // namespace

SimReport run_simulation(const RunConfig& input) {
  RunConfig config = input;
  resolve_initial_counts(config);

  long ticks = config.ticks;
  for (const auto& svc : config.services) {
    const long len = trace_ticks(svc.trace);
    if (len == 0) throw Error(ErrorCode::kConfigError, fmt::format("service '{}' has an empty trace", svc.id));
    if (config.ticks == 0) ticks = std::max(ticks, len);
  }
  for (const auto& svc : config.services) {
    if (ticks > trace_ticks(svc.trace)) {
      throw Error(ErrorCode::kConfigError,
                  fmt::format("run of {} ticks is longer than the trace of '{}' ({} ticks)", ticks, svc.id,
                              trace_ticks(svc.trace)));
    }
  }

  const auto subgroups = topology::classify_subgroups(topology::build_tree(config.cluster));
  scheduler::SchedulerState state;
  SimReport report;
  report.tick_seconds = config.tick_seconds;

  std::vector<Runtime> rt;
  rt.reserve(config.services.size());
  for (const auto& svc : config.services) {
    Runtime r{&svc, policy::PolicyEngine(svc.policy), {}, {}, {}};
    r.report.service_id = svc.id;
    r.report.gpus_per_prefill = svc.profile.gpus_per_prefill_inst;
    r.report.gpus_per_decode = svc.profile.gpus_per_decode_inst;
    rt.push_back(std::move(r));
  }

  // Initial deployment, Ready and registered at t = 0.
  {
    std::vector<scheduler::ScalingRequest> requests;
    for (const auto& svc : config.services) {
      requests.push_back({svc.id, scheduler::RequestType::kScaleOut, svc.initial_prefill, svc.initial_decode,
                          svc.priority, svc.affinity});
    }
    auto tree = topology::build_tree(config.cluster);
    const auto allocs = scheduler::schedule_cycle(requests, tree, subgroups, state);
    for (const auto& svc : config.services) {
      int p = 0, d = 0;
      for (const auto& a : allocs) {
        if (a.service_id != svc.id) continue;
        p += a.prefill_count();
        d += a.decode_count();
      }
      if (p != svc.initial_prefill || d != svc.initial_decode) {
        throw Error(ErrorCode::kConfigError,
                    fmt::format("initial deployment of '{}' ({}P/{}D) does not fit the cluster", svc.id,
                                svc.initial_prefill, svc.initial_decode));
      }
    }
    scheduler::apply_allocations(state, allocs, config.cluster, 0);
    for (auto& i : state.instances) {
      i.state = InstanceState::kReady;
      i.registered = true;
    }
  }

  for (long t = 0; t < ticks; ++t) {
    try {
      const int minute = static_cast<int>((config.start_minute + static_cast<long>(t * config.tick_seconds / 60.0)) % 1440);
      servicesim::advance_lifecycle(state.instances, t, config.startup);
      for (auto& r : rt) scheduler::discovery_gate(state, r.cfg->id, r.cfg->policy.pd_ratio, r.cfg->gate_tolerance);

      std::vector<scheduler::ScalingRequest> requests;
      std::vector<TickRow> rows(rt.size());
      for (std::size_t k = 0; k < rt.size(); ++k) {
        auto& r = rt[k];
        const auto& svc = *r.cfg;
        const auto demand = workload::demand_at(svc.trace, t);
        const double penalty = placement_penalty(state, svc.id);
        const auto m = servicesim::step_metrics(svc.profile, demand, instances_of(state.instances, svc.id), penalty, t);
        auto& row = rows[k];
        row.metrics = m;
        row.demand_decode_tps = demand.decode_token_rate;
        row.demand_prefill_tps = demand.prefill_token_rate;
        row.placement_penalty = penalty;
        row.slo_violated = m.ttft > svc.profile.slo_ttft || m.tbt > svc.profile.slo_tbt;
        const auto before = tally(state.instances, svc.id);
        row.ready_prefill = before.ready_p;
        row.ready_decode = before.ready_d;
        row.registered_prefill = before.reg_p;
        row.registered_decode = before.reg_d;

        r.window.push_back(m);
        while (static_cast<int>(r.window.size()) > svc.slo_window) r.window.pop_front();
        double ttft = 0, tbt = 0;
        for (const auto& w : r.window) {
          ttft += w.ttft;
          tbt += w.tbt;
        }
        const double n = static_cast<double>(r.window.size());
        const bool breach = ttft / n > svc.profile.slo_ttft || tbt / n > svc.profile.slo_tbt;
        const auto drained = scheduler::update_soft_drain(state, svc.id, breach, t, svc.soft_drain_ticks);
        auto drain_event = [&](const char* kind, long id) {
          Event e;
          e.t = t;
          e.service_id = svc.id;
          e.kind = kind;
          e.cause = "instance";
          e.cause_value = static_cast<double>(id);
          report.events.push_back(e);
        };
        for (long id : drained.reinstated) drain_event("reinstate", id);
        for (long id : drained.terminated) drain_event("terminate", id);

        const auto now = tally(state.instances, svc.id);
        const policy::ServiceCounts current{now.active_p, now.active_d};
        const auto d = r.engine.step(m, current, t, minute);
        if (d.action == Action::kNoChange) continue;
        r.actions.push_back(d.action);
        Event e;
        e.t = t;
        e.service_id = svc.id;
        e.kind = "decision";
        e.action = policy::action_name(d.action);
        e.prefill_from = d.current.prefill;
        e.decode_from = d.current.decode;
        e.prefill_to = d.target.prefill;
        e.decode_to = d.target.decode;
        e.cause = d.cause;
        e.cause_value = d.cause_value;
        report.events.push_back(e);

        const int dp = d.target.prefill - d.current.prefill;
        const int dd = d.target.decode - d.current.decode;
        if (dp > 0 || dd > 0) {
          requests.push_back({svc.id, scheduler::RequestType::kScaleOut, std::max(dp, 0), std::max(dd, 0), svc.priority,
                              svc.affinity});
        }
        if (dp < 0 || dd < 0) {
          requests.push_back({svc.id, scheduler::RequestType::kScaleIn, std::max(-dp, 0), std::max(-dd, 0),
                              svc.priority, svc.affinity});
        }
      }

      auto tree = topology::build_tree(config.cluster, scheduler::gpus_in_use(state));
      const auto allocs = scheduler::schedule_cycle(requests, tree, subgroups, state);
      scheduler::apply_allocations(state, allocs, config.cluster, t);
      for (const auto& a : allocs) report.events.push_back(allocation_event(t, a));
      std::erase_if(state.instances, [](const Instance& i) { return !servicesim::holds_gpus(i); });

      for (std::size_t k = 0; k < rt.size(); ++k) {
        const auto after = tally(state.instances, rt[k].cfg->id);
        auto& row = rows[k];
        row.prefill_count = after.held_p;
        row.decode_count = after.held_d;
        row.active_prefill = after.active_p;
        row.active_decode = after.active_d;
        row.gpus_held = after.gpus;
        rt[k].report.rows.push_back(row);
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfigError) throw;
      throw Error(e.code(), fmt::format("tick {}: {}", t, e.what()), e.line(), e.field());
    }
  }

  for (auto& r : rt) {
    summarize(r.report, r.actions, r.cfg->policy_name, config.tick_seconds);
    report.services.push_back(std::move(r.report));
  }
  return report;
}

std::vector<ComparisonRow> compare_policies(const RunConfig& input, const std::vector<std::string>& policy_names,
                                            const std::string& service_id) {
  if (policy_names.size() < 2) throw Error(ErrorCode::kInvalidInput, "compare needs at least two policies");
  RunConfig base = input;
  resolve_initial_counts(base);
  const std::size_t idx = service_index(base, service_id);

  std::vector<ComparisonRow> rows;
  for (const auto& name : policy_names) {
    auto it = base.policies.find(name);
    if (it == base.policies.end()) throw Error(ErrorCode::kConfigError, fmt::format("policy '{}' is not defined", name));
    RunConfig run = base;
    run.services[idx].policy = it->second;
    run.services[idx].policy_name = name;
    const auto report = run_simulation(run);
    rows.push_back({name, report.service(service_id).summary});
  }
  return rows;
}

policy::CandidateOutcome outcome_of(const ServiceSummary& s) {
  return {s.served_decode_tokens, s.gpu_hours, s.slo_violation_fraction};
}

policy::CurationResult curate(const RunConfig& config, const std::string& service_id) {
  const std::size_t idx = service_index(config, service_id);
  const auto& svc = config.services[idx];
  auto options = config.curation.pressure;
  if (options.ratios.empty()) {
    options.ratios = {{1, 5}, {1, 3}, {1, 2}, {2, 3}, {1, 1}, {3, 2}, {2, 1}, {3, 1}, {5, 1}};
  }
  std::vector<policy::PolicyConfig> candidates;
  for (const auto& name : config.curation.candidates) candidates.push_back(config.policies.at(name));
  if (candidates.empty()) candidates.push_back(svc.policy);

  auto simulate = [&](const policy::PolicyConfig& p) {
    RunConfig run = config;
    run.services[idx].policy = p;
    run.services[idx].policy_name = p.name;
    return outcome_of(run_simulation(run).service(service_id).summary);
  };
  return policy::curate_policy(svc.profile, svc.trace, candidates, options, config.curation.slo_violation_budget,
                               simulate);
}

}  // namespace hetscale::driver
