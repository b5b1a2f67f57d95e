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

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "hetscale/driver.h"
#include "hetscale/error.h"
#include "text_fields.h"

namespace hetscale::driver {

namespace {

namespace pt = boost::property_tree;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::kConfigError, msg); }

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Typed access to one INI section; every key must be consumed.
class Section {
 public:
  Section(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

  const std::string& name() const { return name_; }
  bool has(const std::string& key) const { return tree_.find(key) != tree_.not_found(); }

  std::string str(const std::string& key, const std::string& def = "") {
    used_.insert(key);
    auto v = tree_.get_optional<std::string>(key);
    return v ? *v : def;
  }

  std::string required(const std::string& key) {
    if (!has(key)) config_error(fmt::format("[{}] is missing '{}'", name_, key));
    return str(key);
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const auto text = str(key);
    if (text == "inf") return std::numeric_limits<double>::infinity();
    try {
      return text::parse_double(text, 0, key);
    } catch (const Error&) {
      config_error(fmt::format("[{}] {} = '{}' is not a number", name_, key, text));
    }
  }

  long integer(const std::string& key, long def) {
    if (!has(key)) return def;
    const auto text = str(key);
    try {
      return static_cast<long>(text::parse_integer(text, 0, key));
    } catch (const Error&) {
      config_error(fmt::format("[{}] {} = '{}' is not an integer", name_, key, text));
    }
  }

  bool flag(const std::string& key, bool def) {
    if (!has(key)) return def;
    const auto text = str(key);
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    config_error(fmt::format("[{}] {} = '{}' is not a boolean", name_, key, text));
  }

  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    for (const auto& item : split_list(str(key))) {
      try {
        out.push_back(text::parse_double(item, 0, key));
      } catch (const Error&) {
        config_error(fmt::format("[{}] {} has non-numeric entry '{}'", name_, key, item));
      }
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, _] : tree_) {
      if (!used_.count(key)) config_error(fmt::format("[{}] has unknown key '{}'", name_, key));
    }
  }

 private:
  std::string name_;
  const pt::ptree& tree_;
  std::set<std::string> used_;
};

// Prefixes module errors with their config location; the code is kept.
template <typename Fn>
auto with_context(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigError) throw;
    throw Error(e.code(), fmt::format("{}: {}", where, e.what()), e.line(), e.field());
  }
}

policy::PolicyConfig read_policy(Section& s) {
  policy::PolicyConfig cfg;
  cfg.name = s.name().substr(s.name().find('.') + 1);
  const auto kind = s.str("kind", "proportional");
  auto parsed_kind = policy::parse_policy_kind(kind);
  if (!parsed_kind) config_error(fmt::format("[{}] unknown kind '{}'", s.name(), kind));
  cfg.kind = *parsed_kind;
  const auto metric = s.str("metric", cfg.kind == policy::PolicyKind::kFeedback ? "tbt" : "decode_tps");
  auto parsed_metric = policy::parse_metric(metric);
  if (!parsed_metric) config_error(fmt::format("[{}] unknown metric '{}'", s.name(), metric));
  cfg.metric = *parsed_metric;
  cfg.target = s.number("target", cfg.target);
  cfg.auto_target = s.flag("auto_target", cfg.auto_target);
  cfg.auto_target_fraction = s.number("auto_target_fraction", cfg.auto_target_fraction);
  cfg.theta_out = s.number("theta_out", cfg.theta_out);
  cfg.theta_in = s.number("theta_in", cfg.theta_in);
  cfg.cool_out = s.integer("cool_out", cfg.cool_out);
  cfg.cool_in = s.integer("cool_in", cfg.cool_in);
  cfg.alpha_out = s.number("alpha_out", cfg.alpha_out);
  cfg.beta_out = s.number("beta_out", cfg.beta_out);
  cfg.gamma_in = s.number("gamma_in", cfg.gamma_in);
  cfg.severe_step = s.number("severe_step", cfg.severe_step);
  cfg.moderate_step = s.number("moderate_step", cfg.moderate_step);
  cfg.shed_step = s.number("shed_step", cfg.shed_step);
  cfg.bounds.min_prefill = static_cast<int>(s.integer("min_prefill", cfg.bounds.min_prefill));
  cfg.bounds.max_prefill = static_cast<int>(s.integer("max_prefill", cfg.bounds.max_prefill));
  cfg.bounds.min_decode = static_cast<int>(s.integer("min_decode", cfg.bounds.min_decode));
  cfg.bounds.max_decode = static_cast<int>(s.integer("max_decode", cfg.bounds.max_decode));
  cfg.dampening = s.number("dampening", cfg.dampening);
  cfg.smoothing_window = static_cast<int>(s.integer("smoothing_window", cfg.smoothing_window));
  with_context(fmt::format("[{}]", s.name()), [&] {
    cfg.pd_ratio = policy::parse_pd_ratio(s.str("pd_ratio", "1:1"));
    if (s.has("schedule")) cfg.schedule = policy::parse_schedule(s.str("schedule"));
    policy::validate_policy(cfg);
    return 0;
  });
  s.finish();
  return cfg;
}

void read_service(Section& s, ServiceConfig& svc) {
  auto& p = svc.profile;
  svc.priority = static_cast<int>(s.integer("priority", 0));
  svc.policy_name = s.required("policy");
  svc.affinity.prefill_gpu_type = s.required("prefill_gpu_type");
  svc.affinity.decode_gpu_type = s.str("decode_gpu_type", svc.affinity.prefill_gpu_type);
  const auto scope = s.str("affinity", "same_s2");
  auto parsed_scope = scheduler::parse_affinity_scope(scope);
  if (!parsed_scope) config_error(fmt::format("[{}] unknown affinity '{}'", s.name(), scope));
  svc.affinity.scope = *parsed_scope;
  p.gpus_per_prefill_inst = static_cast<int>(s.integer("gpus_per_prefill", p.gpus_per_prefill_inst));
  p.gpus_per_decode_inst = static_cast<int>(s.integer("gpus_per_decode", p.gpus_per_decode_inst));
  svc.affinity.gpus_per_prefill = p.gpus_per_prefill_inst;
  svc.affinity.gpus_per_decode = p.gpus_per_decode_inst;
  p.prefill_cap_per_inst = s.number("prefill_capacity", p.prefill_cap_per_inst);
  p.decode_cap_per_inst = s.number("decode_capacity", p.decode_cap_per_inst);
  p.ttft_base = s.number("ttft_base", p.ttft_base);
  p.tbt_base = s.number("tbt_base", p.tbt_base);
  p.slo_ttft = s.number("slo_ttft", p.slo_ttft);
  p.slo_tbt = s.number("slo_tbt", p.slo_tbt);
  p.decode_util_floor = s.number("decode_util_floor", p.decode_util_floor);
  p.reference_compute_score = s.number("reference_compute_score", p.reference_compute_score);
  p.reference_mem_bw_score = s.number("reference_mem_bw_score", p.reference_mem_bw_score);
  p.rho_max = s.number("rho_max", p.rho_max);
  svc.initial_prefill = static_cast<int>(s.integer("initial_prefill", 0));
  svc.initial_decode = static_cast<int>(s.integer("initial_decode", 0));
  svc.gate_tolerance = s.number("gate_tolerance", svc.gate_tolerance);
  svc.soft_drain_ticks = s.integer("soft_drain_ticks", svc.soft_drain_ticks);
  svc.slo_window = static_cast<int>(s.integer("slo_window", svc.slo_window));
  s.finish();

  with_context(fmt::format("[{}]", s.name()), [&] {
    servicesim::validate_profile(p);
    return 0;
  });
  if (svc.initial_prefill < 0 || svc.initial_decode < 0) config_error(fmt::format("[{}] negative initial count", s.name()));
  if ((svc.initial_prefill == 0) != (svc.initial_decode == 0)) {
    config_error(fmt::format("[{}] set both initial_prefill and initial_decode or neither", s.name()));
  }
  if (svc.gate_tolerance < 0) config_error(fmt::format("[{}] gate_tolerance must be >= 0", s.name()));
  if (svc.soft_drain_ticks < 0) config_error(fmt::format("[{}] soft_drain_ticks must be >= 0", s.name()));
  if (svc.slo_window < 1) config_error(fmt::format("[{}] slo_window must be >= 1", s.name()));
}

void read_trace(Section& s, ServiceConfig& svc, const std::filesystem::path& dir, double tick_seconds) {
  if (s.has("file")) {
    const auto path = dir / s.str("file");
    if (!std::filesystem::exists(path)) config_error(fmt::format("[{}] trace file '{}' not found", s.name(), path.string()));
    svc.trace_file = path.string();
    s.finish();
    svc.trace = with_context(svc.trace_file, [&] { return workload::load_trace(path.string(), tick_seconds); });
    return;
  }
  workload::DiurnalParams g;
  g.tick_seconds = tick_seconds;
  g.duration_ticks = static_cast<int>(s.integer("duration", g.duration_ticks));
  g.base_rate = s.number("base_rate", g.base_rate);
  g.peak_rate = s.number("peak_rate", g.peak_rate);
  if (s.has("peak_times")) g.peak_times = s.numbers("peak_times");
  if (s.has("peak_weights")) g.peak_weights = s.numbers("peak_weights");
  g.peak_width_ticks = s.number("peak_width", g.peak_width_ticks);
  g.noise_amplitude = s.number("noise", g.noise_amplitude);
  g.mean_input_len = s.number("input_len", g.mean_input_len);
  g.mean_output_len = s.number("output_len", g.mean_output_len);
  g.kv_cache_hit_rate = s.number("kv_hit_rate", g.kv_cache_hit_rate);
  g.hit_rate_noise = s.number("hit_rate_noise", g.hit_rate_noise);
  s.finish();
  svc.generator = g;
}

}  // namespace

RunConfig parse_config(std::istream& in, const std::filesystem::path& source_dir,
                       std::optional<std::uint64_t> seed_override) {
  pt::ptree root;
  try {
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::kConfigError, fmt::format("config syntax: {}", e.message()), static_cast<int>(e.line()));
  }

  RunConfig cfg;
  cfg.source_dir = source_dir;

  std::map<std::string, const pt::ptree*> services, traces;
  for (const auto& [name, tree] : root) {
    if (tree.empty() && !tree.data().empty()) config_error(fmt::format("key '{}' outside any section", name));
    auto dot = name.find('.');
    const std::string prefix = name.substr(0, dot);
    const std::string id = dot == std::string::npos ? "" : name.substr(dot + 1);
    if (name == "run") {
      Section s(name, tree);
      cfg.ticks = s.integer("ticks", 0);
      cfg.tick_seconds = s.number("tick_seconds", cfg.tick_seconds);
      cfg.seed = static_cast<std::uint64_t>(s.integer("seed", 1));
      cfg.output_dir = s.str("output_dir", cfg.output_dir);
      cfg.start_minute = static_cast<int>(s.integer("start_minute", 0));
      cfg.startup.prefill = s.integer("startup_prefill_ticks", cfg.startup.prefill);
      cfg.startup.decode = s.integer("startup_decode_ticks", cfg.startup.decode);
      s.finish();
    } else if (name == "cluster") {
      Section s(name, tree);
      cfg.cluster_file = (source_dir / s.required("file")).string();
      s.finish();
    } else if (name == "curate") {
      Section s(name, tree);
      auto& c = cfg.curation;
      c.pressure.gpu_budget = static_cast<int>(s.integer("gpu_budget", c.pressure.gpu_budget));
      c.pressure.placement_penalty = s.number("placement_penalty", c.pressure.placement_penalty);
      c.pressure.bisection_steps = static_cast<int>(s.integer("bisection_steps", c.pressure.bisection_steps));
      c.slo_violation_budget = s.number("slo_violation_budget", c.slo_violation_budget);
      c.candidates = split_list(s.str("candidates"));
      const auto ratios = split_list(s.str("ratios"));
      with_context("[curate] ratios", [&] {
        for (const auto& r : ratios) c.pressure.ratios.push_back(policy::parse_pd_ratio(r));
        return 0;
      });
      s.finish();
    } else if (prefix == "service" && !id.empty()) {
      services[id] = &tree;
    } else if (prefix == "trace" && !id.empty()) {
      traces[id] = &tree;
    } else if (prefix == "policy" && !id.empty()) {
      Section s(name, tree);
      cfg.policies[id] = read_policy(s);
    } else {
      config_error(fmt::format("unknown section [{}]", name));
    }
  }

  if (seed_override) cfg.seed = *seed_override;
  if (cfg.tick_seconds <= 0) config_error("[run] tick_seconds must be positive");
  if (cfg.ticks < 0) config_error("[run] ticks must be >= 0");
  if (cfg.start_minute < 0 || cfg.start_minute >= 24 * 60) config_error("[run] start_minute must be in [0, 1440)");
  if (cfg.startup.prefill < 0 || cfg.startup.decode < 0) config_error("[run] startup ticks must be >= 0");
  if (cfg.cluster_file.empty()) config_error("missing [cluster] file");
  if (!std::filesystem::exists(cfg.cluster_file)) config_error(fmt::format("cluster file '{}' not found", cfg.cluster_file));
  cfg.cluster = with_context(cfg.cluster_file, [&] { return topology::load_cluster(cfg.cluster_file); });
  if (services.empty()) config_error("no [service.<id>] section");

  for (const auto& [id, tree] : services) {
    ServiceConfig svc;
    svc.id = id;
    Section s("service." + id, *tree);
    read_service(s, svc);
    for (const auto* type : {&svc.affinity.prefill_gpu_type, &svc.affinity.decode_gpu_type}) {
      if (!cfg.cluster.find_gpu_type(*type)) config_error(fmt::format("[service.{}] unknown GPU type '{}'", id, *type));
    }
    auto pol = cfg.policies.find(svc.policy_name);
    if (pol == cfg.policies.end()) config_error(fmt::format("[service.{}] policy '{}' is not defined", id, svc.policy_name));
    svc.policy = pol->second;
    auto tr = traces.find(id);
    if (tr == traces.end()) config_error(fmt::format("[service.{}] has no [trace.{}] section", id, id));
    Section ts("trace." + id, *tr->second);
    read_trace(ts, svc, source_dir, cfg.tick_seconds);
    traces.erase(tr);
    cfg.services.push_back(std::move(svc));
  }
  if (!traces.empty()) config_error(fmt::format("[trace.{}] has no matching service", traces.begin()->first));
  for (const auto& name : cfg.curation.candidates) {
    if (!cfg.policies.count(name)) config_error(fmt::format("[curate] candidate '{}' is not defined", name));
  }

  regenerate_traces(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) config_error(fmt::format("cannot open config '{}'", path.string()));
  std::optional<std::uint64_t> seed;
  if (const char* env = std::getenv("HETSCALE_SEED"); env && *env) {
    try {
      seed = static_cast<std::uint64_t>(text::parse_integer(env, 0, "HETSCALE_SEED"));
    } catch (const Error&) {
      config_error(fmt::format("HETSCALE_SEED='{}' is not an integer", env));
    }
  }
  return parse_config(in, path.parent_path(), seed);
}

void regenerate_traces(RunConfig& config) {
  for (std::size_t i = 0; i < config.services.size(); ++i) {
    auto& svc = config.services[i];
    if (!svc.generator) continue;
    svc.generator->noise_seed = config.seed + i;
    svc.trace = with_context(fmt::format("[trace.{}]", svc.id), [&] { return workload::gen_diurnal_trace(*svc.generator); });
  }
}

}  // namespace hetscale::driver
