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

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "hetscale/driver.h"
#include "hetscale/error.h"

namespace {

using namespace hetscale;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string pick_service(const driver::RunConfig& cfg, const std::string& requested) {
  return requested.empty() ? cfg.services.front().id : requested;
}

int cmd_run(const driver::RunConfig& cfg, const std::string& output) {
  const auto report = driver::run_simulation(cfg);
  const std::string dir = output.empty() ? cfg.output_dir : output;
  driver::emit_report(report, dir);
  driver::write_summary(std::cout, report);
  std::cerr << fmt::format("wrote {}/timeline.csv, summary.csv, events.csv\n", dir);
  return kExitOk;
}

int cmd_compare(const driver::RunConfig& cfg, const std::vector<std::string>& policies, const std::string& service,
                const std::string& output) {
  const auto rows = driver::compare_policies(cfg, policies, pick_service(cfg, service));
  driver::write_comparison(std::cout, rows);
  if (!output.empty()) {
    std::ofstream out(output);
    if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write '{}'", output));
    driver::write_comparison(out, rows);
  }
  return kExitOk;
}

void print_pressure(const policy::PressureTestResult& pr) {
  std::cout << "ratio,prefill,decode,max_arrival_rate,max_decode_tps,max_prefill_tps,breach_at_peak\n";
  for (const auto& p : pr.points) {
    std::cout << fmt::format("{},{},{},{},{},{},{}\n", policy::format_pd_ratio(p.ratio), p.counts.prefill,
                             p.counts.decode, p.max_arrival_rate, p.max_decode_tps, p.max_prefill_tps,
                             policy::slo_breach_name(p.breach_at_peak));
  }
  std::cout << fmt::format("r_opt={} m_hat={}\n", policy::format_pd_ratio(pr.r_opt), pr.m_hat);
}

int cmd_pressure(const driver::RunConfig& cfg, const std::string& service) {
  const auto id = pick_service(cfg, service);
  const auto& svc = *std::find_if(cfg.services.begin(), cfg.services.end(), [&](const auto& s) { return s.id == id; });
  auto options = cfg.curation.pressure;
  if (options.ratios.empty()) options.ratios = {{1, 5}, {1, 3}, {1, 2}, {2, 3}, {1, 1}, {3, 2}, {2, 1}, {3, 1}, {5, 1}};
  print_pressure(policy::pressure_test(svc.profile, svc.trace, options));
  return kExitOk;
}

int cmd_curate(const driver::RunConfig& cfg, const std::string& service) {
  const auto res = driver::curate(cfg, pick_service(cfg, service));
  print_pressure(res.pressure);
  std::cout << "candidate,score,served_decode_tokens,gpu_hours,slo_violation_fraction\n";
  const auto& names = cfg.curation.candidates;
  for (std::size_t i = 0; i < res.scores.size(); ++i) {
    const auto& o = res.outcomes[i];
    std::cout << fmt::format("{},{},{},{},{}\n", i < names.size() ? names[i] : std::string("service-policy"),
                             res.scores[i], o.served_tokens, o.gpu_hours, o.slo_violation_fraction);
  }
  std::cout << fmt::format("p_opt={} target={}\n", res.policy.name, res.policy.target);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hetscale: closed-loop autoscaling simulator for disaggregated LLM serving"};
  app.require_subcommand(1);

  std::string config_path, output, service;
  std::vector<std::string> policies;

  auto* run = app.add_subcommand("run", "Replay the configured services and write timeline/summary/events CSVs");
  run->add_option("config", config_path, "Run config (INI)")->required();
  run->add_option("-o,--output", output, "Output directory (default: [run] output_dir)");

  auto* compare = app.add_subcommand("compare", "Run one service under several policies from the same initial state");
  compare->add_option("config", config_path, "Run config (INI)")->required();
  compare->add_option("--policies", policies, "Policy section names (at least two)")->delimiter(',')->required();
  compare->add_option("--service", service, "Service id (default: first)");
  compare->add_option("-o,--output", output, "Also write the table to this CSV file");

  auto* curate = app.add_subcommand("curate", "Pressure-test P/D ratios and pick the best candidate policy");
  curate->add_option("config", config_path, "Run config (INI)")->required();
  curate->add_option("--service", service, "Service id (default: first)");

  auto* pressure = app.add_subcommand("pressure-test", "Sweep P/D ratios at a fixed GPU budget");
  pressure->add_option("config", config_path, "Run config (INI)")->required();
  pressure->add_option("--service", service, "Service id (default: first)");

  workload::DiurnalParams gen;
  std::string trace_out;
  auto* gen_trace = app.add_subcommand("gen-trace", "Write a synthetic diurnal workload trace");
  gen_trace->add_option("-o,--output", trace_out, "Trace CSV path")->required();
  gen_trace->add_option("--duration", gen.duration_ticks, "Ticks")->capture_default_str();
  gen_trace->add_option("--tick-seconds", gen.tick_seconds, "Seconds per tick")->capture_default_str();
  gen_trace->add_option("--base", gen.base_rate, "Trough arrival rate (req/s)")->capture_default_str();
  gen_trace->add_option("--peak", gen.peak_rate, "Peak arrival rate (req/s)")->capture_default_str();
  gen_trace->add_option("--peak-times", gen.peak_times, "Peak centres in ticks")->delimiter(',');
  gen_trace->add_option("--peak-weights", gen.peak_weights, "Relative peak heights")->delimiter(',');
  gen_trace->add_option("--width", gen.peak_width_ticks, "Peak sigma in ticks")->capture_default_str();
  gen_trace->add_option("--noise", gen.noise_amplitude, "Multiplicative noise amplitude")->capture_default_str();
  gen_trace->add_option("--seed", gen.noise_seed, "Noise seed")->capture_default_str();
  gen_trace->add_option("--input-len", gen.mean_input_len, "Mean input tokens")->capture_default_str();
  gen_trace->add_option("--output-len", gen.mean_output_len, "Mean output tokens")->capture_default_str();
  gen_trace->add_option("--kv-hit", gen.kv_cache_hit_rate, "KV-cache hit rate")->capture_default_str();
  gen_trace->add_option("--hit-noise", gen.hit_rate_noise, "Additive hit-rate noise")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (compare->parsed() && policies.size() < 2) {
    std::cerr << "compare needs at least two policies\n" << compare->help();
    return kExitUsage;
  }

  if (gen_trace->parsed()) {
    try {
      workload::save_trace(trace_out, workload::gen_diurnal_trace(gen));
      return kExitOk;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitConfig;
    }
  }

  // Errors while loading are config errors; everything after is runtime.
  driver::RunConfig cfg;
  try {
    cfg = driver::load_config(config_path);
    if (!service.empty() && std::none_of(cfg.services.begin(), cfg.services.end(),
                                         [&](const auto& s) { return s.id == service; })) {
      throw Error(ErrorCode::kConfigError, fmt::format("no service '{}' in config", service));
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(cfg, output);
    if (compare->parsed()) return cmd_compare(cfg, policies, service, output);
    if (curate->parsed()) return cmd_curate(cfg, service);
    if (pressure->parsed()) return cmd_pressure(cfg, service);
  } catch (const Error& e) {
    std::cerr << fmt::format("error ({}): {}\n", error_code_name(e.code()), e.what());
    return e.code() == ErrorCode::kConfigError ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
