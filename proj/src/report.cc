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

#include <fstream>

#include <fmt/format.h>

#include "hetscale/driver.h"
#include "hetscale/error.h"

namespace hetscale::driver {

namespace {

constexpr const char* kSummaryHeader =
    "service,policy,gpu_hours,mean_prefill_util,mean_decode_util,slo_violation_fraction,scaling_actions,reversals,"
    "served_decode_tokens,min_decode_count,max_decode_count,mean_decode_count";

constexpr const char* kEventsHeader =
    "t,service,kind,action,prefill_from,decode_from,prefill_to,decode_to,group,subgroup,tier,status,cause,cause_value";

std::string summary_fields(const ServiceSummary& s) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{}", s.gpu_hours, s.mean_prefill_util, s.mean_decode_util,
                     s.slo_violation_fraction, s.scaling_actions, s.reversals, s.served_decode_tokens,
                     s.min_decode_count, s.max_decode_count, s.mean_decode_count);
}

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write '{}'", path.string()));
  fn(out);
  out.flush();
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("write to '{}' failed", path.string()));
}

}  // namespace

void write_timeline(std::ostream& out, const ServiceReport& report) {
  out << kTimelineHeader << '\n';
  for (const auto& r : report.rows) {
    const auto& m = r.metrics;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", m.t, m.prefill_tps, m.decode_tps,
                       m.cache_missed_prefill_tps, m.prefill_gpu_util, m.decode_gpu_util, m.prefill_sm_act,
                       m.decode_sm_act, m.ttft, m.tbt, r.prefill_count, r.decode_count);
  }
}

void write_summary(std::ostream& out, const SimReport& report) {
  out << kSummaryHeader << '\n';
  for (const auto& s : report.services) {
    out << fmt::format("{},{},{}\n", s.summary.service_id, s.summary.policy_name, summary_fields(s.summary));
  }
}

void write_events(std::ostream& out, const std::vector<Event>& events) {
  out << kEventsHeader << '\n';
  for (const auto& e : events) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", e.t, e.service_id, e.kind, e.action,
                       e.prefill_from, e.decode_from, e.prefill_to, e.decode_to, e.group_id, e.subgroup_id, e.tier,
                       e.status, e.cause, e.cause_value);
  }
}

void write_comparison(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    out << fmt::format("{},{},{}\n", r.summary.service_id, r.policy_name, summary_fields(r.summary));
  }
}

void emit_report(const SimReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, fmt::format("cannot create '{}': {}", dir.string(), ec.message()));

  if (report.services.size() == 1) {
    write_file(dir / "timeline.csv", [&](std::ostream& o) { write_timeline(o, report.services.front()); });
  } else if (report.services.empty()) {
    write_file(dir / "timeline.csv", [&](std::ostream& o) { write_timeline(o, ServiceReport{}); });
  } else {
    for (const auto& s : report.services) {
      const auto sub = dir / s.service_id;
      std::filesystem::create_directories(sub, ec);
      if (ec) throw Error(ErrorCode::kIoError, fmt::format("cannot create '{}': {}", sub.string(), ec.message()));
      write_file(sub / "timeline.csv", [&](std::ostream& o) { write_timeline(o, s); });
    }
  }
  write_file(dir / "summary.csv", [&](std::ostream& o) { write_summary(o, report); });
  write_file(dir / "events.csv", [&](std::ostream& o) { write_events(o, report.events); });
}

}  // namespace hetscale::driver
