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

#include "hetscale/workload.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "hetscale/error.h"
#include "text_fields.h"

namespace hetscale::workload {

namespace {

constexpr const char* kTraceHeader = "t,arrival_rate,mean_input_len,mean_output_len,kv_cache_hit_rate";

double bump_sum(const DiurnalParams& p, double t) {
  double g = 0;
  for (std::size_t i = 0; i < p.peak_times.size(); ++i) {
    const double w = p.peak_weights.empty() ? 1.0 : p.peak_weights[i];
    const double z = (t - p.peak_times[i]) / p.peak_width_ticks;
    g += w * std::exp(-0.5 * z * z);
  }
  return g;
}

double bump_max(const DiurnalParams& p) {
  double m = 0;
  for (int t = 0; t < p.duration_ticks; ++t) m = std::max(m, bump_sum(p, t));
  return m;
}

// Uniform in [-1, 1] from the raw engine output, independent of the
// standard library's distribution implementations.
double symmetric_unit(std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

void check_shape(const DiurnalParams& p) {
  if (p.duration_ticks <= 0) throw Error(ErrorCode::kInvalidShape, "duration must be positive");
  if (!(p.tick_seconds > 0)) throw Error(ErrorCode::kInvalidShape, "tick_seconds must be positive");
  if (!(p.base_rate > 0) || !(p.peak_rate >= p.base_rate)) {
    throw Error(ErrorCode::kInvalidShape, "need peak_rate >= base_rate > 0");
  }
  if (p.peak_times.empty()) throw Error(ErrorCode::kInvalidShape, "at least one peak is required");
  if (!p.peak_weights.empty() && p.peak_weights.size() != p.peak_times.size()) {
    throw Error(ErrorCode::kInvalidShape, "peak_weights must match peak_times");
  }
  for (double w : p.peak_weights) {
    if (!(w > 0)) throw Error(ErrorCode::kInvalidShape, "peak weights must be positive");
  }
  for (double t : p.peak_times) {
    if (t < 0 || t >= p.duration_ticks) {
      throw Error(ErrorCode::kInvalidShape, fmt::format("peak at tick {} outside [0, {})", t, p.duration_ticks));
    }
  }
  if (!(p.peak_width_ticks > 0)) throw Error(ErrorCode::kInvalidShape, "peak width must be positive");
  if (p.noise_amplitude < 0 || p.noise_amplitude >= 1) {
    throw Error(ErrorCode::kInvalidShape, "noise amplitude must be in [0, 1)");
  }
  if (!(p.mean_input_len > 0) || !(p.mean_output_len > 0) || p.kv_cache_hit_rate < 0 || p.kv_cache_hit_rate > 1 ||
      p.hit_rate_noise < 0) {
    throw Error(ErrorCode::kInvalidShape, "invalid request-length or cache-hit parameters");
  }
}

}  // namespace

double diurnal_curve(const DiurnalParams& params, double t) {
  const double scale = (params.peak_rate - params.base_rate) / bump_max(params);
  return params.base_rate + scale * bump_sum(params, t);
}

WorkloadTrace gen_diurnal_trace(const DiurnalParams& p) {
  check_shape(p);
  const double scale = (p.peak_rate - p.base_rate) / bump_max(p);
  std::mt19937_64 rng(p.noise_seed);

  WorkloadTrace trace;
  trace.tick_seconds = p.tick_seconds;
  trace.points.reserve(p.duration_ticks);
  for (int t = 0; t < p.duration_ticks; ++t) {
    const double analytic = p.base_rate + scale * bump_sum(p, t);
    // Both draws happen every tick so the rate sequence does not depend on
    // whether hit-rate noise is enabled.
    const double rate_noise = symmetric_unit(rng);
    const double hit_noise = symmetric_unit(rng);
    TracePoint pt;
    pt.t = t;
    pt.arrival_rate = p.noise_amplitude > 0 ? std::max(p.base_rate, analytic * (1.0 + p.noise_amplitude * rate_noise))
                                            : analytic;
    pt.mean_input_len = p.mean_input_len;
    pt.mean_output_len = p.mean_output_len;
    pt.kv_cache_hit_rate = std::clamp(p.kv_cache_hit_rate + p.hit_rate_noise * hit_noise, 0.0, 1.0);
    trace.points.push_back(pt);
  }
  return trace;
}

TokenDemand demand_of(const TracePoint& p) {
  TokenDemand d;
  d.raw_prefill_token_rate = p.arrival_rate * p.mean_input_len;
  d.prefill_token_rate = d.raw_prefill_token_rate * (1.0 - p.kv_cache_hit_rate);
  d.decode_token_rate = p.arrival_rate * p.mean_output_len;
  return d;
}

const TracePoint& point_at(const WorkloadTrace& trace, long t) {
  if (trace.points.empty() || t < trace.points.front().t || t > trace.points.back().t) {
    throw Error(ErrorCode::kOutOfRange, fmt::format("tick {} outside the trace", t));
  }
  auto it = std::upper_bound(trace.points.begin(), trace.points.end(), t,
                             [](long tick, const TracePoint& p) { return tick < p.t; });
  return *std::prev(it);
}

TokenDemand demand_at(const WorkloadTrace& trace, long t) { return demand_of(point_at(trace, t)); }

void validate_trace(const WorkloadTrace& trace) {
  if (!(trace.tick_seconds > 0)) throw Error(ErrorCode::kRangeError, "tick_seconds must be positive", 0, "tick_seconds");
  for (std::size_t i = 0; i < trace.points.size(); ++i) {
    const TracePoint& p = trace.points[i];
    const int line = static_cast<int>(i) + 2;
    auto fail = [&](const char* field) {
      throw Error(ErrorCode::kRangeError, fmt::format("line {}: {} out of range", line, field), line, field);
    };
    if (i > 0 && p.t <= trace.points[i - 1].t) fail("t");
    if (!(p.arrival_rate >= 0) || !std::isfinite(p.arrival_rate)) fail("arrival_rate");
    if (!(p.mean_input_len > 0) || !std::isfinite(p.mean_input_len)) fail("mean_input_len");
    if (!(p.mean_output_len > 0) || !std::isfinite(p.mean_output_len)) fail("mean_output_len");
    if (!(p.kv_cache_hit_rate >= 0 && p.kv_cache_hit_rate <= 1)) fail("kv_cache_hit_rate");
  }
}

WorkloadTrace parse_trace(std::istream& in, double tick_seconds) {
  WorkloadTrace trace;
  trace.tick_seconds = tick_seconds;
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line) || line != kTraceHeader) {
    throw Error(ErrorCode::kParseError, fmt::format("line 1: expected header '{}'", kTraceHeader), 1);
  }
  line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) {
      throw Error(ErrorCode::kParseError, fmt::format("line {}: expected 5 columns, got {}", line_no, cells.size()),
                  line_no);
    }
    TracePoint p;
    p.t = static_cast<long>(text::parse_integer(cells[0], line_no, "t"));
    p.arrival_rate = text::parse_double(cells[1], line_no, "arrival_rate");
    p.mean_input_len = text::parse_double(cells[2], line_no, "mean_input_len");
    p.mean_output_len = text::parse_double(cells[3], line_no, "mean_output_len");
    p.kv_cache_hit_rate = text::parse_double(cells[4], line_no, "kv_cache_hit_rate");
    trace.points.push_back(p);
  }
  validate_trace(trace);
  return trace;
}

WorkloadTrace load_trace(const std::string& path, double tick_seconds) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("cannot open trace '{}'", path));
  return parse_trace(in, tick_seconds);
}

void write_trace(std::ostream& out, const WorkloadTrace& trace) {
  out << kTraceHeader << '\n';
  for (const auto& p : trace.points) {
    out << fmt::format("{},{},{},{},{}\n", p.t, p.arrival_rate, p.mean_input_len, p.mean_output_len,
                       p.kv_cache_hit_rate);
  }
}

void save_trace(const std::string& path, const WorkloadTrace& trace) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot write trace '{}'", path));
  write_trace(out, trace);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("write to '{}' failed", path));
}

}  // namespace hetscale::workload
