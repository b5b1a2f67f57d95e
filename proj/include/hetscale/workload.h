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

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace hetscale::workload {

struct TracePoint {
  long t = 0;                   // tick index
  double arrival_rate = 0;      // requests/s
  double mean_input_len = 0;    // tokens
  double mean_output_len = 0;   // tokens
  double kv_cache_hit_rate = 0; // fraction of input tokens served from cache

  bool operator==(const TracePoint&) const = default;
};

// Immutable once built; points are strictly increasing in t.
struct WorkloadTrace {
  double tick_seconds = 60.0;
  std::vector<TracePoint> points;

  bool operator==(const WorkloadTrace&) const = default;
};

// Double-peaked day: base level plus Gaussian bumps, rescaled so the highest
// tick of the noiseless curve is exactly `peak_rate`, then multiplied by
// seeded uniform noise in [1 - a, 1 + a] and floored at `base_rate`.
struct DiurnalParams {
  int duration_ticks = 1440;
  double tick_seconds = 60.0;
  double base_rate = 100.0;
  double peak_rate = 300.0;
  std::vector<double> peak_times{630.0, 930.0};  // ticks
  std::vector<double> peak_weights;              // relative bump heights, default all 1
  double peak_width_ticks = 120.0;               // Gaussian sigma
  double noise_amplitude = 0.0;
  std::uint64_t noise_seed = 1;
  double mean_input_len = 3000.0;
  double mean_output_len = 350.0;
  double kv_cache_hit_rate = 0.0;
  double hit_rate_noise = 0.0;  // additive, clipped to [0, 1]
};

// Throws InvalidShape for peaks outside the duration or a bad rate ordering.
WorkloadTrace gen_diurnal_trace(const DiurnalParams& params);

// The noiseless arrival-rate curve at tick t.
double diurnal_curve(const DiurnalParams& params, double t);

// Cache-missed prefill tokens/s and decode tokens/s. The raw prefill rate
// counts cached input tokens too.
struct TokenDemand {
  double prefill_token_rate = 0;
  double decode_token_rate = 0;
  double raw_prefill_token_rate = 0;
};

TokenDemand demand_of(const TracePoint& p);

// Step-hold lookup of the point in force at tick t. Throws OutOfRange.
const TracePoint& point_at(const WorkloadTrace& trace, long t);
TokenDemand demand_at(const WorkloadTrace& trace, long t);

// Checks point invariants; throws RangeError naming the field (line = index + 2,
// matching the CSV row).
void validate_trace(const WorkloadTrace& trace);

// CSV with header `t,arrival_rate,mean_input_len,mean_output_len,kv_cache_hit_rate`.
WorkloadTrace parse_trace(std::istream& in, double tick_seconds = 60.0);
WorkloadTrace load_trace(const std::string& path, double tick_seconds = 60.0);
void write_trace(std::ostream& out, const WorkloadTrace& trace);
void save_trace(const std::string& path, const WorkloadTrace& trace);

}  // namespace hetscale::workload
