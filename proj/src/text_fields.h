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

#include <charconv>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "hetscale/error.h"

// Parsing for the `kind key=value key=value` record files.
namespace hetscale::text {

struct Record {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> fields;
};

// nullopt for blank and comment lines.
inline std::optional<Record> parse_record(const std::string& line, int line_no) {
  std::istringstream tokens(line);
  std::string tok;
  if (!(tokens >> tok) || tok.front() == '#') return std::nullopt;
  Record rec;
  rec.kind = tok;
  while (tokens >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::kParseError, fmt::format("line {}: expected key=value, got '{}'", line_no, tok), line_no);
    }
    rec.fields.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return rec;
}

inline double parse_double(const std::string& s, int line_no, const std::string& key) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw Error(ErrorCode::kParseError, fmt::format("line {}: '{}' is not a number for {}", line_no, s, key), line_no,
                key);
  }
  return v;
}

inline long long parse_integer(const std::string& s, int line_no, const std::string& key) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw Error(ErrorCode::kParseError, fmt::format("line {}: '{}' is not an integer for {}", line_no, s, key), line_no,
                key);
  }
  return v;
}

// Checks a record carries exactly the allowed keys, each once.
class FieldReader {
 public:
  FieldReader(const Record& rec, int line_no, std::initializer_list<const char*> allowed) : line_(line_no) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : rec.fields) {
      if (!ok.count(k)) {
        throw Error(ErrorCode::kParseError, fmt::format("line {}: unknown field '{}' in {}", line_no, k, rec.kind),
                    line_no, k);
      }
      if (!values_.emplace(k, v).second) {
        throw Error(ErrorCode::kParseError, fmt::format("line {}: field '{}' repeated", line_no, k), line_no, k);
      }
    }
    for (const auto& k : ok) {
      if (!values_.count(k)) {
        throw Error(ErrorCode::kParseError, fmt::format("line {}: missing field '{}' in {}", line_no, k, rec.kind),
                    line_no, k);
      }
    }
  }

  const std::string& str(const std::string& key) const { return values_.at(key); }
  double number(const std::string& key) const { return parse_double(values_.at(key), line_, key); }
  int integer(const std::string& key) const { return static_cast<int>(parse_integer(values_.at(key), line_, key)); }

 private:
  int line_;
  std::map<std::string, std::string> values_;
};

}  // namespace hetscale::text
