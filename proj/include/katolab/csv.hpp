// Copyright (c) 2026, katolab contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// RFC 4180 writer: CRLF records, fields quoted when they contain a comma,
// quote, CR or LF. Doubles are printed with 17 significant digits so that
// files round-trip exactly.

#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace katolab {

std::string csv_escape(std::string_view field);
std::string csv_number(double v);

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header);

  void row_fields(const std::vector<std::string>& fields);

  template <typename... Ts>
  void row(const Ts&... values) {
    std::vector<std::string> fields;
    fields.reserve(sizeof...(Ts));
    (fields.push_back(format(values)), ...);
    row_fields(fields);
  }

  std::size_t columns() const { return columns_; }

 private:
  template <typename T>
  static std::string format(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v ? "true" : "false";
    } else if constexpr (std::is_integral_v<T>) {
      return std::to_string(v);
    } else if constexpr (std::is_floating_point_v<T>) {
      return csv_number(static_cast<double>(v));
    } else {
      return std::string(v);
    }
  }

  std::ostream& out_;
  std::size_t columns_;
};

}  // namespace katolab
