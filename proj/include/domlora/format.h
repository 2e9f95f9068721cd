// Copyright 2026 The DomLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DOMLORA_FORMAT_H_
#define DOMLORA_FORMAT_H_

#include <cstdio>
#include <cstdlib>
#include <string>
#include <string_view>

namespace domlora {

// Shortest text that round-trips to the same double.
inline std::string FormatDouble(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string CsvField(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace domlora

#endif  // DOMLORA_FORMAT_H_
