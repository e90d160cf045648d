#pragma once

#include <cstdio>
#include <json.hpp>
#include <ostream>
#include <span>
#include <string>

namespace treespread::io {

// 17 significant digits, '.' decimal point regardless of locale settings
// (snprintf uses the "C" locale unless the program calls setlocale).
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv_row(std::ostream& os, std::span<const std::string> cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) os << ',';
    os << cells[i];
  }
  os << '\n';
}

// Leading comment line that makes CSV outputs self-describing.
inline void write_csv_config(std::ostream& os, const nlohmann::json& config) {
  if (!config.is_null()) os << "# config: " << config.dump() << '\n';
}

}  // namespace treespread::io
