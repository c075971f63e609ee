#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cardionl/errors.hpp"
#include "cardionl/timeloop.hpp"

namespace cardionl {

// 64-bit FNV-1a over a byte string; run identifiers are derived from the
// canonical configuration text so identical setups rerun to identical ids.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string run_id_from(const std::string& canonical) {
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << fnv1a64(canonical);
  return os.str();
}

// Shortest round-trippable decimal form.
inline std::string format_double(double v) {
  for (int prec = 6; prec <= 17; ++prec) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    if (std::stod(os.str()) == v) return os.str();
  }
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

using MetaList = std::vector<std::pair<std::string, std::string>>;

// Per-step solver log.  Layout: `# key=value` header lines, one column
// line, then one row per time step.
//   Time     step time (ms)
//   snesIts  outer nonlinear iterations
//   innerIts inner (linear / application) iterations summed over the step
//   SNEStime wall-clock seconds spent in the nonlinear solve
//   resNorm  final residual norm
inline void write_step_csv(const std::string& path, const MetaList& meta,
                           const std::vector<StepRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_step_csv: cannot open " + path);
  for (const auto& [k, v] : meta) out << "# " << k << "=" << v << "\n";
  out << "Time,snesIts,innerIts,SNEStime,resNorm\n";
  for (const StepRecord& r : records) {
    const double res =
        r.trace.residual_norms.empty() ? 0.0 : r.trace.residual_norms.back();
    out << format_double(r.time) << "," << r.trace.iterations() << "," << r.trace.total_inner()
        << "," << format_double(r.seconds) << "," << format_double(res) << "\n";
  }
  if (!out) throw IoError("write_step_csv: short write to " + path);
}

// Generic small table with the same header convention.
inline void write_table_csv(const std::string& path, const MetaList& meta,
                            const std::vector<std::string>& columns,
                            const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_table_csv: cannot open " + path);
  for (const auto& [k, v] : meta) out << "# " << k << "=" << v << "\n";
  for (std::size_t c = 0; c < columns.size(); ++c)
    out << columns[c] << (c + 1 < columns.size() ? "," : "\n");
  for (const auto& row : rows) {
    if (row.size() != columns.size())
      throw ContractError("write_table_csv: row width does not match columns");
    for (std::size_t c = 0; c < row.size(); ++c)
      out << row[c] << (c + 1 < row.size() ? "," : "\n");
  }
  if (!out) throw IoError("write_table_csv: short write to " + path);
}

}  // namespace cardionl
