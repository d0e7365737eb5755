#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dynafilter/config.hpp"
#include "dynafilter/dyna.hpp"
#include "dynafilter/errors.hpp"

namespace dynafilter {

/// Column order is part of the file format; downstream plots key on it.
inline std::string metrics_csv_header() {
  return "real_steps,episode,eval_return_mean,eval_return_std,kept_count,"
         "rejected_count,eps_k,model_nll,wallclock_ms";
}

inline std::string metrics_csv_row(const EvalPoint& p) {
  std::string out;
  out += std::to_string(p.real_steps);
  out += "," + std::to_string(p.episode);
  out += "," + fmt_double(p.eval_return_mean);
  out += "," + fmt_double(p.eval_return_std);
  out += "," + std::to_string(p.kept_count);
  out += "," + std::to_string(p.rejected_count);
  out += "," + fmt_double(p.eps_k);
  out += "," + fmt_double(p.model_nll);
  out += "," + fmt_double(p.wallclock_ms);
  return out;
}

inline void write_metrics_csv(const std::string& path, const std::vector<EvalPoint>& evals) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << metrics_csv_header() << "\n";
  for (const auto& p : evals) out << metrics_csv_row(p) << "\n";
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out;
}

/// One JSON object per real env step. Hand-rolled on purpose: the schema is
/// five fixed fields and the formatting must match fmt_double exactly.
inline void write_trace_jsonl(const std::string& path, const RunTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  for (const auto& s : trace.steps) {
    out << "{\"step\":" << s.real_steps << ",\"episode\":" << s.episode
        << ",\"step_in_episode\":" << s.step_in_episode << ",\"generated\":" << s.generated
        << ",\"kept\":" << s.kept << ",\"eps_k\":" << fmt_double(s.eps_k) << "}\n";
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << text;
}

/**
 * Mean and 95% normal-approximation confidence halfwidth across seeds,
 * row-aligned: all runs share the config, hence the same eval cadence.
 */
inline void write_aggregate_csv(const std::string& path,
                                const std::vector<std::vector<EvalPoint>>& per_seed) {
  if (per_seed.empty()) throw EmptyBufferError("aggregate needs at least one run");
  std::size_t rows = per_seed.front().size();
  for (const auto& run : per_seed)
    if (run.size() != rows)
      throw DimensionError("aggregate: runs have different eval counts");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << "real_steps,episode,eval_return_mean,eval_return_ci95,kept_count_mean,"
         "rejected_count_mean\n";
  double n = static_cast<double>(per_seed.size());
  for (std::size_t i = 0; i < rows; ++i) {
    double mean = 0.0, kept = 0.0, rej = 0.0;
    for (const auto& run : per_seed) {
      mean += run[i].eval_return_mean;
      kept += static_cast<double>(run[i].kept_count);
      rej += static_cast<double>(run[i].rejected_count);
    }
    mean /= n;
    kept /= n;
    rej /= n;
    double var = 0.0;
    for (const auto& run : per_seed) {
      double d = run[i].eval_return_mean - mean;
      var += d * d;
    }
    double ci = per_seed.size() > 1 ? 1.96 * std::sqrt(var / (n - 1.0) / n) : 0.0;
    out << per_seed.front()[i].real_steps << "," << per_seed.front()[i].episode << ","
        << fmt_double(mean) << "," << fmt_double(ci) << "," << fmt_double(kept) << ","
        << fmt_double(rej) << "\n";
  }
}

}  // namespace dynafilter
