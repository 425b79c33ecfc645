#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwsgd/inference.hpp"
#include "rwsgd/ingest.hpp"
#include "rwsgd/simulate.hpp"

namespace rwsgd {

using json = nlohmann::json;

inline std::vector<double> to_std(const ParamVector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

inline std::string coordinate_name(const InferenceReport& r, Index j) {
  if (static_cast<std::size_t>(j) < r.names.size()) return r.names[static_cast<std::size_t>(j)];
  return "theta" + std::to_string(j + 1);
}

inline json report_to_json(const InferenceReport& r) {
  json j;
  std::vector<std::string> names;
  for (Index k = 0; k < r.point.size(); ++k) names.push_back(coordinate_name(r, k));
  j["names"] = names;
  j["point"] = to_std(r.point);
  j["se"] = to_std(r.se);
  j["ci_lower"] = to_std(r.ci_lower);
  j["ci_upper"] = to_std(r.ci_upper);
  j["level"] = r.level;
  j["method"] = to_string(r.method);
  j["n_total"] = r.n_total;
  j["n_used"] = r.n_used;
  j["covariance"] = matrix_to_json(r.covariance);
  if (r.replicate_averages) j["replicate_averages"] = matrix_to_json(*r.replicate_averages);
  return j;
}

inline void write_report_csv_header(std::ostream& out) {
  out << "coordinate,estimate,se,ci_lower,ci_upper,method\n";
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Rows: coordinate,estimate,se,ci_lower,ci_upper,method (full precision).
inline void write_report_csv_rows(std::ostream& out, const InferenceReport& r) {
  out << std::setprecision(17);
  for (Index j = 0; j < r.point.size(); ++j) {
    out << csv_quote(coordinate_name(r, j)) << ',' << r.point[j] << ',' << r.se[j] << ','
        << r.ci_lower[j] << ',' << r.ci_upper[j] << ',' << to_string(r.method) << '\n';
  }
}

/// Human-readable "Variable / Point estimate / CI" table with 3 decimals.
inline void write_estimate_table(std::ostream& out, const InferenceReport& r) {
  std::size_t width = 8;
  for (Index j = 0; j < r.point.size(); ++j) width = std::max(width, coordinate_name(r, j).size());
  std::ostringstream level;
  level << r.level * 100.0 << "% CI";
  out << std::left << std::setw(static_cast<int>(width + 2)) << "Variable" << std::setw(16)
      << "Point estimate" << level.str() << '\n';
  for (Index j = 0; j < r.point.size(); ++j) {
    std::ostringstream est;
    std::ostringstream ci;
    est << std::fixed << std::setprecision(3) << r.point[j];
    ci << std::fixed << std::setprecision(3) << '(' << r.ci_lower[j] << ", " << r.ci_upper[j]
       << ')';
    out << std::left << std::setw(static_cast<int>(width + 2)) << coordinate_name(r, j)
        << std::setw(16) << est.str() << ci.str() << '\n';
  }
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
  out << std::setprecision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

/// Two columns: bin_left,count.
inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin_left,count\n" << std::setprecision(17);
  for (std::size_t k = 0; k < h.counts.size(); ++k) out << h.edges[k] << ',' << h.counts[k] << '\n';
}

inline json coverage_to_json(const CoverageReport& r) {
  const auto& c = r.config;
  const auto schedule = c.effective_schedule();
  json j;
  j["scenario"] = {{"name", c.name},
                   {"model", c.model.name()},
                   {"tau", c.model.tau()},
                   {"N", c.n},
                   {"p", c.p},
                   {"q", c.q},
                   {"mu", c.mu},
                   {"B", c.replicates},
                   {"burn_in", c.burn_in},
                   {"repetitions", c.repetitions},
                   {"level", c.level},
                   {"gamma", schedule.gamma},
                   {"alpha", schedule.alpha},
                   {"weights", to_string(c.weights)},
                   {"seed", c.seed}};
  j["repetitions"] = r.repetitions;
  j["truth"] = to_std(r.truth);
  j["mean_estimate"] = to_std(r.mean_estimate);
  j["empirical_se"] = to_std(r.empirical_se);
  j["rw_coverage"] = to_std(r.rw_coverage);
  j["rw_mean_se"] = to_std(r.rw_mean_se);
  j["plugin_coverage"] = r.plugin_coverage ? json(to_std(*r.plugin_coverage)) : json(nullptr);
  j["plugin_mean_se"] = r.plugin_mean_se ? json(to_std(*r.plugin_mean_se)) : json(nullptr);
  j["plugin_failures"] = r.plugin_failures;
  return j;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

/// File-system friendly version of a label.
inline std::string slug(const std::string& s) {
  std::string out;
  for (const char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') {
      out += c;
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "x" : out;
}

}  // namespace rwsgd
