#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rwsgd/config.hpp"
#include "rwsgd/engine.hpp"
#include "rwsgd/models.hpp"

namespace rwsgd {

/// A categorical column expanded to a full one-hot block (no reference level).
struct CategoricalSpec {
  std::string column;
  std::vector<std::string> categories;
  // When positive, the raw value is a clock time "HH[:MM[:SS]]" and is
  // relabelled to the hour bin "a-b" of this width before lookup.
  int hour_bin_width = 0;
};

struct AffineTransform {
  double center = 0.0;
  double scale = 1.0;
};

/// How CSV rows become observations. Rows with a missing or unparseable used
/// field are dropped and counted.
struct IngestionSpec {
  std::string response;
  std::vector<std::string> covariates;  // may name categorical columns
  std::vector<CategoricalSpec> categorical;
  bool intercept = false;
  bool header = true;
  char delimiter = ',';
  std::vector<std::string> missing_tokens{"", "?", "NA", "NaN", "nan"};
  std::map<std::string, double> labels;  // response label -> -1/+1
  std::map<std::string, AffineTransform> standardize;
  bool discover_categories = false;
};

struct IngestionStats {
  std::uint64_t rows_read = 0;
  std::uint64_t rows_emitted = 0;
  std::uint64_t rows_skipped = 0;
};

/// Labels for hour bins of the given width: "0-2", "3-5", ... for width 3.
inline std::vector<std::string> hour_bin_labels(int width) {
  std::vector<std::string> out;
  for (int start = 0; start < 24; start += width) {
    out.push_back(std::to_string(start) + "-" + std::to_string(std::min(start + width, 24) - 1));
  }
  return out;
}

inline std::optional<std::string> hour_bin_label(std::string_view value, int width) {
  const auto colon = value.find(':');
  const auto hour_text = value.substr(0, colon);
  int hour = -1;
  const auto [ptr, ec] = std::from_chars(hour_text.data(), hour_text.data() + hour_text.size(), hour);
  if (ec != std::errc() || ptr != hour_text.data() + hour_text.size() || hour < 0 || hour > 23) {
    return std::nullopt;
  }
  const int start = (hour / width) * width;
  return std::to_string(start) + "-" + std::to_string(std::min(start + width, 24) - 1);
}

/// Splits one CSV record. Double quotes group fields; "" is a literal quote.
inline std::vector<std::string> split_csv_line(std::string_view line, char delimiter = ',') {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline std::optional<double> parse_number(std::string_view s) {
  const auto t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const char* begin = t.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Streams observations from a delimited text file, one row at a time.
class CsvSource {
 public:
  CsvSource(const std::string& path, IngestionSpec spec, ModelKind model)
      : path_(path), spec_(std::move(spec)), model_(model), in_(path) {
    if (!in_) throw ConfigError("cannot open input '" + path + "'");
    if (spec_.response.empty()) throw ConfigError("no response column given");
    std::vector<std::string> header;
    if (spec_.header) {
      std::string line;
      if (!std::getline(in_, line)) throw DataError("input '" + path + "' is empty");
      header = split_csv_line(line, spec_.delimiter);
      for (auto& h : header) h = trim(h);
    }
    resolve_columns(header);
    if (spec_.discover_categories) discover();
    build_names();
  }

  CsvSource(const CsvSource&) = delete;
  CsvSource& operator=(const CsvSource&) = delete;

  std::optional<Observation> next() {
    std::string line;
    while (std::getline(in_, line)) {
      if (trim(line).empty()) continue;
      ++stats_.rows_read;
      if (auto z = parse_row(line)) {
        ++stats_.rows_emitted;
        return z;
      }
      ++stats_.rows_skipped;
    }
    return std::nullopt;
  }

  const std::vector<std::string>& names() const { return names_; }
  Index dim() const { return static_cast<Index>(names_.size()); }
  const IngestionStats& stats() const { return stats_; }

 private:
  struct Column {
    std::size_t index = 0;
    std::string name;
    CategoricalSpec* categorical = nullptr;
    AffineTransform transform;
  };

  std::size_t resolve(const std::vector<std::string>& header, const std::string& name) const {
    if (!header.empty()) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it != header.end()) return static_cast<std::size_t>(it - header.begin());
    }
    std::size_t idx = 0;
    const auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), idx);
    if (ec == std::errc() && ptr == name.data() + name.size() &&
        (header.empty() || idx < header.size())) {
      return idx;
    }
    throw ConfigError("unknown column '" + name + "' in '" + path_ + "'");
  }

  void resolve_columns(const std::vector<std::string>& header) {
    response_index_ = resolve(header, spec_.response);
    for (const auto& name : spec_.covariates) {
      if (name == spec_.response) {
        throw ConfigError("response column '" + name + "' is also listed as a covariate");
      }
      Column col;
      col.index = resolve(header, name);
      col.name = name;
      for (auto& cat : spec_.categorical) {
        if (cat.column == name) col.categorical = &cat;
      }
      if (auto it = spec_.standardize.find(name); it != spec_.standardize.end()) {
        if (!(it->second.scale != 0.0)) throw ConfigError("zero scale for column '" + name + "'");
        col.transform = it->second;
      }
      columns_.push_back(col);
      max_index_ = std::max(max_index_, col.index);
    }
    max_index_ = std::max(max_index_, response_index_);
    for (auto& cat : spec_.categorical) {
      if (std::find(spec_.covariates.begin(), spec_.covariates.end(), cat.column) ==
          spec_.covariates.end()) {
        throw ConfigError("categorical column '" + cat.column + "' is not a covariate");
      }
      if (cat.hour_bin_width < 0 || cat.hour_bin_width > 24) {
        throw ConfigError("hour bin width must lie in 1..24");
      }
      if (cat.categories.empty() && cat.hour_bin_width > 0) {
        cat.categories = hour_bin_labels(cat.hour_bin_width);
      }
      if (cat.categories.empty() && !spec_.discover_categories) {
        throw ConfigError("categorical column '" + cat.column +
                          "' needs declared categories or a discovery pass");
      }
    }
  }

  std::optional<std::string> category_value(const CategoricalSpec& cat,
                                            const std::string& raw) const {
    if (cat.hour_bin_width > 0) return hour_bin_label(raw, cat.hour_bin_width);
    return raw;
  }

  bool is_missing(const std::string& v) const {
    return std::find(spec_.missing_tokens.begin(), spec_.missing_tokens.end(), v) !=
           spec_.missing_tokens.end();
  }

  // Reads the whole file once to fix undeclared category sets (first-seen order).
  void discover() {
    std::ifstream scan(path_);
    std::string line;
    if (spec_.header) std::getline(scan, line);
    std::map<CategoricalSpec*, std::set<std::string>> seen;
    while (std::getline(scan, line)) {
      const auto fields = split_csv_line(line, spec_.delimiter);
      if (fields.size() <= max_index_) continue;
      for (const auto& col : columns_) {
        if (!col.categorical) continue;
        auto& cat = *col.categorical;
        if (cat.hour_bin_width > 0) continue;
        const auto v = trim(fields[col.index]);
        if (is_missing(v)) continue;
        if (seen[&cat].insert(v).second &&
            std::find(cat.categories.begin(), cat.categories.end(), v) == cat.categories.end()) {
          cat.categories.push_back(v);
        }
      }
    }
  }

  void build_names() {
    if (spec_.intercept) names_.push_back("(Intercept)");
    for (const auto& col : columns_) {
      if (col.categorical) {
        if (col.categorical->categories.empty()) {
          throw DataError("categorical column '" + col.name + "' has no categories");
        }
        for (const auto& c : col.categorical->categories) names_.push_back(col.name + " " + c);
      } else {
        names_.push_back(col.name);
      }
    }
    if (names_.empty()) throw ConfigError("no covariates selected");
  }

  std::optional<double> parse_response(const std::string& raw) const {
    if (model_.family() == ModelFamily::Logistic && !spec_.labels.empty()) {
      const auto it = spec_.labels.find(raw);
      if (it == spec_.labels.end()) {
        throw DataError("row " + std::to_string(stats_.rows_read) + ": response label '" + raw +
                        "' has no mapping");
      }
      return it->second;
    }
    const auto y = parse_number(raw);
    if (y && model_.family() == ModelFamily::Logistic && *y != 1.0 && *y != -1.0) {
      throw DataError("row " + std::to_string(stats_.rows_read) +
                      ": logistic response must be -1 or +1 (or use a label mapping)");
    }
    return y;
  }

  std::optional<Observation> parse_row(const std::string& line) const {
    const auto fields = split_csv_line(line, spec_.delimiter);
    if (fields.size() <= max_index_) return std::nullopt;
    const auto raw_y = trim(fields[response_index_]);
    if (is_missing(raw_y)) return std::nullopt;

    Observation z;
    z.x = ParamVector::Zero(static_cast<Index>(names_.size()));
    Index pos = 0;
    if (spec_.intercept) z.x[pos++] = 1.0;
    for (const auto& col : columns_) {
      const auto raw = trim(fields[col.index]);
      if (is_missing(raw)) return std::nullopt;
      if (col.categorical) {
        const auto& cats = col.categorical->categories;
        const auto label = category_value(*col.categorical, raw);
        if (!label) return std::nullopt;
        const auto it = std::find(cats.begin(), cats.end(), *label);
        if (it == cats.end()) return std::nullopt;
        z.x[pos + (it - cats.begin())] = 1.0;
        pos += static_cast<Index>(cats.size());
      } else {
        const auto v = parse_number(raw);
        if (!v) return std::nullopt;
        z.x[pos++] = (*v - col.transform.center) / col.transform.scale;
      }
    }
    const auto y = parse_response(raw_y);
    if (!y) return std::nullopt;
    z.y = *y;
    return z;
  }

  std::string path_;
  IngestionSpec spec_;
  ModelKind model_;
  std::ifstream in_;
  std::size_t response_index_ = 0;
  std::size_t max_index_ = 0;
  std::vector<Column> columns_;
  std::vector<std::string> names_;
  IngestionStats stats_;
};

/// Reads "column,center,scale" lines (optional header) for standardization.
inline std::map<std::string, AffineTransform> read_affine_transforms(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open transform file '" + path + "'");
  std::map<std::string, AffineTransform> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3) throw ConfigError("transform file lines need column,center,scale");
    const auto center = parse_number(f[1]);
    const auto scale = parse_number(f[2]);
    if (!center || !scale) {
      if (out.empty()) continue;  // header
      throw ConfigError("bad numbers in transform file line '" + line + "'");
    }
    out[trim(f[0])] = {*center, *scale};
  }
  return out;
}

}  // namespace rwsgd
