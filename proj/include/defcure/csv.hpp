// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

// Plain comma-separated input and output. No quoting beyond stripping
// surrounding double quotes from fields; survival tables rarely need more.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "defcure/dataset.hpp"
#include "defcure/numeric.hpp"

namespace defcure {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Fixed-width-free number text used in every emitted file. Non-finite
/// values print as NA, Inf or -Inf.
inline std::string format_number(double v, int digits = 10) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

struct ColumnMapping {
  std::string time = "time";
  std::string event = "event";
  std::vector<std::string> covariates;  // empty: every other column
};

/// Parses a survival table. Rows in error messages count data rows from 1
/// (the header is not a row).
inline SurvivalDataset read_dataset(std::istream& in, const ColumnMapping& map, const std::string& source = "input") {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source + ": missing header row");
  const auto header = detail::split_fields(line);
  const auto find = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    throw ValidationError(source + ": missing column '" + name + "'");
  };
  const std::size_t time_col = find(map.time);
  const std::size_t event_col = find(map.event);
  std::vector<std::string> cov_names = map.covariates;
  if (cov_names.empty())
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != time_col && c != event_col) cov_names.push_back(header[c]);
  std::vector<std::size_t> cov_cols;
  for (const auto& name : cov_names) cov_cols.push_back(find(name));

  std::vector<double> time, cov;
  std::vector<int> event;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto fields = detail::split_fields(line);
    const auto cell = [&](std::size_t c, const std::string& name) {
      if (c >= fields.size())
        throw ValidationError(source + ": row " + std::to_string(row) + " has no value for '" + name + "'");
      const auto v = detail::parse_double(fields[c]);
      if (!v || !std::isfinite(*v))
        throw ValidationError(source + ": row " + std::to_string(row) + " column '" + name + "' is not numeric: '" +
                              fields[c] + "'");
      return *v;
    };
    const double t = cell(time_col, map.time);
    if (!(t > 0.0)) throw ValidationError(source + ": row " + std::to_string(row) + " has non-positive time");
    const double e = cell(event_col, map.event);
    if (e != 0.0 && e != 1.0) throw ValidationError(source + ": row " + std::to_string(row) + " has event outside {0,1}");
    time.push_back(t);
    event.push_back(static_cast<int>(e));
    cov.push_back(1.0);
    for (std::size_t k = 0; k < cov_cols.size(); ++k) cov.push_back(cell(cov_cols[k], cov_names[k]));
  }
  if (time.empty()) throw ValidationError(source + ": no data rows");
  std::vector<std::string> names{"(Intercept)"};
  names.insert(names.end(), cov_names.begin(), cov_names.end());
  return SurvivalDataset(std::move(time), std::move(event), std::move(cov), std::move(names));
}

inline SurvivalDataset load_dataset(const std::filesystem::path& path, const ColumnMapping& map) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_dataset(in, map, path.string());
}

/// Writes time, event and the non-intercept covariates with full precision,
/// so the file loads back to the same dataset.
inline void write_dataset(std::ostream& out, const SurvivalDataset& data) {
  const auto& names = data.covariate_names();
  out << "time,event";
  for (std::size_t k = 1; k < names.size(); ++k) out << ',' << names[k];
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << format_number(data.time(i), 17) << ',' << data.event(i);
    const auto row = data.row(i);
    for (std::size_t k = 1; k < row.size(); ++k) out << ',' << format_number(row[k], 17);
    out << '\n';
  }
}

/// Row-at-a-time CSV output to a file.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw ValidationError("cannot write " + path.string());
    row(header);
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) out_ << (k ? "," : "") << fields[k];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace defcure
