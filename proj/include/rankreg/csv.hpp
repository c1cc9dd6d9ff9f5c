#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rankreg/data_model.hpp"

namespace rankreg {

// A required column is missing or the header is unusable.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RowError {
  std::size_t line;  // 1-based line number in the file
  std::string message;
};

// One or more rows failed validation; every bad row is listed.
class CsvError : public std::runtime_error {
 public:
  explicit CsvError(std::vector<RowError> errors)
      : std::runtime_error(summarize(errors)), errors_(std::move(errors)) {}
  const std::vector<RowError>& errors() const { return errors_; }

 private:
  static std::string summarize(const std::vector<RowError>& e) {
    std::string s = std::to_string(e.size()) + " invalid row(s)";
    if (!e.empty()) s += "; first at line " + std::to_string(e.front().line) + ": " + e.front().message;
    return s;
  }
  std::vector<RowError> errors_;
};

enum class RecordFormat { Pic, Dc };

// Column mapping.  Empty covariate list selects every column named x<digits>
// in header order.  The cluster column is optional.
struct CsvSchema {
  RecordFormat format = RecordFormat::Pic;
  std::string lower = "lower";
  std::string upper = "upper";
  std::string delta = "delta";
  std::string time = "time";
  std::string d1 = "d1";
  std::string d2 = "d2";
  std::string d3 = "d3";
  std::string cluster = "cluster";
  std::vector<std::string> covariates;
  std::string group;  // optional extra column carried through verbatim
  bool require_covariates = true;
};

struct LoadedTable {
  Dataset data;
  std::vector<std::string> covariate_names;
  bool has_cluster = false;
  std::vector<std::string> group;  // empty unless schema.group was set
};

namespace csv_detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string lower_case(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Parses a real; "inf"/"+inf"/"infinity" (any case) map to +infinity.
inline double parse_real(const std::string& tok) {
  const std::string l = lower_case(tok);
  if (l == "inf" || l == "+inf" || l == "infinity" || l == "+infinity") return kInf;
  if (l == "-inf" || l == "-infinity") return -kInf;
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty())
    throw DataError("not a number: '" + tok + "'");
  return v;
}

inline bool parse_flag(const std::string& tok) {
  const double v = parse_real(tok);
  if (v == 0.0) return false;
  if (v == 1.0) return true;
  throw DataError("indicator must be 0 or 1, got '" + tok + "'");
}

inline std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace csv_detail

inline LoadedTable parse_csv(std::istream& in, const CsvSchema& schema) {
  using namespace csv_detail;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) {
      header = split(line);
      break;
    }
  }
  if (header.empty()) throw SchemaError("empty file: no header");

  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  auto require = [&](const std::string& name) {
    auto c = find_col(name);
    if (!c) throw SchemaError("missing column '" + name + "'");
    return *c;
  };

  std::vector<std::size_t> time_cols;
  if (schema.format == RecordFormat::Pic)
    time_cols = {require(schema.lower), require(schema.upper), require(schema.delta)};
  else
    time_cols = {require(schema.time), require(schema.d1), require(schema.d2), require(schema.d3)};

  std::vector<std::string> cov_names = schema.covariates;
  if (cov_names.empty()) {
    static const std::regex pattern("x[0-9]+");
    for (const auto& h : header)
      if (std::regex_match(h, pattern)) cov_names.push_back(h);
    if (cov_names.empty() && schema.require_covariates) throw SchemaError("no covariate columns (expected x1..xp)");
  }
  std::vector<std::size_t> cov_cols;
  for (const auto& c : cov_names) cov_cols.push_back(require(c));

  const auto cluster_col = find_col(schema.cluster);
  std::optional<std::size_t> group_col;
  if (!schema.group.empty()) group_col = require(schema.group);

  std::vector<IntervalObservation> obs;
  std::vector<std::string> groups;
  std::vector<RowError> errors;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split(line);
    if (f.size() != header.size()) {
      errors.push_back({lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                    std::to_string(f.size())});
      continue;
    }
    try {
      Vector x(static_cast<Eigen::Index>(cov_cols.size()));
      for (std::size_t k = 0; k < cov_cols.size(); ++k)
        x[static_cast<Eigen::Index>(k)] = parse_real(f[cov_cols[k]]);
      std::string cl = cluster_col ? f[*cluster_col] : std::string{};
      if (schema.format == RecordFormat::Pic) {
        const double lo = parse_real(f[time_cols[0]]);
        const double hi = parse_real(f[time_cols[1]]);
        const bool d = parse_flag(f[time_cols[2]]);
        if (d && lo != hi) throw DataError("exact row needs lower == upper");
        obs.push_back(from_pic_record(d, lo, lo, hi, std::move(x), std::move(cl)));
      } else {
        obs.push_back(from_dc_record(parse_real(f[time_cols[0]]), parse_flag(f[time_cols[1]]),
                                     parse_flag(f[time_cols[2]]), parse_flag(f[time_cols[3]]),
                                     std::move(x), std::move(cl)));
      }
      if (group_col) groups.push_back(f[*group_col]);
    } catch (const DataError& e) {
      errors.push_back({lineno, e.what()});
    }
  }
  if (!errors.empty()) throw CsvError(std::move(errors));
  if (obs.empty()) throw SchemaError("empty dataset: no data rows");
  return LoadedTable{Dataset(std::move(obs)), std::move(cov_names), cluster_col.has_value(),
                     std::move(groups)};
}

inline LoadedTable load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  return parse_csv(in, schema);
}

// Writes the PIC encoding: lower,upper,delta[,cluster],covariates...
inline void write_pic_csv(std::ostream& out, const Dataset& data,
                          const std::vector<std::string>& covariate_names, bool with_cluster) {
  using csv_detail::format_real;
  out << "lower,upper,delta";
  if (with_cluster) out << ",cluster";
  for (const auto& c : covariate_names) out << ',' << c;
  out << '\n';
  for (const auto& o : data.observations()) {
    out << format_real(o.lower) << ',' << format_real(o.upper) << ',' << (o.delta ? 1 : 0);
    if (with_cluster) out << ',' << o.cluster;
    for (Eigen::Index k = 0; k < o.covariates.size(); ++k) out << ',' << format_real(o.covariates[k]);
    out << '\n';
  }
}

}  // namespace rankreg
