#ifndef VRS_DATAIO_HPP
#define VRS_DATAIO_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "numeric.hpp"
#include "problems.hpp"

namespace vrs {

struct parse_warning {
  std::size_t line;
  std::string message;
};

struct parse_report {
  std::size_t rows_read = 0;
  std::size_t max_index_seen = 0;  // 1-based, as in the file
  std::vector<parse_warning> warnings;
};

struct parse_result {
  dataset data;
  parse_report report;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Reads LIBSVM text: one example per line, `<label> <index>:<value> ...`
/// with 1-based strictly increasing indices. Labels > 0 map to +1, all others
/// to -1. Lines whose first non-blank character is `#` are skipped, as is
/// anything after a `#` inside a line.
inline parse_result parse_libsvm(std::istream& in) {
  parse_report report;
  std::vector<std::size_t> ptr{0};
  std::vector<std::uint32_t> cols;
  std::vector<double> vals;
  std::vector<double> labels;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) {
      if (!detail::trim(raw).empty() && detail::trim(raw).front() == '#') continue;
      report.warnings.push_back({line_no, "blank line skipped"});
      continue;
    }

    std::size_t pos = 0;
    auto next_token = [&]() -> std::string_view {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      const std::size_t start = pos;
      while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
      return line.substr(start, pos - start);
    };

    const std::string_view label_tok = next_token();
    double label = 0.0;
    try {
      label = parse_double(label_tok);
    } catch (const input_error&) {
      throw parse_error(line_no, "malformed label '" + std::string(label_tok) + "'");
    }
    if (!std::isfinite(label)) throw parse_error(line_no, "non-finite label");
    if (label != 1.0 && label != -1.0 && label != 0.0)
      report.warnings.push_back({line_no, "label " + std::string(label_tok) + " mapped to " + (label > 0 ? "+1" : "-1")});
    labels.push_back(label > 0.0 ? 1.0 : -1.0);

    std::size_t last_index = 0;
    for (std::string_view tok = next_token(); !tok.empty(); tok = next_token()) {
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos || colon == 0 || colon + 1 == tok.size())
        throw parse_error(line_no, "malformed feature token '" + std::string(tok) + "'");
      std::uint64_t index = 0;
      double value = 0.0;
      try {
        index = parse_unsigned(tok.substr(0, colon));
        value = parse_double(tok.substr(colon + 1));
      } catch (const input_error&) {
        throw parse_error(line_no, "malformed feature token '" + std::string(tok) + "'");
      }
      if (index == 0) throw parse_error(line_no, "feature indices are 1-based; found 0");
      if (index > UINT32_MAX) throw parse_error(line_no, "feature index too large");
      if (!std::isfinite(value)) throw parse_error(line_no, "non-finite feature value");
      if (index <= last_index) throw parse_error(line_no, "indices not increasing");
      last_index = static_cast<std::size_t>(index);
      report.max_index_seen = std::max(report.max_index_seen, last_index);
      cols.push_back(static_cast<std::uint32_t>(index - 1));
      vals.push_back(value);
    }
    ptr.push_back(cols.size());
    ++report.rows_read;
  }
  if (in.bad()) throw input_error("read failure");
  if (labels.empty()) throw parse_error(line_no, "no examples found (empty file)");

  dataset data(report.max_index_seen, std::move(ptr), std::move(cols), std::move(vals), std::move(labels));
  return {std::move(data), std::move(report)};
}

inline parse_result parse_libsvm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open '" + path + "'");
  return parse_libsvm(in);
}

/// Writes labels as 1/-1 and values in shortest round-trip form.
inline void write_libsvm(const dataset& data, std::ostream& out) {
  std::string line;
  for (std::size_t i = 0; i < data.n(); ++i) {
    line = data.label(i) > 0 ? "1" : "-1";
    const auto r = data.row(i);
    for (std::size_t k = 0; k < r.nnz(); ++k) {
      line += ' ';
      line += std::to_string(r.index[k] + 1);
      line += ':';
      line += format_double(r.value[k]);
    }
    line += '\n';
    out << line;
  }
  out.flush();
  if (!out) throw input_error("write failure");
}

/// Uniformly random n_keep rows, survivors kept in their original order.
inline dataset subsample(const dataset& data, std::size_t n_keep, std::uint64_t seed) {
  if (n_keep < 1 || n_keep > data.n()) throw domain_error("subsample: n_keep must lie in [1, n]");
  std::vector<std::size_t> all(data.n());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> keep;
  keep.reserve(n_keep);
  auto rng = make_rng(seed, 0x5ab5);
  std::sample(all.begin(), all.end(), std::back_inserter(keep), n_keep, rng);

  std::vector<std::size_t> ptr{0};
  std::vector<std::uint32_t> cols;
  std::vector<double> vals;
  std::vector<double> labels;
  for (std::size_t i : keep) {
    const auto r = data.row(i);
    cols.insert(cols.end(), r.index.begin(), r.index.end());
    vals.insert(vals.end(), r.value.begin(), r.value.end());
    ptr.push_back(cols.size());
    labels.push_back(data.label(i));
  }
  return dataset(data.d(), std::move(ptr), std::move(cols), std::move(vals), std::move(labels));
}

/// Divides every feature column by its largest absolute value (columns that
/// are identically zero are left alone).
inline dataset scale_max_abs(const dataset& data) {
  std::vector<double> col_max(data.d(), 0.0);
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto r = data.row(i);
    for (std::size_t k = 0; k < r.nnz(); ++k) col_max[r.index[k]] = std::max(col_max[r.index[k]], std::abs(r.value[k]));
  }
  std::vector<std::size_t> ptr{0};
  std::vector<std::uint32_t> cols;
  std::vector<double> vals;
  std::vector<double> labels(data.labels().begin(), data.labels().end());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto r = data.row(i);
    for (std::size_t k = 0; k < r.nnz(); ++k) {
      cols.push_back(r.index[k]);
      const double m = col_max[r.index[k]];
      vals.push_back(m > 0.0 ? r.value[k] / m : r.value[k]);
    }
    ptr.push_back(cols.size());
  }
  return dataset(data.d(), std::move(ptr), std::move(cols), std::move(vals), std::move(labels));
}

}  // namespace vrs

#endif
