#ifndef VBSMC_CSV_HPP
#define VBSMC_CSV_HPP

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "vbsmc/error.hpp"
#include "vbsmc/linalg.hpp"
#include "vbsmc/var.hpp"

namespace vbsmc::csv {

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  ///< one-based file line of each row

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

/// Splits one line into trimmed cells. Cells may be double-quoted, with ""
/// standing for a literal quote inside a quoted cell.
inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t i = 0;
  while (true) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::string cell;
    if (i < line.size() && line[i] == '"') {
      ++i;
      while (i < line.size()) {
        if (line[i] == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            cell += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        cell += line[i++];
      }
      while (i < line.size() && line[i] != ',') ++i;
    } else {
      const std::size_t comma = line.find(',', i);
      const std::size_t end = comma == std::string_view::npos ? line.size() : comma;
      std::string_view raw = line.substr(i, end - i);
      while (!raw.empty() && (raw.back() == ' ' || raw.back() == '\t' || raw.back() == '\r')) raw.remove_suffix(1);
      cell = std::string(raw);
      i = end;
    }
    cells.push_back(std::move(cell));
    if (i >= line.size()) break;
    ++i;  // skip the comma
  }
  return cells;
}

/// Quotes a cell when it holds a comma or a quote.
inline std::string quote(std::string_view cell) {
  if (cell.find_first_of(",\"") == std::string_view::npos) return std::string(cell);
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// Parses comma-separated text with a header row. Blank lines are skipped;
/// every data row must have as many cells as the header.
inline Table parse(std::string_view text, std::string source) {
  Table table;
  table.source = std::move(source);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    auto cells = split_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw DataError(table.source + ": line " + std::to_string(line_no) + ": expected " +
                      std::to_string(table.header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw DataError(table.source + ": file is empty");
  return table;
}

inline Table read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

/// Parses a decimal cell; errors cite file, line and column.
inline double parse_number(const Table& table, std::size_t row, std::size_t col) {
  const std::string& cell = table.rows[row][col];
  double value = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    throw DataError(table.source + ": line " + std::to_string(table.line_numbers[row]) + ": column '" +
                    table.header[col] + "': '" + cell + "' is not a finite number");
  }
  return value;
}

/// Reads a "t,<column>" series. t must run 1, 2, ..., T.
inline std::vector<double> series_column(const Table& table, std::string_view column) {
  const auto t_col = table.column("t");
  const auto v_col = table.column(column);
  if (!t_col || !v_col) {
    throw DataError(table.source + ": header must contain columns 't' and '" + std::string(column) + "'");
  }
  if (table.rows.empty()) throw DataError(table.source + ": no data rows");
  std::vector<double> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const double t = parse_number(table, r, *t_col);
    if (t != static_cast<double>(r + 1)) {
      throw DataError(table.source + ": line " + std::to_string(table.line_numbers[r]) + ": expected t = " +
                      std::to_string(r + 1));
    }
    out.push_back(parse_number(table, r, *v_col));
  }
  return out;
}

inline std::vector<double> read_series(const std::string& path, std::string_view column) {
  return series_column(read(path), column);
}

/// Observation series ("t,z"); negative values are rejected with their line.
inline std::vector<double> read_observations(const std::string& path) {
  const Table table = read(path);
  auto values = series_column(table, "z");
  for (std::size_t r = 0; r < values.size(); ++r) {
    if (values[r] < 0.0) {
      throw DataError(path + ": line " + std::to_string(table.line_numbers[r]) + ": negative observation " +
                      format_double(values[r]));
    }
  }
  return values;
}

/// Dataset schema: header row of labels, one row per time step, empty cell = missing.
inline Dataset read_dataset(const std::string& path) {
  const Table table = read(path);
  const std::size_t n = table.header.size();
  const std::size_t steps = table.rows.size();
  if (steps == 0) throw DataError(path + ": no data rows");
  for (const auto& label : table.header)
    if (label.empty()) throw DataError(path + ": line 1: empty series label");
  Dataset d;
  d.labels = table.header;
  d.series = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(steps));
  d.missing.setConstant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(steps), false);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      const auto c = static_cast<Eigen::Index>(t);
      if (table.rows[t][k].empty()) {
        d.missing(r, c) = true;
        continue;
      }
      const double v = parse_number(table, t, k);
      if (v < 0.0) {
        throw DataError(path + ": line " + std::to_string(table.line_numbers[t]) + ": column '" +
                        table.header[k] + "': negative value " + table.rows[t][k]);
      }
      d.series(r, c) = v;
    }
  }
  return d;
}

/// Dataset without the non-negativity requirement (latent-state tables).
inline Matrix read_matrix(const std::string& path, const std::vector<std::string>& labels) {
  const Table table = read(path);
  if (table.header != labels) throw DataError(path + ": header labels do not match the dataset labels");
  Matrix out(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t t = 0; t < table.rows.size(); ++t)
    for (std::size_t k = 0; k < labels.size(); ++k)
      out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) = parse_number(table, t, k);
  return out;
}

inline std::string join(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += quote(cells[i]);
  }
  return line;
}

inline std::string write_dataset(const Dataset& d) {
  std::string out = join(d.labels) + '\n';
  for (std::size_t t = 0; t < d.steps(); ++t) {
    std::vector<std::string> cells(d.dim());
    for (std::size_t k = 0; k < d.dim(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      const auto c = static_cast<Eigen::Index>(t);
      if (!d.missing(r, c)) cells[k] = format_double(d.series(r, c));
    }
    out += join(cells) + '\n';
  }
  return out;
}

inline std::string write_matrix(const Matrix& m, const std::vector<std::string>& labels) {
  std::string out = join(labels) + '\n';
  for (Eigen::Index t = 0; t < m.cols(); ++t) {
    std::vector<std::string> cells;
    for (Eigen::Index k = 0; k < m.rows(); ++k) cells.push_back(format_double(m(k, t)));
    out += join(cells) + '\n';
  }
  return out;
}

}  // namespace vbsmc::csv

#endif
