#include "votereg/dataprep.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>

#include "votereg/stats.hpp"

namespace votereg {

namespace {

// RFC 4180: comma-separated, double quotes around fields that contain commas,
// quotes or newlines, embedded quotes doubled. Accepts both LF and CRLF.
std::vector<std::vector<std::string>> read_cells(std::istream& in, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  long line = 1;

  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    if (field_started || !row.empty()) {
      end_field();
      rows.push_back(std::move(row));
      row.clear();
    }
  };

  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
        if (c == '\n') ++line;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty())
          throw ParseError("unexpected quote inside unquoted field in " + path, line);
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        field_started = true;  // next field exists even if empty
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field in " + path, line);
  end_row();
  return rows;
}

double parse_number(const std::string& cell, long row, long column) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t')) --last;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last)
    throw ParseError("cell '" + cell + "' is not numeric", row, column);
  return value;
}

std::vector<std::vector<std::string>> read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  auto rows = read_cells(in, path);
  if (rows.empty()) throw ParseError("file '" + path + "' is empty");
  const std::size_t width = rows.front().size();
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].size() != width)
      throw ParseError("ragged row: expected " + std::to_string(width) + " fields, found " +
                           std::to_string(rows[r].size()),
                       static_cast<long>(r + 1));
  return rows;
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

}  // namespace

void ExpressionMatrix::validate() const {
  if (values.rows() != static_cast<Eigen::Index>(probe_ids.size()))
    throw DimensionError("probe id count does not match value rows");
  if (values.cols() != static_cast<Eigen::Index>(sample_ids.size()))
    throw DimensionError("sample id count does not match value columns");
  std::set<std::string> unique(probe_ids.begin(), probe_ids.end());
  if (unique.size() != probe_ids.size()) throw InputError("probe ids must be unique");
}

Dataset load_csv(const std::string& path, bool has_header, const ColumnRef& response_column) {
  const auto rows = read_csv_file(path);
  const std::size_t width = rows.front().size();
  if (width < 2) throw ParseError("need at least two columns (response + predictor)");

  std::vector<std::string> header;
  std::size_t first_data_row = 0;
  if (has_header) {
    header = rows.front();
    first_data_row = 1;
  }

  std::size_t response_index = 0;
  if (std::holds_alternative<std::string>(response_column)) {
    const std::string& name = std::get<std::string>(response_column);
    if (!has_header)
      throw InputError("response addressed by name needs a header row");
    const auto found = std::find(header.begin(), header.end(), name);
    if (found == header.end())
      throw ParseError("response column '" + name + "' not found in header", 1);
    response_index = static_cast<std::size_t>(found - header.begin());
  } else {
    const int index = std::get<int>(response_column);
    if (index < 0 || static_cast<std::size_t>(index) >= width)
      throw InputError("response column index " + std::to_string(index) + " out of range");
    response_index = static_cast<std::size_t>(index);
  }

  const std::size_t n = rows.size() - first_data_row;
  if (n < 2) throw ParseError("need at least two observations");
  const std::size_t p = width - 1;

  Dataset data;
  data.y.resize(static_cast<Eigen::Index>(n));
  data.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& cells = rows[r + first_data_row];
    const long file_row = static_cast<long>(r + first_data_row + 1);
    std::size_t out_col = 0;
    for (std::size_t c = 0; c < width; ++c) {
      const double value = parse_number(cells[c], file_row, static_cast<long>(c + 1));
      if (c == response_index) {
        data.y[static_cast<Eigen::Index>(r)] = value;
      } else {
        data.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(out_col++)) = value;
      }
    }
  }
  if (has_header) {
    for (std::size_t c = 0; c < width; ++c)
      if (c != response_index) data.column_names.push_back(header[c]);
  }
  data.validate();
  return data;
}

void write_dataset_csv(const Dataset& data, const std::string& path,
                       const std::string& response_name) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << csv_quote(response_name);
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    const std::string name = data.column_names.empty()
                                 ? "x" + std::to_string(j + 1)
                                 : data.column_names[static_cast<std::size_t>(j)];
    out << ',' << csv_quote(name);
  }
  out << '\n';
  char buffer[64];
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    std::snprintf(buffer, sizeof(buffer), "%.17g", data.y[i]);
    out << buffer;
    for (Eigen::Index j = 0; j < data.p(); ++j) {
      std::snprintf(buffer, sizeof(buffer), "%.17g", data.x(i, j));
      out << ',' << buffer;
    }
    out << '\n';
  }
}

ExpressionMatrix load_expression_csv(const std::string& path, bool probes_in_rows) {
  const auto rows = read_csv_file(path);
  if (rows.size() < 2 || rows.front().size() < 2)
    throw ParseError("expression table needs a header row and at least one data row");

  ExpressionMatrix matrix;
  const std::size_t data_rows = rows.size() - 1;
  const std::size_t data_cols = rows.front().size() - 1;
  std::vector<std::string> row_ids(data_rows);
  std::vector<std::string> col_ids(data_cols);
  for (std::size_t c = 0; c < data_cols; ++c) col_ids[c] = rows.front()[c + 1];
  Eigen::MatrixXd values(static_cast<Eigen::Index>(data_rows),
                         static_cast<Eigen::Index>(data_cols));
  for (std::size_t r = 0; r < data_rows; ++r) {
    row_ids[r] = rows[r + 1].front();
    for (std::size_t c = 0; c < data_cols; ++c)
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_number(rows[r + 1][c + 1], static_cast<long>(r + 2),
                       static_cast<long>(c + 2));
  }

  if (probes_in_rows) {
    matrix.values = std::move(values);
    matrix.probe_ids = std::move(row_ids);
    matrix.sample_ids = std::move(col_ids);
  } else {
    matrix.values = values.transpose();
    matrix.probe_ids = std::move(col_ids);
    matrix.sample_ids = std::move(row_ids);
  }
  matrix.validate();
  return matrix;
}

Dataset screen_probes(const ExpressionMatrix& matrix, const std::string& response_probe,
                      int top_m, double max_quantile, double min_range) {
  matrix.validate();
  if (top_m < 1) throw InputError("top_m must be at least 1");
  if (!(max_quantile > 0.0 && max_quantile < 1.0))
    throw InputError("max_quantile must lie in (0,1)");

  const auto probe_count = static_cast<std::size_t>(matrix.values.rows());
  const auto sample_count = matrix.values.cols();
  if (sample_count < 2) throw InputError("screening needs at least two samples");

  const auto response_it =
      std::find(matrix.probe_ids.begin(), matrix.probe_ids.end(), response_probe);
  if (response_it == matrix.probe_ids.end())
    throw InputError("response probe '" + response_probe + "' not found");
  const auto response_row =
      static_cast<std::size_t>(response_it - matrix.probe_ids.begin());

  // Threshold over the flattened matrix: the stated percentile of ALL values.
  Eigen::VectorXd flat(matrix.values.size());
  std::copy(matrix.values.data(), matrix.values.data() + matrix.values.size(), flat.data());
  const double threshold = sample_quantile(flat, max_quantile);

  std::vector<std::size_t> survivors;
  for (std::size_t probe = 0; probe < probe_count; ++probe) {
    const auto row = matrix.values.row(static_cast<Eigen::Index>(probe));
    const double max_value = row.maxCoeff();
    const double range = max_value - row.minCoeff();
    const bool removed = max_value < threshold || range < min_range;
    if (removed && probe == response_row)
      throw InputError("response probe '" + response_probe + "' removed by screening");
    if (!removed && probe != response_row) survivors.push_back(probe);
  }
  if (survivors.empty()) throw InputError("no predictors survived screening");

  const Eigen::VectorXd response =
      matrix.values.row(static_cast<Eigen::Index>(response_row)).transpose();
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(survivors.size());
  for (std::size_t probe : survivors) {
    const double corr = pearson_correlation(
        matrix.values.row(static_cast<Eigen::Index>(probe)).transpose(), response);
    ranked.emplace_back(std::abs(corr), probe);
  }
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return matrix.probe_ids[a.second] < matrix.probe_ids[b.second];
  });

  const std::size_t keep = std::min(ranked.size(), static_cast<std::size_t>(top_m));
  Dataset data;
  data.y = response;
  data.x.resize(sample_count, static_cast<Eigen::Index>(keep));
  data.column_names.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    data.x.col(static_cast<Eigen::Index>(k)) =
        matrix.values.row(static_cast<Eigen::Index>(ranked[k].second)).transpose();
    data.column_names.push_back(matrix.probe_ids[ranked[k].second]);
  }
  data.validate();
  return data;
}

}  // namespace votereg
