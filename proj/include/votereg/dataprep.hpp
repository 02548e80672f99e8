#pragma once

#include <string>
#include <variant>
#include <vector>

#include "votereg/lincore.hpp"

namespace votereg {

// Wide expression table: one row per probe, one column per sample.
struct ExpressionMatrix {
  Eigen::MatrixXd values;  // probes x samples
  std::vector<std::string> probe_ids;
  std::vector<std::string> sample_ids;

  void validate() const;
};

// Response column addressed by header name or 0-based position.
using ColumnRef = std::variant<std::string, int>;

// Rectangular numeric CSV (RFC 4180 quoting, '.' decimal, rows are
// observations); the response column is extracted and the remaining columns
// become predictors with their names preserved.
Dataset load_csv(const std::string& path, bool has_header, const ColumnRef& response_column);

// Serializes with full round-trip precision; predictors without names get
// positional headers.
void write_dataset_csv(const Dataset& data, const std::string& path,
                       const std::string& response_name = "y");

// Probe matrix with ids in the first column and a sample-id header row.
// `probes_in_rows = false` reads the transposed layout (rows are samples,
// header lists probe ids).
ExpressionMatrix load_expression_csv(const std::string& path, bool probes_in_rows = true);

// Expression screening: drop probes whose per-probe maximum falls below the
// `max_quantile` percentile of all expression values or whose range is below
// `min_range`, rank the survivors by |Pearson correlation| with the response
// probe, and keep the strongest `top_m` as predictors (ties on |correlation|
// break by probe id). The response probe must itself survive the filters.
Dataset screen_probes(const ExpressionMatrix& matrix, const std::string& response_probe,
                      int top_m, double max_quantile = 0.25, double min_range = 1.0);

}  // namespace votereg
