#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nlpca/errors.hpp"

namespace nlpca {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// A data matrix with an observed/missing flag per entry.
///
/// `values` holds one sample per row. Missing entries keep whatever value
/// they were constructed with; no computation ever reads them. When a mask
/// was produced by artificially removing known entries, `ground_truth`
/// retains the complete matrix so validators can score the estimates.
struct MaskedDataset {
  Eigen::MatrixXd values;                       // n x d
  Mask mask;                                    // true = observed
  std::optional<Eigen::MatrixXd> ground_truth;  // n x d, full values

  Eigen::Index n_samples() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }

  Eigen::Index observed_count() const {
    return static_cast<Eigen::Index>(mask.count());
  }

  bool fully_observed() const { return mask.all(); }

  static MaskedDataset from_values(Eigen::MatrixXd v) {
    MaskedDataset d;
    d.mask = Mask::Constant(v.rows(), v.cols(), true);
    d.values = std::move(v);
    return d;
  }

  /// Checks shape consistency and rejects samples with no observed entry.
  void validate() const {
    if (values.rows() != mask.rows() || values.cols() != mask.cols())
      throw ContractError("dataset mask shape does not match values");
    if (ground_truth && (ground_truth->rows() != values.rows() ||
                         ground_truth->cols() != values.cols()))
      throw ContractError("dataset ground_truth shape does not match values");
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
      if (!mask.row(i).any())
        throw DataError("sample " + std::to_string(i) +
                        " has zero observed entries");
    }
    for (Eigen::Index i = 0; i < values.rows(); ++i)
      for (Eigen::Index j = 0; j < values.cols(); ++j)
        if (mask(i, j) && !std::isfinite(values(i, j)))
          throw DataError("observed entry (" + std::to_string(i) + "," +
                          std::to_string(j) + ") is not finite");
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Writes `data.values` as CSV with a header row x1..xd. When `mask_path`
/// is given, a sidecar CSV with the same header is written holding
/// 1 = observed, 0 = missing.
inline void save_csv(const MaskedDataset& data, const std::string& path,
                     const std::optional<std::string>& mask_path = {}) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  const Eigen::Index d = data.dim();
  for (Eigen::Index j = 0; j < d; ++j)
    out << "x" << (j + 1) << (j + 1 < d ? "," : "\n");
  for (Eigen::Index i = 0; i < data.n_samples(); ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      out << detail::format_double(data.values(i, j))
          << (j + 1 < d ? "," : "\n");
  if (!out) throw DataError("write failed: " + path);

  if (mask_path) {
    std::ofstream mout(*mask_path);
    if (!mout) throw DataError("cannot open for writing: " + *mask_path);
    for (Eigen::Index j = 0; j < d; ++j)
      mout << "x" << (j + 1) << (j + 1 < d ? "," : "\n");
    for (Eigen::Index i = 0; i < data.n_samples(); ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        mout << (data.mask(i, j) ? 1 : 0) << (j + 1 < d ? "," : "\n");
    if (!mout) throw DataError("write failed: " + *mask_path);
  }
}

namespace detail {

inline std::vector<std::vector<double>> read_numeric_csv(
    const std::string& path, bool allow_nan) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw DataError(path + ": empty file (header row expected)");
  const std::size_t n_cols = split_csv_line(line).size();
  if (n_cols == 0) throw DataError(path + ": header row has no columns");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != n_cols)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(n_cols) + " columns, got " +
                      std::to_string(fields.size()));
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const std::string& f = fields[j];
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(f, &pos);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": non-numeric cell '" + f + "'");
      }
      while (pos < f.size() &&
             (f[pos] == ' ' || f[pos] == '\t' || f[pos] == '\r'))
        ++pos;
      if (pos != f.size())
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": non-numeric cell '" + f + "'");
      if (!allow_nan && !std::isfinite(v))
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": non-finite cell '" + f + "'");
      row[j] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");
  return rows;
}

}  // namespace detail

/// Loads a dataset from CSV. NaN cells mark entries as missing; an optional
/// sidecar mask CSV (1 = observed, 0 = missing) marks further entries as
/// missing. When every missing entry still carries a finite value (sidecar
/// masking of complete data), the full matrix is retained as ground truth.
inline MaskedDataset load_csv(const std::string& path,
                              const std::optional<std::string>& mask_path = {}) {
  const auto rows = detail::read_numeric_csv(path, /*allow_nan=*/true);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows[0].size());

  MaskedDataset data;
  data.values.resize(n, d);
  data.mask = Mask::Constant(n, d, true);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      data.values(i, j) = rows[i][j];
      if (std::isnan(rows[i][j])) {
        data.mask(i, j) = false;
        data.values(i, j) = 0.0;
      }
    }

  if (mask_path) {
    const auto mrows = detail::read_numeric_csv(*mask_path, /*allow_nan=*/false);
    if (static_cast<Eigen::Index>(mrows.size()) != n ||
        static_cast<Eigen::Index>(mrows[0].size()) != d)
      throw DataError(*mask_path + ": mask shape does not match " + path);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        if (mrows[i][j] == 0.0) data.mask(i, j) = false;
  }

  if (!data.mask.all()) {
    bool truth_complete = true;
    for (Eigen::Index i = 0; i < n && truth_complete; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        if (!data.mask(i, j) && std::isnan(rows[i][j])) {
          truth_complete = false;
          break;
        }
    if (truth_complete) {
      Eigen::MatrixXd truth(n, d);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) truth(i, j) = rows[i][j];
      data.ground_truth = std::move(truth);
    }
  }

  data.validate();
  return data;
}

}  // namespace nlpca
