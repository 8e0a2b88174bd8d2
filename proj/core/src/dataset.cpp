#include "blipvar/dataset.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "blipvar/errors.hpp"

namespace blipvar {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_cell(const std::string& raw, const std::string& column, int row) {
  const std::string cell = trim(raw);
  if (cell.empty() || cell == "NA" || cell == "nan" || cell == "NaN") {
    throw MissingValueError("missing value in column '" + column + "', data row " +
                            std::to_string(row));
  }
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw NonNumericCellError("non-numeric cell '" + cell + "' in column '" + column +
                              "', data row " + std::to_string(row));
  }
  return value;
}

}  // namespace

void validate(const ObservedDataset& data) {
  const int n = data.n();
  if (n < 1) throw ValidationError("dataset: empty");
  if (data.a.size() != n || data.w.rows() != n) {
    throw ValidationError("dataset: column length mismatch");
  }
  for (int i = 0; i < n; ++i) {
    if (data.a[i] != 0.0 && data.a[i] != 1.0) {
      throw NonBinaryTreatmentError("dataset: treatment entry " + std::to_string(i) +
                                    " is not 0/1");
    }
    if (data.y[i] < 0.0 || data.y[i] > 1.0) {
      throw ValidationError("dataset: outcome entry " + std::to_string(i) +
                            " outside [0,1] after scaling");
    }
  }
  if (data.scale.applied && !(data.scale.upper > data.scale.lower)) {
    throw ValidationError("dataset: degenerate outcome scale");
  }
}

ObservedDataset load_csv(const std::string& path, const CsvColumns& columns,
                         std::optional<std::pair<double, double>> y_bounds) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open file: " + path);

  std::string header_line;
  if (!std::getline(in, header_line)) throw ValidationError("empty file: " + path);
  const auto header = split_csv_line(header_line);

  auto column_index = [&](const std::string& name) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (trim(header[j]) == name) return static_cast<int>(j);
    }
    throw MissingColumnError("column '" + name + "' not found in " + path);
  };

  const int y_idx = column_index(columns.y);
  const int a_idx = column_index(columns.a);
  std::vector<int> w_idx;
  w_idx.reserve(columns.w.size());
  for (const auto& name : columns.w) w_idx.push_back(column_index(name));
  if (w_idx.empty()) throw ValidationError("no covariate columns requested");

  std::vector<double> ys, as;
  std::vector<std::vector<double>> ws;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ValidationError("row " + std::to_string(row) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
    }
    ys.push_back(parse_cell(fields[y_idx], columns.y, row));
    const double a = parse_cell(fields[a_idx], columns.a, row);
    if (a != 0.0 && a != 1.0) {
      throw NonBinaryTreatmentError("treatment column '" + columns.a +
                                    "' has non-binary entry at data row " +
                                    std::to_string(row));
    }
    as.push_back(a);
    std::vector<double> wrow(w_idx.size());
    for (std::size_t k = 0; k < w_idx.size(); ++k) {
      wrow[k] = parse_cell(fields[w_idx[k]], columns.w[k], row);
    }
    ws.push_back(std::move(wrow));
  }
  const int n = static_cast<int>(ys.size());
  if (n == 0) throw ValidationError("no data rows in " + path);

  ObservedDataset data;
  data.y = Eigen::Map<VectorXd>(ys.data(), n);
  data.a = Eigen::Map<VectorXd>(as.data(), n);
  data.w.resize(n, static_cast<int>(w_idx.size()));
  for (int i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < w_idx.size(); ++k) data.w(i, k) = ws[i][k];
  }
  data.w_names = columns.w;
  data.y_name = columns.y;
  data.a_name = columns.a;

  const double y_min = data.y.minCoeff();
  const double y_max = data.y.maxCoeff();
  if (y_bounds) {
    data.y = scale_outcome(data.y, y_bounds->first, y_bounds->second);
    data.scale = OutcomeScale{y_bounds->first, y_bounds->second, true};
  } else if (y_min < 0.0 || y_max > 1.0) {
    data.y = scale_outcome(data.y, y_min, y_max);
    data.scale = OutcomeScale{y_min, y_max, true};
  }
  validate(data);
  return data;
}

VectorXd scale_outcome(const VectorXd& y, double lower, double upper) {
  if (!(upper > lower)) {
    throw ValidationError("scale_outcome: degenerate range, upper <= lower");
  }
  const double range = upper - lower;
  VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] < lower || y[i] > upper) {
      throw ValidationError("scale_outcome: value " + std::to_string(y[i]) +
                            " outside [" + std::to_string(lower) + ", " +
                            std::to_string(upper) + "]");
    }
    out[i] = (y[i] - lower) / range;
  }
  return out;
}

UnscaledEstimates unscale_estimates(double ate_s, double vte_s, double se_ate_s,
                                    double se_vte_s, const OutcomeScale& scale) {
  const double f = scale.range();
  return UnscaledEstimates{ate_s * f, vte_s * f * f, se_ate_s * f, se_vte_s * f * f};
}

}  // namespace blipvar
