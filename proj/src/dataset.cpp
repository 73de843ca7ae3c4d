#include "stratfact/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <istream>
#include <map>
#include <sstream>

namespace stratfact {

namespace {

bool parse_long(const std::string& s, long& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

// Numeric order when every id is an integer, lexicographic otherwise.
std::vector<std::string> canonical_stratum_order(const std::vector<std::string>& labels) {
  std::vector<std::string> ids = labels;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  bool all_numeric = true;
  std::vector<std::pair<long, std::string>> keyed;
  keyed.reserve(ids.size());
  for (const auto& id : ids) {
    long v = 0;
    if (!parse_long(id, v)) {
      all_numeric = false;
      break;
    }
    keyed.emplace_back(v, id);
  }
  if (all_numeric) {
    std::sort(keyed.begin(), keyed.end());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = keyed[i].second;
  }
  return ids;
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

ObservedDataset make_dataset(const FactorialDesign& design,
                             std::vector<std::string> stratum_labels,
                             std::vector<int> arms, Vector y, Matrix x,
                             std::vector<std::string> covariate_names) {
  const size_t n = y.size();
  if (stratum_labels.size() != n || arms.size() != n || static_cast<size_t>(x.rows()) != n)
    throw ValidationError("unit arrays have inconsistent lengths");
  if (n == 0) throw ValidationError("dataset is empty");

  ObservedDataset d;
  d.k = design.k();
  d.q = design.q();
  d.p = x.cols();
  d.x = std::move(x);
  d.y = std::move(y);
  d.arm_of = std::move(arms);
  if (covariate_names.empty())
    for (int j = 0; j < d.p; ++j) covariate_names.push_back("x" + std::to_string(j + 1));
  if (static_cast<int>(covariate_names.size()) != d.p)
    throw ValidationError("covariate name count does not match covariate columns");
  d.covariate_names = std::move(covariate_names);

  d.stratum_ids = canonical_stratum_order(stratum_labels);
  std::map<std::string, int> index;
  for (size_t i = 0; i < d.stratum_ids.size(); ++i) index[d.stratum_ids[i]] = static_cast<int>(i);

  d.stratum_of.resize(n);
  for (size_t i = 0; i < n; ++i) d.stratum_of[i] = index.at(stratum_labels[i]);

  const int m = d.m();
  d.n_m.assign(m, 0);
  d.n_mq.assign(m, std::vector<int>(d.q, 0));
  for (size_t i = 0; i < n; ++i) {
    const int arm = d.arm_of[i];
    if (arm < 1 || arm > d.q)
      throw ValidationError("unit " + std::to_string(i + 1) + ": arm label " + std::to_string(arm) +
                            " outside 1.." + std::to_string(d.q));
    ++d.n_m[d.stratum_of[i]];
    ++d.n_mq[d.stratum_of[i]][arm - 1];
  }
  for (int s = 0; s < m; ++s)
    for (int a = 0; a < d.q; ++a)
      if (d.n_mq[s][a] < 1)
        throw ValidationError("empty stratum-arm cell: stratum '" + d.stratum_ids[s] + "', arm " +
                              std::to_string(a + 1));

  d.pi.resize(m);
  d.e.assign(m, Vector(d.q));
  for (int s = 0; s < m; ++s) {
    d.pi[s] = static_cast<double>(d.n_m[s]) / static_cast<double>(n);
    for (int a = 0; a < d.q; ++a)
      d.e[s][a] = static_cast<double>(d.n_mq[s][a]) / static_cast<double>(d.n_m[s]);
  }
  return d;
}

ObservedDataset ingest_csv(std::istream& source, const CsvSchema& schema,
                           const FactorialDesign& design) {
  std::string line;
  if (!std::getline(source, line)) throw ValidationError("csv: missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);

  auto column_of = [&](const std::string& name) -> int {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };

  const int stratum_col = column_of(schema.stratum_col);
  if (stratum_col < 0) throw ValidationError("csv: missing column '" + schema.stratum_col + "'");
  const int y_col = column_of(schema.y_col);
  if (y_col < 0) throw ValidationError("csv: missing column '" + schema.y_col + "'");

  const int arm_col = column_of(schema.arm_col);
  std::vector<int> level_cols;
  if (arm_col < 0) {
    for (int f = 1; f <= design.k(); ++f) {
      const int c = column_of(schema.level_col_prefix + std::to_string(f));
      if (c < 0)
        throw ValidationError("csv: missing column '" + schema.arm_col + "' (or level columns " +
                              schema.level_col_prefix + "1.." + schema.level_col_prefix +
                              std::to_string(design.k()) + ")");
      level_cols.push_back(c);
    }
  }

  std::vector<int> covariate_cols;
  std::vector<std::string> covariate_names;
  if (!schema.covariate_cols.empty()) {
    for (const auto& name : schema.covariate_cols) {
      const int c = column_of(name);
      if (c < 0) throw ValidationError("csv: missing covariate column '" + name + "'");
      covariate_cols.push_back(c);
      covariate_names.push_back(name);
    }
  } else {
    std::vector<bool> used(header.size(), false);
    used[stratum_col] = used[y_col] = true;
    if (arm_col >= 0) used[arm_col] = true;
    for (int c : level_cols) used[c] = true;
    for (size_t c = 0; c < header.size(); ++c) {
      if (!used[c]) {
        covariate_cols.push_back(static_cast<int>(c));
        covariate_names.push_back(header[c]);
      }
    }
  }

  std::vector<std::string> strata;
  std::vector<int> arms;
  Vector y;
  std::vector<Vector> xrows;

  int row = 0;
  while (std::getline(source, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ValidationError("csv row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
    auto numeric = [&](int col) -> double {
      double v = 0.0;
      if (!parse_double(fields[col], v))
        throw ValidationError("csv row " + std::to_string(row) + ", column '" + header[col] +
                              "': non-numeric value '" + fields[col] + "'");
      return v;
    };

    strata.push_back(fields[stratum_col]);
    if (arm_col >= 0) {
      long arm = 0;
      if (!parse_long(fields[arm_col], arm) || arm < 1 || arm > design.q())
        throw ValidationError("csv row " + std::to_string(row) + ", column '" + header[arm_col] +
                              "': unknown arm label '" + fields[arm_col] + "'");
      arms.push_back(static_cast<int>(arm));
    } else {
      std::vector<int> levels;
      for (size_t f = 0; f < level_cols.size(); ++f) {
        long v = 0;
        if (!parse_long(fields[level_cols[f]], v) || (v != 1 && v != -1))
          throw ValidationError("csv row " + std::to_string(row) + ", column '" +
                                header[level_cols[f]] + "': level must be -1 or +1, got '" +
                                fields[level_cols[f]] + "'");
        levels.push_back(static_cast<int>(v));
      }
      arms.push_back(design.arm_from_levels(levels) + 1);
    }
    y.push_back(numeric(y_col));
    Vector xr;
    xr.reserve(covariate_cols.size());
    for (int c : covariate_cols) xr.push_back(numeric(c));
    xrows.push_back(std::move(xr));
  }
  if (row == 0) throw ValidationError("csv: no data rows");

  Matrix x(row, static_cast<int>(covariate_cols.size()));
  for (int i = 0; i < row; ++i)
    for (size_t j = 0; j < covariate_cols.size(); ++j) x(i, static_cast<int>(j)) = xrows[i][j];

  return make_dataset(design, std::move(strata), std::move(arms), std::move(y), std::move(x),
                      std::move(covariate_names));
}

bool StratumSummaries::all_cells_have_var() const {
  for (const auto& row : cell)
    for (const auto& c : row)
      if (!c.has_var) return false;
  return true;
}

std::vector<std::pair<std::string, int>> StratumSummaries::cells_below(int min_count) const {
  std::vector<std::pair<std::string, int>> out;
  for (int s = 0; s < m; ++s)
    for (int a = 0; a < q; ++a)
      if (cell[s][a].count < min_count) out.emplace_back(stratum_ids[s], a + 1);
  return out;
}

StratumSummaries summarize(const ObservedDataset& data) {
  StratumSummaries s;
  s.m = data.m();
  s.q = data.q;
  s.p = data.p;
  s.n = data.n();
  s.pi = data.pi;
  s.e = data.e;
  s.stratum_ids = data.stratum_ids;

  s.cell.assign(s.m, std::vector<CellSummary>(s.q));
  for (int m = 0; m < s.m; ++m)
    for (int a = 0; a < s.q; ++a) {
      s.cell[m][a].count = data.n_mq[m][a];
      s.cell[m][a].x_mean.assign(s.p, 0.0);
    }
  s.stratum_x_mean.assign(s.m, Vector(s.p, 0.0));

  // pass 1: means (cells and whole strata)
  for (int i = 0; i < s.n; ++i) {
    const int m = data.stratum_of[i];
    const int a = data.arm_of[i] - 1;
    CellSummary& c = s.cell[m][a];
    c.y_mean += data.y[i];
    for (int j = 0; j < s.p; ++j) {
      c.x_mean[j] += data.x(i, j);
      s.stratum_x_mean[m][j] += data.x(i, j);
    }
  }
  for (int m = 0; m < s.m; ++m) {
    for (int a = 0; a < s.q; ++a) {
      CellSummary& c = s.cell[m][a];
      c.y_mean /= c.count;
      for (int j = 0; j < s.p; ++j) c.x_mean[j] /= c.count;
    }
    for (int j = 0; j < s.p; ++j) s.stratum_x_mean[m][j] /= data.n_m[m];
  }

  // pass 2: centered second moments
  for (int m = 0; m < s.m; ++m)
    for (int a = 0; a < s.q; ++a) {
      CellSummary& c = s.cell[m][a];
      c.has_var = c.count >= 2;
      c.xy_cov.assign(s.p, 0.0);
      c.xx_cov = SymMatrix(s.p);
    }
  s.stratum_xx_cov.assign(s.m, SymMatrix(s.p));

  Vector dx(s.p);
  for (int i = 0; i < s.n; ++i) {
    const int m = data.stratum_of[i];
    const int a = data.arm_of[i] - 1;
    CellSummary& c = s.cell[m][a];
    if (c.has_var) {
      const double dy = data.y[i] - c.y_mean;
      c.y_var += dy * dy;
      for (int j = 0; j < s.p; ++j) dx[j] = data.x(i, j) - c.x_mean[j];
      for (int j = 0; j < s.p; ++j) {
        c.xy_cov[j] += dx[j] * dy;
        for (int l = j; l < s.p; ++l) c.xx_cov.add(j, l, dx[j] * dx[l]);
      }
    }
    if (data.n_m[m] >= 2) {
      for (int j = 0; j < s.p; ++j) dx[j] = data.x(i, j) - s.stratum_x_mean[m][j];
      for (int j = 0; j < s.p; ++j)
        for (int l = j; l < s.p; ++l) s.stratum_xx_cov[m].add(j, l, dx[j] * dx[l]);
    }
  }
  for (int m = 0; m < s.m; ++m) {
    for (int a = 0; a < s.q; ++a) {
      CellSummary& c = s.cell[m][a];
      if (!c.has_var) continue;
      const double div = c.count - 1;
      c.y_var /= div;
      for (int j = 0; j < s.p; ++j) c.xy_cov[j] /= div;
      c.xx_cov.scale(1.0 / div);
    }
    if (data.n_m[m] >= 2) s.stratum_xx_cov[m].scale(1.0 / (data.n_m[m] - 1));
  }

  // stratified (pi-weighted) arm means and the grand covariate mean,
  // accumulated in canonical stratum order
  s.strat_y_mean.assign(s.q, 0.0);
  s.strat_x_mean.assign(s.q, Vector(s.p, 0.0));
  s.x_bar.assign(s.p, 0.0);
  for (int m = 0; m < s.m; ++m) {
    for (int a = 0; a < s.q; ++a) {
      s.strat_y_mean[a] += s.pi[m] * s.cell[m][a].y_mean;
      for (int j = 0; j < s.p; ++j) s.strat_x_mean[a][j] += s.pi[m] * s.cell[m][a].x_mean[j];
    }
    for (int j = 0; j < s.p; ++j) s.x_bar[j] += s.pi[m] * s.stratum_x_mean[m][j];
  }
  return s;
}

}  // namespace stratfact
