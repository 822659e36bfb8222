#include "cps/reports.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cps/errors.hpp"

namespace cps {

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) throw ShapeError("csv row width does not match header");
  rows.push_back(std::move(row));
}

void CsvTable::write(std::ostream& os) const {
  auto line = [&os](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

void CsvTable::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  write(os);
}

CsvTable CsvTable::read(std::istream& is) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw DataError("csv: missing header line");
  t.header = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw DataError("csv: row width does not match header");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

CsvTable CsvTable::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  return read(is);
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw DataError("csv: no column named '" + name + "'");
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_number(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw DataError("csv: bad number '" + s + "'");
  return v;
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> pairs_of(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out.emplace_back(i, j);
  return out;
}

}  // namespace

CsvTable epoch_log_table(const std::vector<EpochLog>& logs, std::size_t endpoints) {
  CsvTable t;
  t.header.push_back("epoch");
  for (std::size_t i = 0; i < endpoints; ++i) {
    const auto s = std::to_string(i);
    t.header.insert(t.header.end(), {"task_loss_" + s, "distance_term_" + s, "mean_cosine_" + s, "centre_cosine_" + s});
  }
  for (const auto& [i, j] : pairs_of(endpoints)) t.header.push_back("update_similarity_" + std::to_string(i) + "_" + std::to_string(j));
  for (const auto& log : logs) {
    std::vector<std::string> row{std::to_string(log.epoch)};
    for (std::size_t i = 0; i < endpoints; ++i) {
      row.push_back(format_number(log.task_loss.at(i)));
      row.push_back(format_number(log.distance_term.at(i)));
      row.push_back(format_number(log.mean_cosine.at(i)));
      row.push_back(format_number(log.centre_cosine.at(i)));
    }
    for (const double s : log.update_similarity) row.push_back(format_number(s));
    t.add_row(std::move(row));
  }
  return t;
}

std::vector<EpochLog> epoch_logs_from_table(const CsvTable& table) {
  if (table.header.empty() || table.header[0] != "epoch") throw DataError("epoch log: first column must be 'epoch'");
  std::size_t endpoints = 0;
  while (true) {
    const auto name = "task_loss_" + std::to_string(endpoints);
    bool found = false;
    for (const auto& h : table.header) found = found || h == name;
    if (!found) break;
    ++endpoints;
  }
  const std::size_t pairs = endpoints * (endpoints - (endpoints > 0 ? 1 : 0)) / 2;
  if (table.header.size() != 1 + 4 * endpoints + pairs) throw DataError("epoch log: unexpected column count");
  std::vector<EpochLog> logs;
  for (const auto& row : table.rows) {
    EpochLog log;
    log.epoch = static_cast<std::size_t>(parse_number(row[0]));
    for (std::size_t i = 0; i < endpoints; ++i) {
      log.task_loss.push_back(parse_number(row[1 + 4 * i]));
      log.distance_term.push_back(parse_number(row[2 + 4 * i]));
      log.mean_cosine.push_back(parse_number(row[3 + 4 * i]));
      log.centre_cosine.push_back(parse_number(row[4 + 4 * i]));
    }
    for (std::size_t k = 0; k < pairs; ++k) log.update_similarity.push_back(parse_number(row[1 + 4 * endpoints + k]));
    logs.push_back(std::move(log));
  }
  return logs;
}

namespace {

void add_alpha_headers(CsvTable& t, const std::string& prefix, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) t.header.push_back(prefix + std::to_string(i));
}

void add_alphas(std::vector<std::string>& row, const Coeffs& c) {
  for (const double a : c.alpha) row.push_back(format_number(a));
}

}  // namespace

CsvTable landscape_matrix_table(const LandscapeGrid& grid, bool accuracy) {
  CsvTable t;
  t.header.push_back("input_index");
  add_alpha_headers(t, "in_alpha_", grid.input_coeffs.empty() ? 0 : grid.input_coeffs[0].size());
  for (std::size_t c = 0; c < grid.cols(); ++c) t.header.push_back("p" + std::to_string(c));
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    std::vector<std::string> row{std::to_string(r)};
    add_alphas(row, grid.input_coeffs[r]);
    for (std::size_t c = 0; c < grid.cols(); ++c)
      row.push_back(format_number(accuracy ? grid.accuracy_at(r, c) : grid.loss_at(r, c)));
    t.add_row(std::move(row));
  }
  return t;
}

CsvTable coeff_table(const std::vector<Coeffs>& coeffs, const std::string& index_name) {
  CsvTable t;
  t.header.push_back(index_name);
  add_alpha_headers(t, "alpha_", coeffs.empty() ? 0 : coeffs[0].size());
  for (std::size_t j = 0; j < coeffs.size(); ++j) {
    std::vector<std::string> row{std::to_string(j)};
    add_alphas(row, coeffs[j]);
    t.add_row(std::move(row));
  }
  return t;
}

CsvTable landscape_argmin_table(const LandscapeGrid& grid) {
  CsvTable t;
  t.header.push_back("input_index");
  add_alpha_headers(t, "in_alpha_", grid.input_coeffs.empty() ? 0 : grid.input_coeffs[0].size());
  t.header.insert(t.header.end(), {"argmin_param", "min_loss", "accuracy_at_argmin"});
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    std::vector<std::string> row{std::to_string(r)};
    add_alphas(row, grid.input_coeffs[r]);
    const auto c = grid.argmin[r];
    row.push_back(std::to_string(c));
    row.push_back(format_number(grid.loss_at(r, c)));
    row.push_back(format_number(grid.accuracy_at(r, c)));
    t.add_row(std::move(row));
  }
  return t;
}

CsvTable inference_table(const std::vector<InferenceRow>& rows) {
  CsvTable t;
  t.header.push_back("mode");
  if (rows.empty()) return t;
  const auto& columns = rows.front().columns;
  for (const auto& c : columns)
    t.header.insert(t.header.end(), {c + "_accuracy", c + "_loss", c + "_index", c + "_coeffs"});
  for (const auto& r : rows) {
    if (r.columns != columns || r.reports.size() != columns.size()) throw ShapeError("inference rows disagree on columns");
    std::vector<std::string> row{std::string(to_string(r.mode))};
    for (const auto& rep : r.reports) {
      row.push_back(format_number(rep.accuracy));
      row.push_back(format_number(rep.loss));
      row.push_back(rep.index ? std::to_string(*rep.index) : std::string());
      std::string coeffs;
      if (rep.coeffs)
        for (std::size_t i = 0; i < rep.coeffs->size(); ++i) coeffs += (i ? ";" : "") + format_number(rep.coeffs->alpha[i]);
      row.push_back(coeffs);
    }
    t.add_row(std::move(row));
  }
  return t;
}

CsvTable forgetting_table(const ForgettingReport& report) {
  CsvTable t;
  t.header.push_back("evaluation");
  for (std::size_t i = 0; i < report.after_each.size(); ++i) t.header.push_back("task_" + std::to_string(i));
  auto row_of = [](const std::string& label, const std::vector<double>& values) {
    std::vector<std::string> row{label};
    for (const double v : values) row.push_back(format_number(v));
    return row;
  };
  t.add_row(row_of("after-each", report.after_each));
  t.add_row(row_of("after-final", report.after_final));
  return t;
}

CsvTable update_similarity_table(const UpdateSimilaritySummary& summary) {
  CsvTable t;
  t.header = {"quartile", "epochs", "mean_update_similarity"};
  for (std::size_t b = 0; b < summary.quartile_mean.size(); ++b)
    t.add_row({std::to_string(b + 1), std::to_string(summary.quartile_epochs[b]), format_number(summary.quartile_mean[b])});
  return t;
}

CsvTable ground_truth_table(const GroundTruthSummary& summary) {
  CsvTable t;
  t.header = {"subspace", "cosine_index", "cosine_distance", "euclidean_index", "euclidean_distance"};
  auto add = [&t](const std::string& name, const NearestPoint& p) {
    t.add_row({name, std::to_string(p.cosine_index), format_number(p.cosine_distance), std::to_string(p.euclidean_index),
               format_number(p.euclidean_distance)});
  };
  add("regularized", summary.with_beta);
  add("unregularized", summary.without_beta);
  return t;
}

}  // namespace cps
