#pragma once

// Comma-separated report tables. Every table has exactly one header line that
// names each column.

#include <iosfwd>
#include <string>
#include <vector>

#include "cps/hypernet.hpp"
#include "cps/inference.hpp"
#include "cps/probes.hpp"
#include "cps/subspace.hpp"

namespace cps {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  void write(std::ostream& os) const;
  void save(const std::string& path) const;
  static CsvTable read(std::istream& is);
  static CsvTable load(const std::string& path);
  std::size_t column(const std::string& name) const;
};

/// Shortest decimal text that round-trips the double.
std::string format_number(double v);
double parse_number(const std::string& s);

CsvTable epoch_log_table(const std::vector<EpochLog>& logs, std::size_t endpoints);
std::vector<EpochLog> epoch_logs_from_table(const CsvTable& table);

/// One column per value: input_index, in_alpha_*, then p<j> for every parameter grid point.
CsvTable landscape_matrix_table(const LandscapeGrid& grid, bool accuracy);
/// param_index, alpha_*.
CsvTable coeff_table(const std::vector<Coeffs>& coeffs, const std::string& index_name);
/// input_index, in_alpha_*, argmin_param, min_loss, accuracy_at_argmin.
CsvTable landscape_argmin_table(const LandscapeGrid& grid);

/// One inference mode evaluated on several evaluation sets (clean, backdoor, ...).
struct InferenceRow {
  InferenceMode mode = InferenceMode::centre;
  std::vector<std::string> columns;
  std::vector<InferenceReport> reports;  // parallel to `columns`
};
/// Rows = modes; per column: <col>_accuracy, <col>_loss, <col>_index, <col>_coeffs
/// (coefficients joined with ';').
CsvTable inference_table(const std::vector<InferenceRow>& rows);

/// Two rows (after-each, after-final) with one column per task.
CsvTable forgetting_table(const ForgettingReport& report);

CsvTable update_similarity_table(const UpdateSimilaritySummary& summary);
CsvTable ground_truth_table(const GroundTruthSummary& summary);

}  // namespace cps
