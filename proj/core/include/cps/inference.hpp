#pragma once

// Subspace inference: centre, ensemble, lowest-loss interpolated, lowest-loss
// boundary and multi-task selection, plus the input x parameter landscape grid.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "cps/geometry.hpp"
#include "cps/subspace.hpp"

namespace cps {

enum class InferenceMode { centre, ensemble, interpolated, boundary, multi_task };

std::string_view to_string(InferenceMode mode);
InferenceMode inference_mode_from_string(std::string_view name);

struct InferenceReport {
  InferenceMode mode = InferenceMode::centre;
  std::optional<Coeffs> coeffs;         // chosen (or, for centre, implied) coefficients
  std::optional<std::size_t> index;     // position of the winner in the candidate list
  double accuracy = 0.0;
  double loss = 0.0;                    // summed over tasks in multi-task mode
  std::size_t samples = 0;              // evaluated samples (all tasks together)
  std::size_t candidates = 0;
  std::vector<double> per_task_accuracy;
  std::vector<double> per_task_loss;
};

/// M convex coefficient vectors: each alpha_i ~ U[0, 1], then normalized.
std::vector<Coeffs> sample_coeffs(std::uint64_t seed, std::size_t m, std::size_t n);

/// Per-axis values k / (segments - 1), enumerated with the first axis slowest and
/// the all-zero point skipped. With `normalize`, points are rescaled to sum to 1
/// and duplicates are dropped keeping the first occurrence; otherwise the raw box
/// points are kept. `exclude_boundary` drops one-hot vectors.
std::vector<Coeffs> grid_coeffs(std::size_t segments, std::size_t n, bool exclude_boundary, bool normalize = true);

InferenceReport centre_report(const Subspace& subspace, const TaskSet& task);
InferenceReport ensemble_predict(const Subspace& subspace, std::span<const Coeffs> coeffs, const TaskSet& task);
InferenceReport lowest_loss_interpolated(const Subspace& subspace, const TaskSet& task, std::span<const Coeffs> coeffs);
InferenceReport lowest_loss_boundary(const Subspace& subspace, const TaskSet& task);
/// Loss is the summed loss over tasks; accuracy is the mean of the per-task accuracies.
InferenceReport multi_task_lowest_loss(const Subspace& subspace, std::span<const TaskSet> tasks,
                                       std::span<const Coeffs> coeffs);

struct LandscapeGrid {
  std::vector<Coeffs> input_coeffs;
  std::vector<Coeffs> param_coeffs;
  std::vector<double> loss;      // row-major, rows = input grid
  std::vector<double> accuracy;  // same layout
  std::vector<std::size_t> argmin;

  std::size_t rows() const noexcept { return input_coeffs.size(); }
  std::size_t cols() const noexcept { return param_coeffs.size(); }
  double loss_at(std::size_t r, std::size_t c) const { return loss.at(r * cols() + c); }
  double accuracy_at(std::size_t r, std::size_t c) const { return accuracy.at(r * cols() + c); }
};

LandscapeGrid landscape_map(const Subspace& subspace, std::span<const std::pair<Coeffs, TaskSet>> task_grid,
                            std::span<const Coeffs> param_grid);

/// First index of the smallest value.
std::size_t first_argmin(std::span<const double> values);

}  // namespace cps
