#pragma once

// Empirical probes on trained subspaces: agreement of the endpoints' cumulative
// updates over training, and how close a subspace gets to a parameter trained
// directly on an interpolated task.

#include <span>
#include <vector>

#include "cps/geometry.hpp"
#include "cps/subspace.hpp"

namespace cps {

struct UpdateSimilaritySummary {
  /// Mean pairwise cosine similarity of cumulative updates, one value per
  /// epoch quartile (fewer buckets when there are fewer than 4 epochs).
  std::vector<double> quartile_mean;
  std::vector<std::size_t> quartile_epochs;  // epochs falling in each bucket

  double final_quartile() const { return quartile_mean.back(); }
};

UpdateSimilaritySummary theorem2_probe(std::span<const EpochLog> logs);

struct NearestPoint {
  std::size_t cosine_index = 0;  // into the parameter grid
  double cosine_distance = 0.0;
  std::size_t euclidean_index = 0;
  double euclidean_distance = 0.0;
};

struct GroundTruthSummary {
  ParamVector ground_truth;
  std::size_t ground_truth_epochs = 0;
  std::vector<Coeffs> grid;
  NearestPoint with_beta;     // first subspace (regularized)
  NearestPoint without_beta;  // second subspace
};

/// Nearest grid point of `subspace` to `target`, first instance on ties.
NearestPoint nearest_grid_point(const Subspace& subspace, const ParamVector& target, std::span<const Coeffs> grid);

/// Trains a ground-truth parameter on `task` from the subspaces' shared
/// initialization (cfg.train_seed is replaced by their init seed) and measures
/// the nearest point of each subspace over `grid`.
GroundTruthSummary theorem3_probe(const Subspace& with_beta, const Subspace& without_beta, const TaskSet& task,
                                  const TrainConfig& cfg, std::span<const Coeffs> grid);

}  // namespace cps
