#include "cps/probes.hpp"

#include <cmath>
#include <numeric>

#include "parallel.hpp"

namespace cps {

UpdateSimilaritySummary theorem2_probe(std::span<const EpochLog> logs) {
  if (logs.empty()) throw ConfigError("theorem2_probe: no epoch logs");
  const std::size_t epochs = logs.size();
  const std::size_t buckets = std::min<std::size_t>(4, epochs);
  UpdateSimilaritySummary s;
  s.quartile_mean.assign(buckets, 0.0);
  s.quartile_epochs.assign(buckets, 0);
  for (std::size_t k = 0; k < epochs; ++k) {
    const auto& sim = logs[k].update_similarity;
    if (sim.empty()) throw ConfigError("theorem2_probe: epoch log without update similarities");
    const double mean = std::accumulate(sim.begin(), sim.end(), 0.0) / static_cast<double>(sim.size());
    const std::size_t b = k * buckets / epochs;
    s.quartile_mean[b] += mean;
    ++s.quartile_epochs[b];
  }
  for (std::size_t b = 0; b < buckets; ++b) s.quartile_mean[b] /= static_cast<double>(s.quartile_epochs[b]);
  return s;
}

NearestPoint nearest_grid_point(const Subspace& subspace, const ParamVector& target, std::span<const Coeffs> grid) {
  if (grid.empty()) throw ConfigError("nearest_grid_point: empty grid");
  target.require_spec(subspace.spec());
  std::vector<double> cos(grid.size()), euc(grid.size());
  detail::parallel_for(grid.size(), [&](std::size_t j) {
    const auto p = interpolate_params(grid[j], std::span<const ParamVector>(subspace.endpoints()));
    double dot = 0.0, np = 0.0, nt = 0.0, sq = 0.0;
    const auto a = p.values();
    const auto b = target.values();
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double x = a[k], y = b[k];
      dot += x * y;
      np += x * x;
      nt += y * y;
      sq += (x - y) * (x - y);
    }
    if (np == 0.0 || nt == 0.0) throw NumericError("nearest_grid_point: zero-norm parameter vector");
    cos[j] = 1.0 - dot / std::sqrt(np * nt);
    euc[j] = std::sqrt(sq);
  });
  NearestPoint out;
  for (std::size_t j = 1; j < grid.size(); ++j) {
    if (cos[j] < cos[out.cosine_index]) out.cosine_index = j;
    if (euc[j] < euc[out.euclidean_index]) out.euclidean_index = j;
  }
  out.cosine_distance = cos[out.cosine_index];
  out.euclidean_distance = euc[out.euclidean_index];
  return out;
}

GroundTruthSummary theorem3_probe(const Subspace& with_beta, const Subspace& without_beta, const TaskSet& task,
                                  const TrainConfig& cfg, std::span<const Coeffs> grid) {
  if (!(with_beta.spec() == without_beta.spec())) throw ConfigError("theorem3_probe: subspaces use different models");
  if (with_beta.init_seed() != without_beta.init_seed()) throw ConfigError("theorem3_probe: subspaces use different init seeds");
  if (with_beta.size() != without_beta.size()) throw ConfigError("theorem3_probe: subspaces differ in endpoint count");
  TrainConfig gt_cfg = cfg;
  gt_cfg.train_seed = with_beta.init_seed();
  auto trained = train_standard(with_beta.spec(), task, gt_cfg);
  GroundTruthSummary s;
  s.ground_truth = std::move(trained.params);
  s.ground_truth_epochs = trained.epochs;
  s.grid.assign(grid.begin(), grid.end());
  s.with_beta = nearest_grid_point(with_beta, s.ground_truth, grid);
  s.without_beta = nearest_grid_point(without_beta, s.ground_truth, grid);
  return s;
}

}  // namespace cps
