#pragma once

// Compressed parameter subspace training: N endpoints that start from one
// shared initialization, each trained on its own task with an added penalty of
// beta times its mean cosine distance to the other endpoints.

#include <cstdint>
#include <string>
#include <vector>

#include "cps/model.hpp"
#include "cps/taskset.hpp"
#include "cps/trainers.hpp"

namespace cps {

/// Per-epoch training record. Pair-indexed vectors follow (0,1), (0,2), ..., (1,2), ...
struct EpochLog {
  std::size_t epoch = 0;
  std::vector<double> task_loss;          // epoch-mean cross-entropy per endpoint
  std::vector<double> distance_term;      // epoch-mean beta * mean cosine distance per endpoint
  std::vector<double> mean_cosine;        // end-of-epoch mean cosine distance to the other endpoints
  std::vector<double> centre_cosine;      // end-of-epoch cosine distance to the centre
  std::vector<double> update_similarity;  // cosine similarity of cumulative updates theta_i - theta_init

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

class Subspace {
 public:
  Subspace(ModelSpec spec, std::vector<ParamVector> endpoints, double beta, std::uint64_t init_seed,
           std::vector<std::string> provenance = {}, std::vector<EpochLog> logs = {});

  const ModelSpec& spec() const noexcept { return spec_; }
  const std::vector<ParamVector>& endpoints() const noexcept { return endpoints_; }
  std::size_t size() const noexcept { return endpoints_.size(); }
  double beta() const noexcept { return beta_; }
  std::uint64_t init_seed() const noexcept { return init_seed_; }
  const std::vector<std::string>& provenance() const noexcept { return provenance_; }
  const std::vector<EpochLog>& logs() const noexcept { return logs_; }

  friend bool operator==(const Subspace&, const Subspace&) = default;

 private:
  ModelSpec spec_;
  std::vector<ParamVector> endpoints_;
  double beta_;
  std::uint64_t init_seed_;
  std::vector<std::string> provenance_;
  std::vector<EpochLog> logs_;
};

/// Trains one endpoint per task. Within an epoch endpoints are visited in index
/// order and each sees the current values of the others. Stops once every
/// endpoint's epoch-mean task loss is at or below cfg.early_stop_loss.
Subspace train_cps(const ModelSpec& spec, std::span<const TaskSet> tasks, double beta, const TrainConfig& cfg);

/// Uniform average of the endpoints.
ParamVector centre(const Subspace& subspace);

/// Directory layout: endpoint_<i>.params, epoch_log.csv, manifest.json.
void save_subspace(const std::string& dir, const Subspace& subspace);
Subspace load_subspace(const std::string& dir);

}  // namespace cps
