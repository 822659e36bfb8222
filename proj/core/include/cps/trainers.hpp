#pragma once

// SGD training loops: the standard regime plus the CutMix, adversarial and
// backdoor-adversarial baselines. All trainers are deterministic under
// (config, seed).

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "cps/attacks.hpp"
#include "cps/model.hpp"
#include "cps/rng.hpp"
#include "cps/taskset.hpp"

namespace cps {

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  double early_stop_loss = 1.0;  // stop once the epoch-mean train loss is <= this
  std::uint64_t train_seed = 1;
  std::uint64_t test_seed = 100;

  void validate() const;
};

struct TrainResult {
  ParamVector params;
  std::size_t epochs = 0;
  bool early_stopped = false;
  std::vector<double> epoch_losses;
  /// Samples routed through the augmentation in each epoch (0 for train_standard).
  std::vector<std::size_t> augmented_per_epoch;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

/// Mean cross-entropy and accuracy over the whole task, evaluated in chunks.
Evaluation evaluate(const ModelSpec& spec, const ParamVector& params, const TaskSet& task);
/// Softmax probabilities for every sample, shape (n, classes).
Tensor<float> predict_proba(const ModelSpec& spec, const ParamVector& params, const TaskSet& task);

/// Accuracy on PGD-perturbed copies of the task, attacked against `params`.
Evaluation evaluate_under_pgd(const ModelSpec& spec, const ParamVector& params, const TaskSet& task,
                              const AttackConfig& attack);

// ------------------------------------------------------------------ loop pieces

/// One mini-batch as seen by the optimizer.
struct Batch {
  std::vector<std::size_t> rows;
  Tensor<float> inputs;
  std::vector<int> labels;
  std::optional<Tensor<float>> soft_targets;
  std::size_t augmented = 0;
};

/// Rewrites a batch before the step (augmentation); receives the current parameters.
using BatchTransform = std::function<void(Batch&, const ParamVector&)>;
/// Extra scalar loss term built on the tape from the parameter node.
using Regularizer = std::function<ad::Var(ad::Tape<float>&, ad::Var params)>;

struct EpochStats {
  double task_loss = 0.0;   // mean over batches of the cross-entropy term
  double extra_loss = 0.0;  // mean over batches of the regularizer term
  std::size_t augmented = 0;
};

/// One shuffled SGD pass over `task`. `epoch` is only used for error reports.
EpochStats run_epoch(const ModelSpec& spec, const TaskSet& task, const TrainConfig& cfg, ParamVector& params,
                     Rng& shuffle_rng, std::size_t epoch, const BatchTransform& transform = {},
                     const Regularizer& regularizer = {});

// ------------------------------------------------------------------ regimes

TrainResult train_standard(const ModelSpec& spec, const TaskSet& task, const TrainConfig& cfg);

/// CutMix on a seeded `fraction` of the samples each epoch, mixed within each batch.
TrainResult train_cutmix(const ModelSpec& spec, const TaskSet& task, const TrainConfig& cfg, double fraction = 0.5);

/// Each epoch a seeded `fraction` of the samples is replaced by PGD examples
/// generated against the current parameters.
TrainResult train_adversarial(const ModelSpec& spec, const TaskSet& task, const TrainConfig& cfg,
                              const AttackConfig& attack, double fraction = 0.5);

struct BackdoorAllocation {
  TaskSet task;
  std::vector<std::size_t> per_trigger;  // samples decorated by trigger k (seed k + 1)
};

/// Defender-side trigger insertion: round(fraction * n) seeded samples are split
/// evenly across `triggers` Random-BadNet patterns; labels are left unchanged.
BackdoorAllocation allocate_backdoor_triggers(const TaskSet& task, std::size_t triggers, double fraction,
                                              double epsilon, std::uint64_t seed);

TrainResult train_backdoor_adv(const ModelSpec& spec, const TaskSet& task, const TrainConfig& cfg,
                               std::size_t triggers = 20, double fraction = 0.5, double epsilon = 0.4);

}  // namespace cps
