#pragma once

// Hypernetwork continual learning. A dense meta network maps the mean of a
// batch's flattened normalized inputs to every parameter of a base model; the
// base model then classifies that batch. Tasks arrive one after another.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cps/model.hpp"
#include "cps/taskset.hpp"

namespace cps {

struct HyperSpec {
  std::vector<std::size_t> meta_widths{32};
  ModelSpec base;

  /// Dense meta network: input = base input size, output = base parameter count.
  ModelSpec meta_spec() const;
  void validate() const;

  friend bool operator==(const HyperSpec&, const HyperSpec&) = default;
};

/// Emitted base parameters and their logits for one batch.
template <typename T>
std::pair<BasicParamVector<T>, Tensor<T>> hypernet_forward(const HyperSpec& spec, const BasicParamVector<T>& meta,
                                                            const Tensor<T>& batch);

/// Logits node of the composed model, built on `tape`. `base_out`, when given,
/// receives the node holding the emitted base parameters.
template <typename T>
ad::Var build_hyper_logits(ad::Tape<T>& tape, const HyperSpec& spec, ad::Var meta, ad::Var batch,
                           ad::Var* base_out = nullptr);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moments for a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg);
  /// The update the next step would apply for gradient `g`, without changing state.
  std::vector<float> proposal(std::span<const float> g) const;
  /// Advances the moments and applies the update in place.
  void step(std::span<float> params, std::span<const float> g);
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<float> update_for(std::span<const float> g, std::vector<double>& m, std::vector<double>& v,
                                std::size_t t) const;
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct ContinualConfig {
  double omega = 0.01;  // weight of the output-drift term on past tasks
  double beta = 1.0;    // weight of the cosine-distance term to stored snapshots
  std::size_t epochs_per_task = 20;
  std::size_t batch_size = 32;
  std::size_t replay_batches = 4;  // stored batches per completed task
  AdamConfig adam;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ContinualState {
  HyperSpec spec;
  ParamVector meta;
  std::vector<ParamVector> snapshots;  // one per completed task, never modified afterwards
  double omega = 0.01;
  double beta = 1.0;
  std::vector<std::string> task_order;

  friend bool operator==(const ContinualState&, const ContinualState&) = default;
};

struct ForgettingReport {
  std::vector<double> after_each;   // accuracy on task t right after learning it
  std::vector<double> after_final;  // accuracy on task t after the last task

  double mean_after_final() const;
  friend bool operator==(const ForgettingReport&, const ForgettingReport&) = default;
};

/// Accuracy of the composed model, with embeddings computed per batch of `batch_size` samples.
double hypernet_accuracy(const HyperSpec& spec, const ParamVector& meta, const TaskSet& task, std::size_t batch_size);

/// Output drift on `batch` between `reference` meta parameters and `meta + delta`:
/// mean squared difference of the logits.
double output_drift(const HyperSpec& spec, const ParamVector& reference, const ParamVector& meta,
                    std::span<const float> delta, const Tensor<float>& batch);

/// Sequential training over `train_tasks`; `eval_tasks[t]` measures task t.
std::pair<ContinualState, ForgettingReport> train_continual(const HyperSpec& spec, std::span<const TaskSet> train_tasks,
                                                            std::span<const TaskSet> eval_tasks,
                                                            const ContinualConfig& cfg);

/// Directory layout: meta.params, snapshot_<t>.params, manifest.json.
void save_continual_state(const std::string& dir, const ContinualState& state);
ContinualState load_continual_state(const std::string& dir);

}  // namespace cps
