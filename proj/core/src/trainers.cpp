#include "cps/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "cps/shifts.hpp"

namespace cps {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
  if (!(early_stop_loss > 0.0)) throw ConfigError("early-stop threshold must be positive");
}

namespace {

constexpr std::size_t kEvalChunk = 256;

std::vector<std::size_t> iota_rows(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  return rows;
}

std::size_t argmax_row(const float* row, std::size_t n) {
  return static_cast<std::size_t>(std::max_element(row, row + n) - row);
}

}  // namespace

Evaluation evaluate(const ModelSpec& spec, const ParamVector& params, const TaskSet& task) {
  if (task.empty()) throw DataError("evaluate: empty task '" + task.name + "'");
  Evaluation ev;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < task.size(); start += kEvalChunk) {
    const auto rows = iota_rows(start, std::min(task.size(), start + kEvalChunk));
    const auto labels = task.labels_of(rows);
    const auto logits = forward(spec, params, task.batch(rows));
    loss_sum += static_cast<double>(cross_entropy(logits, labels)) * static_cast<double>(rows.size());
    for (std::size_t b = 0; b < rows.size(); ++b)
      if (argmax_row(&logits[b * spec.classes], spec.classes) == static_cast<std::size_t>(labels[b])) ++correct;
  }
  ev.count = task.size();
  ev.loss = loss_sum / static_cast<double>(ev.count);
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(ev.count);
  return ev;
}

Tensor<float> predict_proba(const ModelSpec& spec, const ParamVector& params, const TaskSet& task) {
  if (task.empty()) throw DataError("predict_proba: empty task");
  Tensor<float> out({task.size(), spec.classes});
  for (std::size_t start = 0; start < task.size(); start += kEvalChunk) {
    const auto rows = iota_rows(start, std::min(task.size(), start + kEvalChunk));
    const auto logits = forward(spec, params, task.batch(rows));
    for (std::size_t b = 0; b < rows.size(); ++b) {
      const float* z = &logits[b * spec.classes];
      const float m = *std::max_element(z, z + spec.classes);
      float s = 0.0f;
      for (std::size_t c = 0; c < spec.classes; ++c) s += std::exp(z[c] - m);
      for (std::size_t c = 0; c < spec.classes; ++c) out[(start + b) * spec.classes + c] = std::exp(z[c] - m) / s;
    }
  }
  return out;
}

Evaluation evaluate_under_pgd(const ModelSpec& spec, const ParamVector& params, const TaskSet& task,
                              const AttackConfig& attack) {
  if (task.empty()) throw DataError("evaluate_under_pgd: empty task");
  Evaluation ev;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < task.size(); start += kEvalChunk) {
    const auto rows = iota_rows(start, std::min(task.size(), start + kEvalChunk));
    const auto labels = task.labels_of(rows);
    const auto adv = pgd_attack(spec, params, task.batch(rows), labels, attack);
    const auto logits = forward(spec, params, adv);
    loss_sum += static_cast<double>(cross_entropy(logits, labels)) * static_cast<double>(rows.size());
    for (std::size_t b = 0; b < rows.size(); ++b)
      if (argmax_row(&logits[b * spec.classes], spec.classes) == static_cast<std::size_t>(labels[b])) ++correct;
  }
  ev.count = task.size();
  ev.loss = loss_sum / static_cast<double>(ev.count);
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(ev.count);
  return ev;
}

EpochStats run_epoch(const ModelSpec& spec, const TaskSet& task, const TrainConfig& cfg, ParamVector& params,
                     Rng& shuffle_rng, std::size_t epoch, const BatchTransform& transform,
                     const Regularizer& regularizer) {
  if (task.empty()) throw DataError("training task '" + task.name + "' is empty");
  const auto order = shuffled_indices(shuffle_rng, task.size());
  const auto lr = static_cast<float>(cfg.learning_rate);
  EpochStats stats;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    Batch batch;
    batch.rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                      order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
    batch.inputs = task.batch(batch.rows);
    batch.labels = task.labels_of(batch.rows);
    if (transform) transform(batch, params);
    stats.augmented += batch.augmented;

    ad::Tape<float> tape;
    auto p = tape.variable(Tensor<float>({params.size()}, params.storage()));
    auto x = tape.constant(batch.inputs);
    auto logits = build_logits(tape, spec, p, x);
    auto task_loss = batch.soft_targets ? ad::soft_cross_entropy(tape, logits, *batch.soft_targets)
                                        : ad::cross_entropy(tape, logits, batch.labels);
    auto total = task_loss;
    double extra = 0.0;
    if (regularizer) {
      const auto term = regularizer(tape, p);
      if (term.id != ad::Var{}.id) {
        extra = tape.value(term)[0];
        total = ad::add(tape, task_loss, term);
      }
    }
    const double value = tape.value(total)[0];
    if (!std::isfinite(value)) {
      throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch), static_cast<int>(epoch), -1);
    }
    tape.backward(total);
    const auto grad = tape.grad(p);
    auto values = params.values();
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = values[k] - lr * grad[k];

    stats.task_loss += tape.value(task_loss)[0];
    stats.extra_loss += extra;
    ++batches;
  }
  stats.task_loss /= static_cast<double>(batches);
  stats.extra_loss /= static_cast<double>(batches);
  return stats;
}

namespace {

TrainResult train_loop(const ModelSpec& spec, const TaskSet& task, const TrainConfig& cfg,
                       const std::function<BatchTransform(std::size_t epoch)>& transform_for_epoch) {
  cfg.validate();
  TrainResult result{init_params(spec, cfg.train_seed), 0, false, {}, {}};
  auto shuffle_rng = make_rng(cfg.train_seed, streams::shuffle);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const BatchTransform transform = transform_for_epoch ? transform_for_epoch(epoch) : BatchTransform{};
    const auto stats = run_epoch(spec, task, cfg, result.params, shuffle_rng, epoch, transform);
    result.epochs = epoch;
    result.epoch_losses.push_back(stats.task_loss);
    result.augmented_per_epoch.push_back(stats.augmented);
    if (stats.task_loss <= cfg.early_stop_loss) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

/// Per-epoch seeded mask selecting round(fraction * n) samples.
class DesignationSchedule {
 public:
  DesignationSchedule(std::size_t n, double fraction, std::uint64_t seed)
      : n_(n), count_(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)))),
        rng_(make_rng(seed, streams::augment)) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("augmentation fraction must lie in [0, 1]");
  }

  std::size_t count() const noexcept { return count_; }

  std::vector<char> next_mask() {
    std::vector<char> mask(n_, 0);
    if (count_ == 0) return mask;
    const auto order = shuffled_indices(rng_, n_);
    for (std::size_t k = 0; k < count_; ++k) mask[order[k]] = 1;
    return mask;
  }

  std::uint64_t next_seed() { return rng_(); }

 private:
  std::size_t n_;
  std::size_t count_;
  Rng rng_;
};

}  // namespace

TrainResult train_standard(const ModelSpec& spec, const TaskSet& task, const TrainConfig& cfg) {
  return train_loop(spec, task, cfg, {});
}

TrainResult train_cutmix(const ModelSpec& spec, const TaskSet& task, const TrainConfig& cfg, double fraction) {
  auto schedule = std::make_shared<DesignationSchedule>(task.size(), fraction, cfg.train_seed);
  if (schedule->count() == 0) {
    auto r = train_standard(spec, task, cfg);
    std::fill(r.augmented_per_epoch.begin(), r.augmented_per_epoch.end(), 0);
    return r;
  }
  const std::size_t classes = spec.classes;
  auto transform_for = [schedule, classes](std::size_t) -> BatchTransform {
    auto mask = std::make_shared<std::vector<char>>(schedule->next_mask());
    return [schedule, mask, classes](Batch& batch, const ParamVector&) {
      std::vector<std::size_t> picked;
      for (std::size_t b = 0; b < batch.rows.size(); ++b)
        if ((*mask)[batch.rows[b]]) picked.push_back(b);
      if (picked.empty()) return;
      const std::size_t per = batch.inputs.size() / batch.rows.size();
      Tensor<float> soft({batch.rows.size(), classes});
      for (std::size_t b = 0; b < batch.rows.size(); ++b)
        soft[b * classes + static_cast<std::size_t>(batch.labels[b])] = 1.0f;
      const std::uint64_t seed = schedule->next_seed();
      if (picked.size() >= 2) {
        Shape sub_shape = batch.inputs.shape();
        sub_shape[0] = picked.size();
        Tensor<float> sub(sub_shape);
        std::vector<int> sub_labels;
        for (std::size_t k = 0; k < picked.size(); ++k) {
          std::copy_n(&batch.inputs[picked[k] * per], per, &sub[k * per]);
          sub_labels.push_back(batch.labels[picked[k]]);
        }
        const auto mixed = cutmix_batch(sub, sub_labels, classes, seed);
        for (std::size_t k = 0; k < picked.size(); ++k) {
          std::copy_n(&mixed.inputs[k * per], per, &batch.inputs[picked[k] * per]);
          std::copy_n(&mixed.soft_labels[k * classes], classes, &soft[picked[k] * classes]);
        }
      }
      batch.soft_targets = std::move(soft);
      batch.augmented = picked.size();
    };
  };
  return train_loop(spec, task, cfg, transform_for);
}

TrainResult train_adversarial(const ModelSpec& spec, const TaskSet& task, const TrainConfig& cfg,
                              const AttackConfig& attack, double fraction) {
  attack.validate();
  auto schedule = std::make_shared<DesignationSchedule>(task.size(), fraction, cfg.train_seed);
  if (schedule->count() == 0) {
    auto r = train_standard(spec, task, cfg);
    std::fill(r.augmented_per_epoch.begin(), r.augmented_per_epoch.end(), 0);
    return r;
  }
  auto transform_for = [schedule, &spec, attack](std::size_t) -> BatchTransform {
    auto mask = std::make_shared<std::vector<char>>(schedule->next_mask());
    return [mask, &spec, attack](Batch& batch, const ParamVector& current) {
      std::vector<std::size_t> picked;
      for (std::size_t b = 0; b < batch.rows.size(); ++b)
        if ((*mask)[batch.rows[b]]) picked.push_back(b);
      if (picked.empty()) return;
      const std::size_t per = batch.inputs.size() / batch.rows.size();
      Shape sub_shape = batch.inputs.shape();
      sub_shape[0] = picked.size();
      Tensor<float> sub(sub_shape);
      std::vector<int> sub_labels;
      for (std::size_t k = 0; k < picked.size(); ++k) {
        std::copy_n(&batch.inputs[picked[k] * per], per, &sub[k * per]);
        sub_labels.push_back(batch.labels[picked[k]]);
      }
      const auto adv = pgd_attack(spec, current, sub, sub_labels, attack);
      for (std::size_t k = 0; k < picked.size(); ++k) std::copy_n(&adv[k * per], per, &batch.inputs[picked[k] * per]);
      batch.augmented = picked.size();
    };
  };
  return train_loop(spec, task, cfg, transform_for);
}

BackdoorAllocation allocate_backdoor_triggers(const TaskSet& task, std::size_t triggers, double fraction,
                                              double epsilon, std::uint64_t seed) {
  if (triggers < 1) throw ConfigError("backdoor adversarial training needs at least one trigger");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("backdoor allocation fraction must lie in [0, 1]");
  BackdoorAllocation out{task, std::vector<std::size_t>(triggers, 0)};
  const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(task.size())));
  if (total == 0) return out;
  auto rng = make_rng(seed, streams::augment);
  const auto order = shuffled_indices(rng, task.size());
  for (std::size_t k = 0; k < triggers; ++k) {
    const std::size_t begin = k * total / triggers, end = (k + 1) * total / triggers;
    const auto trigger = make_trigger(task.sample_shape, epsilon, k + 1);
    for (std::size_t r = begin; r < end; ++r) stamp_trigger(out.task.sample(order[r]), task.sample_shape, trigger);
    out.per_trigger[k] = end - begin;
  }
  out.task.provenance.push_back("backdoor-adv:triggers=" + std::to_string(triggers));
  return out;
}

TrainResult train_backdoor_adv(const ModelSpec& spec, const TaskSet& task, const TrainConfig& cfg,
                               std::size_t triggers, double fraction, double epsilon) {
  auto alloc = allocate_backdoor_triggers(task, triggers, fraction, epsilon, cfg.train_seed);
  auto result = train_standard(spec, alloc.task, cfg);
  const auto decorated = std::accumulate(alloc.per_trigger.begin(), alloc.per_trigger.end(), std::size_t{0});
  std::fill(result.augmented_per_epoch.begin(), result.augmented_per_epoch.end(), decorated);
  return result;
}

}  // namespace cps
