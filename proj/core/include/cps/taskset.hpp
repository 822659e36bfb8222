#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cps/tensor.hpp"

namespace cps {

/// A labeled dataset for one train- or test-time distribution.
///
/// Inputs are stored flat at pixel scale ([0, 255]); models consume them
/// through batch(), which divides by 255.
struct TaskSet {
  Shape sample_shape;  // (C, H, W) for images, (F) for feature vectors
  std::vector<float> inputs;
  std::vector<int> fine_labels;
  std::vector<int> coarse_labels;
  std::size_t classes = 0;  // number of fine classes
  std::string name;
  std::vector<std::string> provenance;

  std::size_t size() const noexcept { return fine_labels.size(); }
  bool empty() const noexcept { return fine_labels.empty(); }
  std::size_t sample_size() const noexcept { return shape_size(sample_shape); }
  bool is_image() const noexcept { return sample_shape.size() == 3; }

  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(inputs).subspan(i * sample_size(), sample_size());
  }
  std::span<float> sample(std::size_t i) { return std::span<float>(inputs).subspan(i * sample_size(), sample_size()); }

  /// Checks length agreement, label ranges and the [0, 255] pixel range.
  void validate() const;

  /// Normalized ([0, 1]) batch of the given rows, shape (n, sample_shape...).
  Tensor<float> batch(std::span<const std::size_t> rows) const;
  /// Every sample, normalized.
  Tensor<float> normalized_inputs() const;
  std::vector<int> labels_of(std::span<const std::size_t> rows) const;

  TaskSet subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const TaskSet&, const TaskSet&) = default;
};

inline constexpr float kPixelMax = 255.0f;

/// Keeps only samples whose fine label is in `labels`, re-indexed 0..L-1 in list order.
TaskSet filter_task(const TaskSet& base, std::span<const int> labels);

/// Seeded shuffle, then the first round(ratio * n) samples form the train part.
std::pair<TaskSet, TaskSet> train_test_split(const TaskSet& task, double ratio, std::uint64_t seed);

/// Export: one JSON header line, float32 LE inputs, int32 LE fine then coarse labels.
void write_taskset(std::ostream& os, const TaskSet& task);
TaskSet read_taskset(std::istream& is);

}  // namespace cps
