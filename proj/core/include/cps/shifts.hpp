#pragma once

// Seeded perturbation generators. Every function here is a pure function of
// its inputs and seed.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cps/taskset.hpp"
#include "cps/tensor.hpp"

namespace cps {

enum class ShiftKind { backdoor, rotation, permutation, cutmix };

std::string_view to_string(ShiftKind kind);
ShiftKind shift_kind_from_string(std::string_view name);

struct ShiftSpec {
  ShiftKind kind = ShiftKind::backdoor;
  std::uint64_t seed = 1;  // perturbation-set index for backdoors and permutations
  double p = 0.4;          // poison rate
  double epsilon = 0.4;    // trigger area fraction
  double degrees = 0.0;

  void validate() const;
  std::string describe() const;
};

/// Applies one shift to a whole task (cutmix is batch-level and rejected here).
TaskSet apply_shift(const TaskSet& task, const ShiftSpec& spec);

// ---------------------------------------------------------------- backdoor

/// A static random-pixel patch. For images the patch is a side x side square
/// at (top, left) across all channels; for feature vectors it is a run of
/// `side` consecutive features starting at `left`.
struct Trigger {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t side = 0;
  std::vector<float> pattern;
};

/// Trigger for `seed_index`; side = floor(sqrt(epsilon) * min(H, W)) for images,
/// floor(epsilon * F) for feature vectors. Throws ConfigError on a zero-size patch.
Trigger make_trigger(const Shape& sample_shape, double epsilon, std::uint64_t seed_index);
void stamp_trigger(std::span<float> sample, const Shape& sample_shape, const Trigger& trigger);

struct BackdoorResult {
  TaskSet task;
  std::vector<std::size_t> poisoned;  // sorted sample indices
  std::vector<int> original_labels;   // fine labels of `poisoned` before relabeling
  Trigger trigger;
};

/// Stamps the trigger of `spec.seed` onto round(p * n) seeded samples and relabels
/// each of them uniformly among the other classes.
BackdoorResult apply_backdoor_detailed(const TaskSet& task, const ShiftSpec& spec);
TaskSet apply_backdoor(const TaskSet& task, const ShiftSpec& spec);

// ---------------------------------------------------------------- rotation

/// Rotation about the image centre with bilinear sampling and zero fill. Positive
/// angles turn the image counter-clockwise as displayed (row 0 on top).
/// Multiples of 90 degrees use exact pixel mappings.
TaskSet apply_rotation(const TaskSet& task, double degrees);

/// Train-time per-endpoint rotation list.
inline constexpr std::array<int, 12> kTrainRotations{90, 0, 270, 180, 45, 135, 61, 315, 60, 315, 20, 75};
/// Test-time rotation list (seeded draw of 100 angles).
extern const std::array<int, 100> kTestRotations;

// ---------------------------------------------------------------- permutation

/// Seeded permutation of `n` positions; seed 0 yields the identity.
std::vector<std::size_t> permutation_for(std::uint64_t seed, std::size_t n);
/// Moves pixel position k to perm[k] (channels move together) in every sample.
TaskSet apply_permutation(const TaskSet& task, std::uint64_t seed);
TaskSet apply_inverse_permutation(const TaskSet& task, std::uint64_t seed);

// ---------------------------------------------------------------- cutmix

struct Box {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  std::size_t area() const noexcept { return height * width; }
};

struct CutMixResult {
  Tensor<float> inputs;
  Tensor<float> soft_labels;  // (batch, classes)
  std::vector<std::size_t> partner;
  Box box;
  double partner_weight = 0.0;
};

/// Pastes `box` from each sample's partner into it; label weights follow the pixel counts.
/// Inputs are (B, C, H, W) or (B, F), the latter treated as a 1 x F image.
CutMixResult cutmix_with_box(const Tensor<float>& inputs, std::span<const int> labels, std::size_t classes,
                             std::span<const std::size_t> partner, const Box& box);

/// Seeded CutMix over one batch: lambda ~ U[0, 1], box sides proportional to
/// sqrt(1 - lambda), partners from a seeded shuffle.
CutMixResult cutmix_batch(const Tensor<float>& inputs, std::span<const int> labels, std::size_t classes,
                          std::uint64_t seed);

}  // namespace cps
