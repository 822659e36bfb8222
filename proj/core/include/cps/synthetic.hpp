#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "cps/taskset.hpp"

namespace cps {

enum class SyntheticMode {
  rotated_gaussians,  // class clusters on a circle; each task rotates the circle
  shifted_rings,      // concentric class rings; each task translates the rings
};

SyntheticMode synthetic_mode_from_string(std::string_view name);
std::string_view to_string(SyntheticMode mode);

struct SyntheticOptions {
  std::uint64_t seed = 1;
  std::size_t n_tasks = 3;
  std::size_t classes = 4;
  std::size_t samples_per_class = 60;
  SyntheticMode mode = SyntheticMode::rotated_gaussians;
  std::size_t features = 16;
  /// Per-task rotation step in radians (rotated_gaussians) or translation
  /// step in latent units (shifted_rings).
  double shift = 0.9;
  double noise = 0.35;
  float pixel_offset = 64.0f;
  float pixel_scale = 22.0f;
  /// Optional reshaping of the feature vector, e.g. {1, 4, 4} for convolutional
  /// models; empty keeps {features}. Its size must equal `features`.
  Shape sample_shape{};
};

/// Desk-scale tasks with pixel-range feature vectors. Sample j carries the same
/// label and the same latent draw in every task, so tasks are label-shared and
/// index-aligned for task interpolation.
std::vector<TaskSet> make_synthetic_tasks(const SyntheticOptions& options);

}  // namespace cps
