#pragma once

#include <span>
#include <utility>
#include <vector>

#include "cps/geometry.hpp"
#include "cps/taskset.hpp"

namespace cps {

/// x_j = clip(sum_i alpha_i x_{i,j}, 0, 255); labels come from the task with the
/// largest alpha (lowest index on ties). Tasks must be label-shared: equal size,
/// sample shape and coarse-label vectors.
TaskSet interpolate_tasks(std::span<const TaskSet> tasks, const Coeffs& coeffs);

/// Raw per-axis grid {0, 1/(s-1), ..., 1}^N in lexicographic order (first axis
/// slowest), all-zero vector excluded.
std::vector<Coeffs> task_grid_coeffs(std::size_t segments, std::size_t n);

std::vector<std::pair<Coeffs, TaskSet>> enumerate_task_grid(std::span<const TaskSet> tasks, std::size_t segments = 5);

}  // namespace cps
