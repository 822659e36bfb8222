#include "cps/task_interpolation.hpp"

#include <algorithm>
#include <sstream>

#include "cps/errors.hpp"

namespace cps {

TaskSet interpolate_tasks(std::span<const TaskSet> tasks, const Coeffs& coeffs) {
  if (tasks.empty()) throw ConfigError("interpolate_tasks: no tasks");
  coeffs.validate(tasks.size());
  const auto& first = tasks[0];
  for (const auto& t : tasks) {
    if (t.size() != first.size() || t.sample_shape != first.sample_shape) {
      throw DataError("interpolate_tasks: tasks differ in size or sample shape");
    }
    if (t.coarse_labels != first.coarse_labels || t.classes != first.classes) {
      throw DataError("interpolate_tasks: tasks are not label-shared");
    }
  }
  const std::size_t lead = coeffs.argmax();
  TaskSet out;
  out.sample_shape = first.sample_shape;
  out.classes = first.classes;
  out.fine_labels = tasks[lead].fine_labels;
  out.coarse_labels = tasks[lead].coarse_labels;
  std::ostringstream name;
  name << "interp[";
  for (std::size_t i = 0; i < coeffs.size(); ++i) name << (i ? "," : "") << coeffs.alpha[i];
  name << "]";
  out.name = name.str();
  out.provenance.push_back(out.name);

  out.inputs.resize(first.inputs.size());
  for (std::size_t k = 0; k < out.inputs.size(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < tasks.size(); ++i) acc += coeffs.alpha[i] * static_cast<double>(tasks[i].inputs[k]);
    out.inputs[k] = static_cast<float>(std::clamp(acc, 0.0, static_cast<double>(kPixelMax)));
  }
  return out;
}

std::vector<Coeffs> task_grid_coeffs(std::size_t segments, std::size_t n) {
  if (segments < 2) throw ConfigError("task grid needs at least 2 segments");
  if (n < 1) throw ConfigError("task grid needs at least one task");
  std::vector<Coeffs> grid;
  std::vector<std::size_t> digits(n, 0);
  const double step = 1.0 / static_cast<double>(segments - 1);
  while (true) {
    bool all_zero = std::all_of(digits.begin(), digits.end(), [](std::size_t d) { return d == 0; });
    if (!all_zero) {
      Coeffs c;
      for (const auto d : digits) c.alpha.push_back(d == segments - 1 ? 1.0 : static_cast<double>(d) * step);
      grid.push_back(std::move(c));
    }
    std::size_t axis = n;
    while (axis > 0) {
      --axis;
      if (++digits[axis] < segments) break;
      digits[axis] = 0;
      if (axis == 0) return grid;
    }
  }
}

std::vector<std::pair<Coeffs, TaskSet>> enumerate_task_grid(std::span<const TaskSet> tasks, std::size_t segments) {
  std::vector<std::pair<Coeffs, TaskSet>> out;
  for (auto& c : task_grid_coeffs(segments, tasks.size())) {
    auto task = interpolate_tasks(tasks, c);
    out.emplace_back(std::move(c), std::move(task));
  }
  return out;
}

}  // namespace cps
