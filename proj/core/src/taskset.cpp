#include "cps/taskset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "cps/checkpoint.hpp"
#include "cps/errors.hpp"
#include "cps/rng.hpp"

namespace cps {

void TaskSet::validate() const {
  if (sample_shape.empty()) throw DataError("task '" + name + "': missing sample shape");
  if (inputs.size() != size() * sample_size()) throw DataError("task '" + name + "': input length does not match label count");
  if (coarse_labels.size() != fine_labels.size()) throw DataError("task '" + name + "': coarse/fine label counts differ");
  for (const int y : fine_labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw DataError("task '" + name + "': fine label out of range");
  }
  for (const float v : inputs) {
    if (!(v >= 0.0f && v <= kPixelMax)) throw DataError("task '" + name + "': pixel outside [0, 255]");
  }
}

Tensor<float> TaskSet::batch(std::span<const std::size_t> rows) const {
  Shape shape{rows.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  std::vector<float> data;
  data.reserve(rows.size() * sample_size());
  for (const auto r : rows) {
    if (r >= size()) throw ShapeError("task row out of range");
    for (const float v : sample(r)) data.push_back(v / kPixelMax);
  }
  return Tensor<float>(std::move(shape), std::move(data));
}

Tensor<float> TaskSet::normalized_inputs() const {
  std::vector<std::size_t> rows(size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return batch(rows);
}

std::vector<int> TaskSet::labels_of(std::span<const std::size_t> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto r : rows) out.push_back(fine_labels.at(r));
  return out;
}

TaskSet TaskSet::subset(std::span<const std::size_t> rows) const {
  TaskSet out;
  out.sample_shape = sample_shape;
  out.classes = classes;
  out.name = name;
  out.provenance = provenance;
  out.inputs.reserve(rows.size() * sample_size());
  for (const auto r : rows) {
    if (r >= size()) throw ShapeError("task row out of range");
    const auto s = sample(r);
    out.inputs.insert(out.inputs.end(), s.begin(), s.end());
    out.fine_labels.push_back(fine_labels[r]);
    out.coarse_labels.push_back(coarse_labels[r]);
  }
  return out;
}

TaskSet filter_task(const TaskSet& base, std::span<const int> labels) {
  if (labels.empty()) throw ConfigError("filter_task: empty label list");
  std::vector<int> position(base.classes, -1);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const int y = labels[k];
    if (y < 0 || static_cast<std::size_t>(y) >= base.classes ||
        std::find(base.fine_labels.begin(), base.fine_labels.end(), y) == base.fine_labels.end()) {
      throw DataError("filter_task: label " + std::to_string(y) + " does not occur in task '" + base.name + "'");
    }
    if (position[static_cast<std::size_t>(y)] >= 0) throw ConfigError("filter_task: duplicate label " + std::to_string(y));
    position[static_cast<std::size_t>(y)] = static_cast<int>(k);
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < base.size(); ++i)
    if (position[static_cast<std::size_t>(base.fine_labels[i])] >= 0) rows.push_back(i);
  TaskSet out = base.subset(rows);
  for (auto& y : out.fine_labels) y = position[static_cast<std::size_t>(y)];
  out.classes = labels.size();
  std::string list;
  for (std::size_t k = 0; k < labels.size(); ++k) list += (k ? "," : "") + std::to_string(labels[k]);
  out.provenance.push_back("filter:[" + list + "]");
  return out;
}

std::pair<TaskSet, TaskSet> train_test_split(const TaskSet& task, double ratio, std::uint64_t seed) {
  if (task.empty()) throw DataError("train_test_split: empty task");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("train_test_split: ratio must lie in (0, 1)");
  auto rng = make_rng(seed, streams::split);
  const auto order = shuffled_indices(rng, task.size());
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(task.size())));
  std::span<const std::size_t> all(order);
  auto train = task.subset(all.first(n_train));
  auto test = task.subset(all.subspan(n_train));
  train.name = task.name + "/train";
  test.name = task.name + "/test";
  return {std::move(train), std::move(test)};
}

namespace {

void write_i32_le(std::ostream& os, std::span<const int> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<int> read_i32_le(std::istream& is, std::size_t count) {
  const auto floats = read_f32_le(is, count);
  std::vector<int> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<int>(floats[i]);
  return out;
}

}  // namespace

void write_taskset(std::ostream& os, const TaskSet& task) {
  nlohmann::json header = {{"format", "cps-taskset"},   {"version", 1},
                           {"name", task.name},         {"count", task.size()},
                           {"sample_shape", task.sample_shape}, {"classes", task.classes},
                           {"provenance", task.provenance}};
  os << header.dump() << '\n';
  write_f32_le(os, task.inputs);
  write_i32_le(os, task.fine_labels);
  write_i32_le(os, task.coarse_labels);
}

TaskSet read_taskset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("taskset: missing header");
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format") != "cps-taskset") throw DataError("taskset: unexpected format tag");
    TaskSet task;
    task.name = header.at("name").get<std::string>();
    task.sample_shape = header.at("sample_shape").get<Shape>();
    task.classes = header.at("classes").get<std::size_t>();
    task.provenance = header.at("provenance").get<std::vector<std::string>>();
    const auto count = header.at("count").get<std::size_t>();
    task.inputs = read_f32_le(is, count * shape_size(task.sample_shape));
    task.fine_labels = read_i32_le(is, count);
    task.coarse_labels = read_i32_le(is, count);
    task.validate();
    return task;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("taskset: malformed header: ") + e.what());
  }
}

}  // namespace cps
