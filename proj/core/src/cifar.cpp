#include "cps/cifar.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "cps/errors.hpp"

namespace cps {

namespace {

TaskSet parse_records(std::span<const std::uint8_t> bytes, std::size_t label_bytes, std::string name) {
  const std::size_t stride = label_bytes + kCifarPixels;
  if (bytes.size() % stride != 0) {
    throw DataError(name + ": file length " + std::to_string(bytes.size()) + " is not a multiple of " +
                    std::to_string(stride));
  }
  const std::size_t fine_classes = label_bytes == 1 ? 10 : 100;
  const std::size_t coarse_classes = label_bytes == 1 ? 10 : 20;
  const std::size_t count = bytes.size() / stride;

  TaskSet task;
  task.sample_shape = {3, 32, 32};
  task.classes = fine_classes;
  task.name = std::move(name);
  task.provenance.push_back("source:" + task.name);
  task.inputs.reserve(count * kCifarPixels);
  task.fine_labels.reserve(count);
  task.coarse_labels.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    const auto rec = bytes.subspan(r * stride, stride);
    const int coarse = rec[0];
    const int fine = rec[label_bytes - 1];
    if (static_cast<std::size_t>(fine) >= fine_classes || static_cast<std::size_t>(coarse) >= coarse_classes) {
      throw DataError(task.name + ": record " + std::to_string(r) + " has out-of-range label");
    }
    task.fine_labels.push_back(fine);
    task.coarse_labels.push_back(coarse);
    for (std::size_t p = label_bytes; p < stride; ++p) task.inputs.push_back(static_cast<float>(rec[p]));
  }
  return task;
}

std::vector<std::uint8_t> serialize_records(const TaskSet& task, std::size_t label_bytes) {
  if (task.sample_size() != kCifarPixels) throw DataError("serialize: task samples are not 3x32x32");
  std::vector<std::uint8_t> out;
  out.reserve(task.size() * (label_bytes + kCifarPixels));
  for (std::size_t r = 0; r < task.size(); ++r) {
    if (label_bytes == 2) out.push_back(static_cast<std::uint8_t>(task.coarse_labels[r]));
    out.push_back(static_cast<std::uint8_t>(task.fine_labels[r]));
    for (const float v : task.sample(r)) {
      if (!(v >= 0.0f && v <= 255.0f) || std::nearbyint(v) != v) throw DataError("serialize: non-integral pixel value");
      out.push_back(static_cast<std::uint8_t>(v));
    }
  }
  return out;
}

}  // namespace

TaskSet parse_cifar10(std::span<const std::uint8_t> bytes, std::string name) { return parse_records(bytes, 1, std::move(name)); }
TaskSet parse_cifar100(std::span<const std::uint8_t> bytes, std::string name) { return parse_records(bytes, 2, std::move(name)); }

TaskSet load_cifar10(const std::string& path) { return parse_cifar10(read_file_bytes(path), path); }
TaskSet load_cifar100(const std::string& path) { return parse_cifar100(read_file_bytes(path), path); }

std::vector<std::uint8_t> serialize_cifar10(const TaskSet& task) { return serialize_records(task, 1); }
std::vector<std::uint8_t> serialize_cifar100(const TaskSet& task) { return serialize_records(task, 2); }

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace cps
