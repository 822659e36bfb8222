#pragma once

// CIFAR binary batches. CIFAR-10 records are 3073 bytes (label, 3072 pixels);
// CIFAR-100 records are 3074 bytes (coarse label, fine label, 3072 pixels).
// Pixels are stored as the R plane, then G, then B, each 32x32 row-major.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cps/taskset.hpp"

namespace cps {

inline constexpr std::size_t kCifarPixels = 3 * 32 * 32;
inline constexpr std::size_t kCifar10Record = 1 + kCifarPixels;
inline constexpr std::size_t kCifar100Record = 2 + kCifarPixels;

TaskSet parse_cifar10(std::span<const std::uint8_t> bytes, std::string name = "cifar10");
TaskSet parse_cifar100(std::span<const std::uint8_t> bytes, std::string name = "cifar100");

TaskSet load_cifar10(const std::string& path);
TaskSet load_cifar100(const std::string& path);

/// Inverse of the parsers; pixel values must be integral.
std::vector<std::uint8_t> serialize_cifar10(const TaskSet& task);
std::vector<std::uint8_t> serialize_cifar100(const TaskSet& task);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace cps
