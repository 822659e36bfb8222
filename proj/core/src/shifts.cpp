#include "cps/shifts.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cps/errors.hpp"
#include "cps/rng.hpp"

namespace cps {

const std::array<int, 100> kTestRotations{
    20,  47,  77,  109, 304, 87,  304, 254, 146, 94,  98,  39,  306, 114, 267, 42,  231, 120, 40,  339,
    352, 14,  264, 288, 203, 175, 308, 355, 324, 76,  213, 209, 167, 4,   170, 234, 120, 87,  43,  337,
    300, 358, 29,  237, 107, 62,  84,  95,  9,   327, 203, 331, 1,   27,  59,  122, 52,  294, 64,  128,
    263, 39,  141, 291, 25,  39,  176, 79,  104, 243, 265, 166, 270, 113, 23,  65,  297, 19,  196, 134,
    119, 169, 42,  178, 250, 253, 276, 354, 291, 298, 20,  0,   343, 263, 164, 246, 217, 184, 163, 98};

std::string_view to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::backdoor: return "backdoor";
    case ShiftKind::rotation: return "rotation";
    case ShiftKind::permutation: return "permutation";
    case ShiftKind::cutmix: return "cutmix";
  }
  return "?";
}

ShiftKind shift_kind_from_string(std::string_view name) {
  if (name == "backdoor") return ShiftKind::backdoor;
  if (name == "rotation") return ShiftKind::rotation;
  if (name == "permutation") return ShiftKind::permutation;
  if (name == "cutmix") return ShiftKind::cutmix;
  throw ConfigError("unknown shift kind '" + std::string(name) + "'");
}

void ShiftSpec::validate() const {
  if (kind == ShiftKind::backdoor) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("backdoor poison rate must lie in [0, 1]");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("backdoor epsilon must lie in [0, 1]");
  }
  if (kind == ShiftKind::rotation && !(degrees >= 0.0 && degrees < 360.0)) {
    throw ConfigError("rotation degrees must lie in [0, 360)");
  }
}

std::string ShiftSpec::describe() const {
  std::ostringstream os;
  os << to_string(kind) << ":seed=" << seed;
  if (kind == ShiftKind::backdoor) os << ",p=" << p << ",eps=" << epsilon;
  if (kind == ShiftKind::rotation) os << ",deg=" << degrees;
  return os.str();
}

TaskSet apply_shift(const TaskSet& task, const ShiftSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case ShiftKind::backdoor: return apply_backdoor(task, spec);
    case ShiftKind::rotation: return apply_rotation(task, spec.degrees);
    case ShiftKind::permutation: return apply_permutation(task, spec.seed);
    case ShiftKind::cutmix: break;
  }
  throw ConfigError("cutmix is a batch-level augmentation, not a task shift");
}

namespace {

struct Geometry {
  std::size_t channels, height, width;
};

Geometry geometry_of(const Shape& s) {
  if (s.size() == 3) return {s[0], s[1], s[2]};
  if (s.size() == 1) return {1, 1, s[0]};
  throw ShapeError("unsupported sample shape " + shape_string(s));
}

}  // namespace

// ---------------------------------------------------------------- backdoor

Trigger make_trigger(const Shape& sample_shape, double epsilon, std::uint64_t seed_index) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("trigger epsilon must lie in [0, 1]");
  const auto g = geometry_of(sample_shape);
  const bool image = sample_shape.size() == 3;
  Trigger t;
  if (image) {
    t.side = static_cast<std::size_t>(std::floor(std::sqrt(epsilon) * static_cast<double>(std::min(g.height, g.width))));
  } else {
    t.side = static_cast<std::size_t>(std::floor(epsilon * static_cast<double>(g.width)));
  }
  if (t.side == 0) throw ConfigError("backdoor epsilon " + std::to_string(epsilon) + " yields a zero-size trigger");

  auto rng = make_rng(seed_index, streams::backdoor);
  const std::size_t rows = image ? t.side : 1;
  t.top = image ? uniform_index(rng, g.height - t.side + 1) : 0;
  t.left = uniform_index(rng, g.width - t.side + 1);
  t.pattern.resize(g.channels * rows * t.side);
  std::uniform_int_distribution<int> pixel(0, 255);
  for (auto& v : t.pattern) v = static_cast<float>(pixel(rng));
  return t;
}

void stamp_trigger(std::span<float> sample, const Shape& sample_shape, const Trigger& trigger) {
  const auto g = geometry_of(sample_shape);
  const std::size_t rows = sample_shape.size() == 3 ? trigger.side : 1;
  if (sample.size() != g.channels * g.height * g.width) throw ShapeError("stamp_trigger: sample size mismatch");
  std::size_t k = 0;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < trigger.side; ++j)
        sample[(c * g.height + trigger.top + i) * g.width + trigger.left + j] = trigger.pattern[k++];
}

BackdoorResult apply_backdoor_detailed(const TaskSet& task, const ShiftSpec& spec) {
  if (spec.kind != ShiftKind::backdoor) throw ConfigError("apply_backdoor needs a backdoor spec");
  spec.validate();
  BackdoorResult out{task, {}, {}, make_trigger(task.sample_shape, spec.epsilon, spec.seed)};
  if (task.classes < 2) throw DataError("backdoor relabeling needs at least 2 classes");

  auto rng = make_rng(spec.seed, streams::poison);
  const auto count = static_cast<std::size_t>(std::llround(spec.p * static_cast<double>(task.size())));
  auto order = shuffled_indices(rng, task.size());
  out.poisoned.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.poisoned.begin(), out.poisoned.end());
  for (const auto i : out.poisoned) {
    stamp_trigger(out.task.sample(i), task.sample_shape, out.trigger);
    const int y = task.fine_labels[i];
    const auto r = static_cast<int>(uniform_index(rng, task.classes - 1));
    out.original_labels.push_back(y);
    out.task.fine_labels[i] = r < y ? r : r + 1;
  }
  out.task.provenance.push_back(spec.describe());
  return out;
}

TaskSet apply_backdoor(const TaskSet& task, const ShiftSpec& spec) { return apply_backdoor_detailed(task, spec).task; }

// ---------------------------------------------------------------- rotation

TaskSet apply_rotation(const TaskSet& task, double degrees) {
  if (!(degrees >= 0.0 && degrees < 360.0)) throw ConfigError("rotation degrees must lie in [0, 360)");
  if (!task.is_image()) throw ShapeError("rotation needs image-shaped samples");
  TaskSet out = task;
  out.provenance.push_back("rotation:deg=" + std::to_string(degrees));
  if (degrees == 0.0) return out;

  const std::size_t C = task.sample_shape[0], H = task.sample_shape[1], W = task.sample_shape[2];
  double c = 0.0, s = 0.0;
  if (degrees == 90.0) {
    s = 1.0;
  } else if (degrees == 180.0) {
    c = -1.0;
  } else if (degrees == 270.0) {
    s = -1.0;
  } else {
    const double rad = degrees * std::numbers::pi / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
  }
  const double cy = (static_cast<double>(H) - 1.0) / 2.0, cx = (static_cast<double>(W) - 1.0) / 2.0;
  auto at = [&](std::span<const float> img, std::size_t ch, long y, long x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long>(H) || x >= static_cast<long>(W)) return 0.0;
    return img[(ch * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)];
  };
  for (std::size_t n = 0; n < task.size(); ++n) {
    const auto src = task.sample(n);
    auto dst = out.sample(n);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const double dy = static_cast<double>(i) - cy, dx = static_cast<double>(j) - cx;
        // inverse map; positive degrees turn the image counter-clockwise as displayed (row 0 on top)
        const double sx = c * dx - s * dy + cx;
        const double sy = s * dx + c * dy + cy;
        const double fy = std::floor(sy), fx = std::floor(sx);
        const double wy = sy - fy, wx = sx - fx;
        const auto y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
        for (std::size_t ch = 0; ch < C; ++ch) {
          double v = (1.0 - wy) * (1.0 - wx) * at(src, ch, y0, x0);
          if (wx != 0.0) v += (1.0 - wy) * wx * at(src, ch, y0, x0 + 1);
          if (wy != 0.0) v += wy * (1.0 - wx) * at(src, ch, y0 + 1, x0);
          if (wx != 0.0 && wy != 0.0) v += wy * wx * at(src, ch, y0 + 1, x0 + 1);
          dst[(ch * H + i) * W + j] = static_cast<float>(std::clamp(v, 0.0, 255.0));
        }
      }
  }
  return out;
}

// ---------------------------------------------------------------- permutation

std::vector<std::size_t> permutation_for(std::uint64_t seed, std::size_t n) {
  if (seed == 0) {
    std::vector<std::size_t> id(n);
    for (std::size_t k = 0; k < n; ++k) id[k] = k;
    return id;
  }
  auto rng = make_rng(seed, streams::permutation);
  return shuffled_indices(rng, n);
}

namespace {

TaskSet permute_positions(const TaskSet& task, std::uint64_t seed, bool inverse) {
  const auto g = geometry_of(task.sample_shape);
  const std::size_t positions = g.height * g.width;
  const auto perm = permutation_for(seed, positions);
  TaskSet out = task;
  for (std::size_t n = 0; n < task.size(); ++n) {
    const auto src = task.sample(n);
    auto dst = out.sample(n);
    for (std::size_t ch = 0; ch < g.channels; ++ch)
      for (std::size_t k = 0; k < positions; ++k) {
        if (inverse) {
          dst[ch * positions + k] = src[ch * positions + perm[k]];
        } else {
          dst[ch * positions + perm[k]] = src[ch * positions + k];
        }
      }
  }
  out.provenance.push_back(std::string(inverse ? "inverse-" : "") + "permutation:seed=" + std::to_string(seed));
  return out;
}

}  // namespace

TaskSet apply_permutation(const TaskSet& task, std::uint64_t seed) { return permute_positions(task, seed, false); }
TaskSet apply_inverse_permutation(const TaskSet& task, std::uint64_t seed) { return permute_positions(task, seed, true); }

// ---------------------------------------------------------------- cutmix

CutMixResult cutmix_with_box(const Tensor<float>& inputs, std::span<const int> labels, std::size_t classes,
                             std::span<const std::size_t> partner, const Box& box) {
  if (inputs.rank() < 2) throw ShapeError("cutmix: inputs need a batch axis");
  const std::size_t B = inputs.dim(0);
  const Shape sample_shape(inputs.shape().begin() + 1, inputs.shape().end());
  const auto g = geometry_of(sample_shape);
  if (labels.size() != B || partner.size() != B) throw ShapeError("cutmix: label/partner count mismatch");
  if (box.top + box.height > g.height || box.left + box.width > g.width) throw ShapeError("cutmix: box outside image");

  CutMixResult out{inputs, Tensor<float>({B, classes}), std::vector<std::size_t>(partner.begin(), partner.end()), box, 0.0};
  const std::size_t per = g.channels * g.height * g.width;
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t q = partner[b];
    if (q >= B) throw ShapeError("cutmix: partner index out of range");
    for (std::size_t ch = 0; ch < g.channels; ++ch)
      for (std::size_t i = box.top; i < box.top + box.height; ++i)
        for (std::size_t j = box.left; j < box.left + box.width; ++j) {
          const std::size_t k = (ch * g.height + i) * g.width + j;
          out.inputs[b * per + k] = inputs[q * per + k];
        }
  }
  const double w = static_cast<double>(box.area()) / static_cast<double>(g.height * g.width);
  out.partner_weight = w;
  for (std::size_t b = 0; b < B; ++b) {
    const auto own = static_cast<std::size_t>(labels[b]);
    const auto other = static_cast<std::size_t>(labels[partner[b]]);
    if (own >= classes || other >= classes) throw DataError("cutmix: label out of range");
    out.soft_labels[b * classes + own] += static_cast<float>(1.0 - w);
    out.soft_labels[b * classes + other] += static_cast<float>(w);
  }
  return out;
}

CutMixResult cutmix_batch(const Tensor<float>& inputs, std::span<const int> labels, std::size_t classes,
                          std::uint64_t seed) {
  if (inputs.rank() < 2 || inputs.dim(0) < 2) throw ShapeError("cutmix needs a batch of at least 2");
  const Shape sample_shape(inputs.shape().begin() + 1, inputs.shape().end());
  const auto g = geometry_of(sample_shape);
  auto rng = make_rng(seed, streams::cutmix);
  const double lambda = uniform01(rng);
  const double ratio = std::sqrt(1.0 - lambda);
  const auto cut_h = static_cast<std::size_t>(std::floor(static_cast<double>(g.height) * ratio));
  const auto cut_w = static_cast<std::size_t>(std::floor(static_cast<double>(g.width) * ratio));
  const auto cy = static_cast<long>(uniform_index(rng, g.height));
  const auto cx = static_cast<long>(uniform_index(rng, g.width));
  const long top = std::clamp<long>(cy - static_cast<long>(cut_h / 2), 0, static_cast<long>(g.height));
  const long bottom = std::clamp<long>(cy + static_cast<long>(cut_h - cut_h / 2), 0, static_cast<long>(g.height));
  const long left = std::clamp<long>(cx - static_cast<long>(cut_w / 2), 0, static_cast<long>(g.width));
  const long right = std::clamp<long>(cx + static_cast<long>(cut_w - cut_w / 2), 0, static_cast<long>(g.width));
  Box box{static_cast<std::size_t>(top), static_cast<std::size_t>(left), static_cast<std::size_t>(bottom - top),
          static_cast<std::size_t>(right - left)};
  const auto partner = shuffled_indices(rng, inputs.dim(0));
  return cutmix_with_box(inputs, labels, classes, partner, box);
}

}  // namespace cps
