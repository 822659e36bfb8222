#include "cps/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cps/errors.hpp"
#include "cps/rng.hpp"

namespace cps {

SyntheticMode synthetic_mode_from_string(std::string_view name) {
  if (name == "rotated-gaussians") return SyntheticMode::rotated_gaussians;
  if (name == "shifted-rings") return SyntheticMode::shifted_rings;
  throw ConfigError("unknown synthetic mode '" + std::string(name) + "'");
}

std::string_view to_string(SyntheticMode mode) {
  return mode == SyntheticMode::rotated_gaussians ? "rotated-gaussians" : "shifted-rings";
}

std::vector<TaskSet> make_synthetic_tasks(const SyntheticOptions& o) {
  if (o.n_tasks < 1) throw ConfigError("make_synthetic_tasks: n_tasks must be >= 1");
  if (o.classes < 2) throw ConfigError("make_synthetic_tasks: need at least 2 classes");
  if (o.samples_per_class < 1) throw ConfigError("make_synthetic_tasks: samples_per_class must be >= 1");
  if (o.features < 2) throw ConfigError("make_synthetic_tasks: need at least 2 features");
  if (!o.sample_shape.empty() && shape_size(o.sample_shape) != o.features) {
    throw ConfigError("make_synthetic_tasks: sample shape does not hold exactly `features` values");
  }

  auto rng = make_rng(o.seed, streams::synthetic);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Fixed embedding of the 2-d latent plane plus a quadratic lift into `features` dims.
  std::vector<double> embed(o.features * 4);
  for (auto& v : embed) v = normal(rng) / 2.0;

  const std::size_t count = o.classes * o.samples_per_class;
  struct Latent {
    int label;
    double a, b;
  };
  std::vector<Latent> latents;
  latents.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    const auto label = static_cast<int>(j % o.classes);
    const double u = normal(rng), v = normal(rng), w = uniform01(rng);
    latents.push_back({label, 0.0, 0.0});
    auto& l = latents.back();
    if (o.mode == SyntheticMode::rotated_gaussians) {
      const double theta = 2.0 * std::numbers::pi * label / static_cast<double>(o.classes);
      l.a = 2.0 * std::cos(theta) + o.noise * u;
      l.b = 2.0 * std::sin(theta) + o.noise * v;
    } else {
      const double radius = 0.8 * (1.0 + label) + o.noise * u * 0.5;
      const double phi = 2.0 * std::numbers::pi * w;
      l.a = radius * std::cos(phi);
      l.b = radius * std::sin(phi);
    }
  }

  std::vector<TaskSet> tasks;
  for (std::size_t t = 0; t < o.n_tasks; ++t) {
    TaskSet task;
    task.sample_shape = o.sample_shape.empty() ? Shape{o.features} : o.sample_shape;
    task.classes = o.classes;
    task.name = "synthetic-" + std::string(to_string(o.mode)) + "-" + std::to_string(t);
    task.provenance.push_back("synthetic:seed=" + std::to_string(o.seed) + ",task=" + std::to_string(t));
    task.inputs.reserve(count * o.features);
    const double step = o.shift * static_cast<double>(t);
    for (const auto& l : latents) {
      double a = l.a, b = l.b;
      if (o.mode == SyntheticMode::rotated_gaussians) {
        const double c = std::cos(step), s = std::sin(step);
        a = c * l.a - s * l.b;
        b = s * l.a + c * l.b;
      } else {
        a += step;
        b -= 0.5 * step;
      }
      const double lift[4] = {a, b, 0.25 * (a * a - b * b), 0.5 * a * b};
      for (std::size_t f = 0; f < o.features; ++f) {
        double x = 0.0;
        for (std::size_t k = 0; k < 4; ++k) x += embed[f * 4 + k] * lift[k];
        const double pixel = o.pixel_offset + o.pixel_scale * x;
        task.inputs.push_back(static_cast<float>(std::clamp(pixel, 0.0, 255.0)));
      }
      task.fine_labels.push_back(l.label);
      task.coarse_labels.push_back(l.label);
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

}  // namespace cps
