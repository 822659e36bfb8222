#include "cps/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cps/rng.hpp"
#include "cps/trainers.hpp"
#include "parallel.hpp"

namespace cps {

std::string_view to_string(InferenceMode mode) {
  switch (mode) {
    case InferenceMode::centre: return "centre";
    case InferenceMode::ensemble: return "ensemble";
    case InferenceMode::interpolated: return "interpolated";
    case InferenceMode::boundary: return "boundary";
    case InferenceMode::multi_task: return "multi-task";
  }
  return "?";
}

InferenceMode inference_mode_from_string(std::string_view name) {
  if (name == "centre" || name == "center") return InferenceMode::centre;
  if (name == "ensemble") return InferenceMode::ensemble;
  if (name == "interpolated") return InferenceMode::interpolated;
  if (name == "boundary") return InferenceMode::boundary;
  if (name == "multi-task") return InferenceMode::multi_task;
  throw ConfigError("unknown inference mode '" + std::string(name) + "'");
}

std::vector<Coeffs> sample_coeffs(std::uint64_t seed, std::size_t m, std::size_t n) {
  if (m < 1) throw ConfigError("sample_coeffs: M must be >= 1");
  if (n < 1) throw ConfigError("sample_coeffs: N must be >= 1");
  auto rng = make_rng(seed, streams::coeffs);
  std::vector<Coeffs> out;
  out.reserve(m);
  while (out.size() < m) {
    Coeffs c{std::vector<double>(n)};
    for (auto& a : c.alpha) a = uniform01(rng);
    if (c.sum() > 0.0) out.push_back(c.normalized());
  }
  return out;
}

std::vector<Coeffs> grid_coeffs(std::size_t segments, std::size_t n, bool exclude_boundary, bool normalize) {
  if (segments < 2) throw ConfigError("grid_coeffs: segments must be >= 2");
  if (n < 1) throw ConfigError("grid_coeffs: N must be >= 1");
  const std::size_t top = segments - 1;
  std::vector<std::size_t> digits(n, 0);
  std::vector<Coeffs> out;
  std::set<std::vector<std::size_t>> seen;
  while (true) {
    const std::size_t total = std::accumulate(digits.begin(), digits.end(), std::size_t{0});
    if (total > 0) {
      Coeffs c{std::vector<double>(n)};
      if (normalize) {
        std::size_t g = 0;
        for (auto d : digits) g = std::gcd(g, d);
        std::vector<std::size_t> reduced(n);
        for (std::size_t i = 0; i < n; ++i) reduced[i] = digits[i] / g;
        if (seen.insert(reduced).second) {
          for (std::size_t i = 0; i < n; ++i) c.alpha[i] = static_cast<double>(digits[i]) / static_cast<double>(total);
          if (!(exclude_boundary && c.is_one_hot())) out.push_back(std::move(c));
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) c.alpha[i] = static_cast<double>(digits[i]) / static_cast<double>(top);
        if (!(exclude_boundary && c.is_one_hot())) out.push_back(std::move(c));
      }
    }
    // odometer increment, last axis fastest
    std::size_t axis = n;
    while (axis > 0) {
      --axis;
      if (++digits[axis] <= top) break;
      digits[axis] = 0;
      if (axis == 0) {
        axis = n + 1;
        break;
      }
    }
    if (axis == n + 1) break;
  }
  if (out.empty()) throw ConfigError("grid_coeffs: every coefficient vector was excluded");
  return out;
}

std::size_t first_argmin(std::span<const double> values) {
  if (values.empty()) throw ConfigError("argmin of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] < values[best]) best = i;
  return best;
}

namespace {

void require_candidates(std::span<const Coeffs> coeffs, const Subspace& s) {
  if (coeffs.empty()) throw ConfigError("inference needs a non-empty coefficient list");
  for (const auto& c : coeffs) c.validate(s.size());
}

ParamVector at(const Subspace& s, const Coeffs& c) {
  return interpolate_params(c, std::span<const ParamVector>(s.endpoints()));
}

}  // namespace

InferenceReport centre_report(const Subspace& subspace, const TaskSet& task) {
  const auto ev = evaluate(subspace.spec(), centre(subspace), task);
  InferenceReport r;
  r.mode = InferenceMode::centre;
  r.coeffs = Coeffs::uniform(subspace.size());
  r.accuracy = ev.accuracy;
  r.loss = ev.loss;
  r.samples = ev.count;
  r.candidates = 1;
  r.per_task_accuracy = {ev.accuracy};
  r.per_task_loss = {ev.loss};
  return r;
}

InferenceReport ensemble_predict(const Subspace& subspace, std::span<const Coeffs> coeffs, const TaskSet& task) {
  require_candidates(coeffs, subspace);
  if (task.empty()) throw DataError("ensemble_predict: empty task");
  const std::size_t classes = subspace.spec().classes;
  std::vector<Tensor<float>> probs(coeffs.size());
  detail::parallel_for(coeffs.size(), [&](std::size_t j) { probs[j] = predict_proba(subspace.spec(), at(subspace, coeffs[j]), task); });
  std::vector<double> mean(task.size() * classes, 0.0);
  for (const auto& p : probs)
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += p[k];
  for (auto& v : mean) v /= static_cast<double>(coeffs.size());

  std::size_t correct = 0;
  double nll = 0.0;
  for (std::size_t s = 0; s < task.size(); ++s) {
    const double* row = &mean[s * classes];
    const auto pred = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    const auto label = static_cast<std::size_t>(task.fine_labels[s]);
    if (pred == label) ++correct;
    nll -= std::log(std::max(row[label], 1e-300));
  }
  InferenceReport r;
  r.mode = InferenceMode::ensemble;
  r.samples = task.size();
  r.candidates = coeffs.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(task.size());
  r.loss = nll / static_cast<double>(task.size());
  r.per_task_accuracy = {r.accuracy};
  r.per_task_loss = {r.loss};
  return r;
}

InferenceReport multi_task_lowest_loss(const Subspace& subspace, std::span<const TaskSet> tasks,
                                       std::span<const Coeffs> coeffs) {
  require_candidates(coeffs, subspace);
  if (tasks.empty()) throw ConfigError("multi-task selection needs at least one task");
  std::vector<std::vector<Evaluation>> evals(coeffs.size());
  detail::parallel_for(coeffs.size(), [&](std::size_t j) {
    const auto p = at(subspace, coeffs[j]);
    for (const auto& t : tasks) evals[j].push_back(evaluate(subspace.spec(), p, t));
  });
  std::vector<double> summed(coeffs.size(), 0.0);
  for (std::size_t j = 0; j < coeffs.size(); ++j)
    for (const auto& e : evals[j]) summed[j] += e.loss;
  const auto best = first_argmin(summed);

  InferenceReport r;
  r.mode = tasks.size() == 1 ? InferenceMode::interpolated : InferenceMode::multi_task;
  r.coeffs = coeffs[best];
  r.index = best;
  r.loss = summed[best];
  r.candidates = coeffs.size();
  double acc = 0.0;
  for (const auto& e : evals[best]) {
    r.per_task_accuracy.push_back(e.accuracy);
    r.per_task_loss.push_back(e.loss);
    r.samples += e.count;
    acc += e.accuracy;
  }
  r.accuracy = acc / static_cast<double>(tasks.size());
  return r;
}

InferenceReport lowest_loss_interpolated(const Subspace& subspace, const TaskSet& task, std::span<const Coeffs> coeffs) {
  auto r = multi_task_lowest_loss(subspace, std::span<const TaskSet>(&task, 1), coeffs);
  r.mode = InferenceMode::interpolated;
  return r;
}

InferenceReport lowest_loss_boundary(const Subspace& subspace, const TaskSet& task) {
  std::vector<Evaluation> evals;
  for (const auto& e : subspace.endpoints()) evals.push_back(evaluate(subspace.spec(), e, task));
  std::vector<double> losses;
  for (const auto& e : evals) losses.push_back(e.loss);
  const auto best = first_argmin(losses);
  InferenceReport r;
  r.mode = InferenceMode::boundary;
  r.coeffs = Coeffs::one_hot(subspace.size(), best);
  r.index = best;
  r.accuracy = evals[best].accuracy;
  r.loss = evals[best].loss;
  r.samples = evals[best].count;
  r.candidates = subspace.size();
  r.per_task_accuracy = {r.accuracy};
  r.per_task_loss = {r.loss};
  return r;
}

LandscapeGrid landscape_map(const Subspace& subspace, std::span<const std::pair<Coeffs, TaskSet>> task_grid,
                            std::span<const Coeffs> param_grid) {
  if (task_grid.empty() || param_grid.empty()) throw ConfigError("landscape grids must be non-empty");
  for (const auto& c : param_grid) c.validate(subspace.size());
  LandscapeGrid g;
  for (const auto& [c, t] : task_grid) g.input_coeffs.push_back(c);
  g.param_coeffs.assign(param_grid.begin(), param_grid.end());
  const std::size_t rows = g.rows(), cols = g.cols();
  g.loss.assign(rows * cols, 0.0);
  g.accuracy.assign(rows * cols, 0.0);
  detail::parallel_for(cols, [&](std::size_t c) {
    const auto p = at(subspace, param_grid[c]);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto ev = evaluate(subspace.spec(), p, task_grid[r].second);
      g.loss[r * cols + c] = ev.loss;
      g.accuracy[r * cols + c] = ev.accuracy;
    }
  });
  for (std::size_t r = 0; r < rows; ++r)
    g.argmin.push_back(first_argmin(std::span<const double>(g.loss).subspan(r * cols, cols)));
  return g;
}

}  // namespace cps
