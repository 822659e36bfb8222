#pragma once

// Parameter-space geometry: SGD steps, cosine distances between parameter
// points, and linear interpolation inside the span of subspace endpoints.

#include <span>
#include <utility>
#include <vector>

#include "cps/model.hpp"

namespace cps {

/// Interpolation coefficients, one per endpoint or task.
struct Coeffs {
  std::vector<double> alpha;

  std::size_t size() const noexcept { return alpha.size(); }
  double sum() const noexcept;
  /// Each alpha_i in [0, 1] and sum <= n.
  void validate(std::size_t n) const;
  /// Rescaled to sum to 1; throws on the all-zero vector.
  Coeffs normalized() const;
  /// Index of the largest coefficient, lowest index on ties.
  std::size_t argmax() const;
  bool is_one_hot() const noexcept;

  static Coeffs uniform(std::size_t n) { return Coeffs{std::vector<double>(n, 1.0 / static_cast<double>(n))}; }
  static Coeffs one_hot(std::size_t n, std::size_t i) {
    Coeffs c{std::vector<double>(n, 0.0)};
    c.alpha.at(i) = 1.0;
    return c;
  }

  friend bool operator==(const Coeffs&, const Coeffs&) = default;
};

/// params - lr * grad, elementwise.
template <typename T>
BasicParamVector<T> sgd_step(const BasicParamVector<T>& params, const BasicGradRecord<T>& grad, double lr);

/// 1 - a.b / (|a| |b|) over the full flattened vectors.
template <typename T>
T cosine_distance(const BasicParamVector<T>& a, const BasicParamVector<T>& b);

/// Mean cosine distance from endpoint i to every other endpoint, and its gradient
/// with respect to endpoint i alone (the others are held constant).
template <typename T>
std::pair<T, BasicGradRecord<T>> avg_cosine_distance_grad(std::size_t i, std::span<const BasicParamVector<T>> endpoints);

/// sum_i alpha_i * theta_i, accumulated left to right.
template <typename T>
BasicParamVector<T> interpolate_params(const Coeffs& coeffs, std::span<const BasicParamVector<T>> endpoints);

/// Gradient decomposition check for a linear model and the loss mean(theta x):
/// max |dL(theta; sum alpha_i x_i)/dtheta - sum alpha_i dL(theta; x_i)/dtheta|.
/// Throws ConfigError when `theta` is not a bias-free linear map.
template <typename T>
T linear_grad_decomposition_check(const BasicParamVector<T>& theta, std::span<const Tensor<T>> inputs,
                                  const Coeffs& coeffs);

}  // namespace cps
