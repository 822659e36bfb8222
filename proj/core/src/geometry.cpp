#include "cps/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cps {

double Coeffs::sum() const noexcept { return std::accumulate(alpha.begin(), alpha.end(), 0.0); }

void Coeffs::validate(std::size_t n) const {
  if (alpha.size() != n) {
    throw ConfigError("coefficient count " + std::to_string(alpha.size()) + " does not match " + std::to_string(n));
  }
  for (const double a : alpha) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("interpolation coefficient " + std::to_string(a) + " outside [0, 1]");
  }
  if (sum() > static_cast<double>(n)) throw ConfigError("coefficient sum exceeds endpoint count");
}

Coeffs Coeffs::normalized() const {
  const double s = sum();
  if (!(s > 0.0)) throw NumericError("cannot normalize an all-zero coefficient vector");
  Coeffs out = *this;
  for (auto& a : out.alpha) a /= s;
  return out;
}

std::size_t Coeffs::argmax() const {
  if (alpha.empty()) throw ConfigError("argmax of empty coefficients");
  return static_cast<std::size_t>(std::max_element(alpha.begin(), alpha.end()) - alpha.begin());
}

bool Coeffs::is_one_hot() const noexcept {
  std::size_t ones = 0;
  for (const double a : alpha) {
    if (a == 1.0) {
      ++ones;
    } else if (a != 0.0) {
      return false;
    }
  }
  return ones == 1;
}

template <typename T>
BasicParamVector<T> sgd_step(const BasicParamVector<T>& params, const BasicGradRecord<T>& grad, double lr) {
  if (params.layout() != grad.gradient.layout() || params.size() != grad.gradient.size()) {
    throw ShapeError("sgd_step: gradient layout does not match parameters");
  }
  if (!(lr >= 0.0)) throw ConfigError("sgd_step: learning rate must be non-negative");
  std::vector<T> out(params.size());
  const auto step = static_cast<T>(lr);
  const auto p = params.values();
  const auto g = grad.gradient.values();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = p[k] - step * g[k];
  return params.with_values(std::move(out));
}

template <typename T>
T cosine_distance(const BasicParamVector<T>& a, const BasicParamVector<T>& b) {
  a.require_compatible(b, "cosine_distance");
  ad::Tape<T> tape;
  auto va = tape.constant(Tensor<T>({a.size()}, a.storage()));
  auto vb = tape.constant(Tensor<T>({b.size()}, b.storage()));
  return tape.value(ad::cosine_distance(tape, va, vb))[0];
}

template <typename T>
std::pair<T, BasicGradRecord<T>> avg_cosine_distance_grad(std::size_t i, std::span<const BasicParamVector<T>> endpoints) {
  if (endpoints.size() < 2) throw ConfigError("average cosine distance needs at least 2 endpoints");
  if (i >= endpoints.size()) throw ConfigError("endpoint index out of range");
  for (const auto& e : endpoints) endpoints[i].require_compatible(e, "avg_cosine_distance_grad");

  ad::Tape<T> tape;
  const auto& self = endpoints[i];
  auto vi = tape.variable(Tensor<T>({self.size()}, self.storage()));
  ad::Var total{};
  bool first = true;
  for (std::size_t n = 0; n < endpoints.size(); ++n) {
    if (n == i) continue;
    auto vn = tape.constant(Tensor<T>({endpoints[n].size()}, endpoints[n].storage()));
    auto d = ad::cosine_distance(tape, vi, vn);
    total = first ? d : ad::add(tape, total, d);
    first = false;
  }
  auto mean = ad::scale(tape, total, T{1} / static_cast<T>(endpoints.size() - 1));
  tape.backward(mean);
  const T value = tape.value(mean)[0];
  return {value, BasicGradRecord<T>{self.with_values(std::move(tape.grad(vi).storage())), value, 0}};
}

template <typename T>
BasicParamVector<T> interpolate_params(const Coeffs& coeffs, std::span<const BasicParamVector<T>> endpoints) {
  if (endpoints.empty()) throw ConfigError("interpolate_params: no endpoints");
  coeffs.validate(endpoints.size());
  for (const auto& e : endpoints) endpoints[0].require_compatible(e, "interpolate_params");
  std::vector<T> out(endpoints[0].size(), T{0});
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    const auto a = static_cast<T>(coeffs.alpha[i]);
    const auto v = endpoints[i].values();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += a * v[k];
  }
  return endpoints[0].with_values(std::move(out));
}

namespace {

template <typename T>
std::vector<T> linear_mean_grad(const Shape& weight_shape, const std::vector<T>& weights, const Tensor<T>& input) {
  const std::size_t features = weight_shape[1];
  if (input.rank() < 2 || input.size() / input.dim(0) != features) {
    throw ShapeError("linear check: input " + shape_string(input.shape()) + " does not match weight " +
                     shape_string(weight_shape));
  }
  ad::Tape<T> tape;
  auto w = tape.variable(Tensor<T>(weight_shape, weights));
  auto x = tape.constant(input.reshaped({input.dim(0), features}));
  auto loss = ad::mean_all(tape, ad::matmul_nt(tape, x, w));
  tape.backward(loss);
  return std::move(tape.grad(w).storage());
}

}  // namespace

template <typename T>
T linear_grad_decomposition_check(const BasicParamVector<T>& theta, std::span<const Tensor<T>> inputs,
                                  const Coeffs& coeffs) {
  const auto& layout = theta.layout();
  if (layout.size() != 1 || layout[0].name != "linear.weight" || layout[0].shape.size() != 2) {
    throw ConfigError("linear_grad_decomposition_check requires a bias-free linear model");
  }
  if (inputs.empty()) throw ConfigError("linear check: no inputs");
  coeffs.validate(inputs.size());
  for (const auto& x : inputs) {
    if (x.shape() != inputs[0].shape()) throw ShapeError("linear check: inputs differ in shape");
  }

  Tensor<T> mixed(inputs[0].shape());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto a = static_cast<T>(coeffs.alpha[i]);
    for (std::size_t k = 0; k < mixed.size(); ++k) mixed[k] += a * inputs[i][k];
  }
  const auto direct = linear_mean_grad(layout[0].shape, theta.storage(), mixed);

  std::vector<T> combined(direct.size(), T{0});
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto a = static_cast<T>(coeffs.alpha[i]);
    const auto g = linear_mean_grad(layout[0].shape, theta.storage(), inputs[i]);
    for (std::size_t k = 0; k < g.size(); ++k) combined[k] += a * g[k];
  }

  T worst{0};
  for (std::size_t k = 0; k < direct.size(); ++k) worst = std::max(worst, std::abs(direct[k] - combined[k]));
  return worst;
}

#define CPS_INSTANTIATE_GEOMETRY(T)                                                                           \
  template BasicParamVector<T> sgd_step<T>(const BasicParamVector<T>&, const BasicGradRecord<T>&, double);  \
  template T cosine_distance<T>(const BasicParamVector<T>&, const BasicParamVector<T>&);                    \
  template std::pair<T, BasicGradRecord<T>> avg_cosine_distance_grad<T>(std::size_t,                        \
                                                                        std::span<const BasicParamVector<T>>); \
  template BasicParamVector<T> interpolate_params<T>(const Coeffs&, std::span<const BasicParamVector<T>>);  \
  template T linear_grad_decomposition_check<T>(const BasicParamVector<T>&, std::span<const Tensor<T>>,     \
                                                const Coeffs&);

CPS_INSTANTIATE_GEOMETRY(float)
CPS_INSTANTIATE_GEOMETRY(double)

#undef CPS_INSTANTIATE_GEOMETRY

}  // namespace cps
