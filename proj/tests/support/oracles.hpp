#pragma once

// Reference helpers shared by the unit and acceptance tests: central finite
// differences, seeded tensors and small synthetic benchmarks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cps/autodiff.hpp"
#include "cps/rng.hpp"
#include "cps/tensor.hpp"

namespace cps::testing {

inline Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  auto rng = make_rng(seed, 1000);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

/// Central difference gradient of a scalar function of a flat vector.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// |a - b| / max(|a|, |b|, tiny), norm-wise.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
  return std::sqrt(diff) / scale;
}

/// Builds a scalar from one variable node on a fresh tape.
using ScalarGraph = std::function<ad::Var(ad::Tape<double>&, ad::Var)>;

/// Relative error between reverse-mode and central-difference gradients of
/// `graph` at `x`. The graph output is reduced with a fixed random projection
/// so non-scalar ops are covered too.
inline double gradient_error(const ScalarGraph& graph, const Tensor<double>& x, double h = 1e-6,
                             std::uint64_t seed = 7) {
  Tensor<double> probe;
  auto evaluate = [&](const Tensor<double>& at, bool with_grad, std::vector<double>* grad) {
    ad::Tape<double> tape;
    auto v = with_grad ? tape.variable(at) : tape.constant(at);
    auto out = graph(tape, v);
    const Tensor<double> value = tape.value(out);  // copy: adding nodes may reallocate
    if (probe.empty()) probe = random_tensor(value.shape(), seed);
    auto weights = tape.constant(probe);
    double total = 0.0;
    for (std::size_t i = 0; i < value.size(); ++i) total += value[i] * probe[i];
    if (with_grad) {
      auto flat = ad::reshape(tape, out, {1, value.size()});
      auto w = ad::reshape(tape, weights, {1, value.size()});
      auto readout = ad::matmul_nt(tape, flat, w);
      tape.backward(readout);
      *grad = tape.grad(v).storage();
    }
    return total;
  };
  std::vector<double> analytic;
  evaluate(x, true, &analytic);
  auto numeric = finite_difference(
      [&](const std::vector<double>& flat) { return evaluate(Tensor<double>(x.shape(), flat), false, nullptr); },
      x.storage(), h);
  return relative_error(analytic, numeric);
}

}  // namespace cps::testing
