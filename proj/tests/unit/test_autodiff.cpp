#include <cmath>
#include <limits>
#include <string>

#include "doctest.h"
#include "cps/autodiff.hpp"
#include "cps/model.hpp"
#include "oracles.hpp"

using namespace cps;
using cps::testing::gradient_error;
using cps::testing::random_tensor;

namespace {
constexpr int kInstances = 20;
constexpr double kTol = 1e-6;

void check_op(const char* name, const Shape& shape, const cps::testing::ScalarGraph& graph, double lo = -1.0,
              double hi = 1.0) {
  for (int s = 1; s <= kInstances; ++s) {
    const auto x = random_tensor(shape, static_cast<std::uint64_t>(s), lo, hi);
    const double err = gradient_error(graph, x);
    INFO(name << " instance " << s << " rel err " << err);
    CHECK(err < kTol);
  }
}
}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("tensor shape invariants") {
    CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
    CHECK_THROWS_AS(Tensor<float>({2, 0}), ShapeError);
    Tensor<float> t({2, 3}, 1.5f);
    CHECK(t.size() == 6);
    CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
    t[4] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(require_finite(t, "test"), NumericError);
  }

  TEST_CASE("elementwise op gradients") {
    const auto other = random_tensor({3, 4}, 99);
    check_op("add", {3, 4}, [&](auto& t, ad::Var x) { return ad::add(t, x, t.constant(other)); });
    check_op("add self", {3, 4}, [](auto& t, ad::Var x) { return ad::add(t, x, x); });
    check_op("sub", {3, 4}, [&](auto& t, ad::Var x) { return ad::sub(t, t.constant(other), x); });
    check_op("scale", {3, 4}, [](auto& t, ad::Var x) { return ad::scale(t, x, -2.5); });
    check_op("reshape", {3, 4}, [](auto& t, ad::Var x) { return ad::reshape(t, x, {2, 6}); });
    check_op("slice", {12}, [](auto& t, ad::Var x) { return ad::slice(t, x, 3, {2, 3}); });
    check_op("relu", {3, 4}, [](auto& t, ad::Var x) { return ad::relu(t, x); });
  }

  TEST_CASE("linear algebra op gradients") {
    const auto w = random_tensor({5, 4}, 11);
    const auto xin = random_tensor({3, 4}, 12);
    check_op("matmul_nt input", {3, 4}, [&](auto& t, ad::Var x) { return ad::matmul_nt(t, x, t.constant(w)); });
    check_op("matmul_nt weight", {5, 4}, [&](auto& t, ad::Var v) { return ad::matmul_nt(t, t.constant(xin), v); });
    const auto b = random_tensor({4}, 13);
    check_op("bias input", {2, 4, 3, 3}, [&](auto& t, ad::Var x) { return ad::add_channel_bias(t, x, t.constant(b)); });
    const auto feat = random_tensor({2, 4, 3, 3}, 14);
    check_op("bias weight", {4}, [&](auto& t, ad::Var v) { return ad::add_channel_bias(t, t.constant(feat), v); });
  }

  TEST_CASE("convolution and pooling gradients") {
    const auto kernel = random_tensor({4, 3, 3, 3}, 21);
    const auto image = random_tensor({2, 3, 5, 6}, 22);
    check_op("conv2d input", {2, 3, 5, 6}, [&](auto& t, ad::Var x) { return ad::conv2d_same(t, x, t.constant(kernel)); });
    check_op("conv2d kernel", {4, 3, 3, 3}, [&](auto& t, ad::Var k) { return ad::conv2d_same(t, t.constant(image), k); });
    check_op("maxpool2", {2, 3, 5, 6}, [](auto& t, ad::Var x) { return ad::maxpool2(t, x); });
    check_op("global_avg_pool", {2, 3, 4, 4}, [](auto& t, ad::Var x) { return ad::global_avg_pool(t, x); });
    check_op("mean_all", {2, 3, 4}, [](auto& t, ad::Var x) { return ad::mean_all(t, x); });
    check_op("mean_rows", {5, 3}, [](auto& t, ad::Var x) { return ad::mean_rows(t, x); });
  }

  TEST_CASE("loss gradients") {
    const std::vector<int> labels{0, 2, 1, 3};
    check_op("cross_entropy", {4, 4}, [&](auto& t, ad::Var z) { return ad::cross_entropy(t, z, labels); }, -3.0, 3.0);
    auto targets = random_tensor({4, 4}, 31, 0.0, 1.0);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 4; ++c) s += targets[r * 4 + c];
      for (std::size_t c = 0; c < 4; ++c) targets[r * 4 + c] /= s;
    }
    check_op("soft_cross_entropy", {4, 4}, [&](auto& t, ad::Var z) { return ad::soft_cross_entropy(t, z, targets); });
    const auto goal = random_tensor({3, 5}, 32);
    check_op("mean_squared_error", {3, 5}, [&](auto& t, ad::Var a) { return ad::mean_squared_error(t, a, goal); });
    const auto ref = random_tensor({7}, 33);
    check_op("cosine_distance", {7}, [&](auto& t, ad::Var a) { return ad::cosine_distance(t, a, t.constant(ref)); });
    check_op("cosine_distance both", {7}, [&](auto& t, ad::Var a) {
      return ad::cosine_distance(t, a, ad::add(t, ad::scale(t, a, 2.0), t.constant(ref)));
    });
  }

  TEST_CASE("cross-entropy reference values") {
    Tensor<double> z({1, 2}, std::vector<double>{1.0, -1.0});
    const std::vector<int> label{0};
    CHECK(cross_entropy(z, std::span<const int>(label)) == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-12));
    CHECK(cross_entropy(z, std::span<const int>(label)) == doctest::Approx(0.126928).epsilon(1e-6));
    Tensor<double> uniform({2, 5}, 0.0);
    const std::vector<int> two{0, 4};
    CHECK(cross_entropy(uniform, std::span<const int>(two)) == doctest::Approx(std::log(5.0)));
    const std::vector<int> bad{5, 0};
    CHECK_THROWS(cross_entropy(uniform, std::span<const int>(bad)));
  }

  TEST_CASE("shape errors at op boundaries") {
    ad::Tape<double> t;
    auto a = t.constant(Tensor<double>({2, 3}));
    auto b = t.constant(Tensor<double>({3, 2}));
    CHECK_THROWS_AS(ad::add(t, a, b), ShapeError);
    CHECK_THROWS_AS(ad::matmul_nt(t, a, b), ShapeError);
    CHECK_THROWS_AS(ad::slice(t, a, 4, {3}), ShapeError);
    CHECK_THROWS_AS(t.backward(a), ShapeError);
    auto img = t.constant(Tensor<double>({1, 1, 1, 4}));
    CHECK_THROWS_AS(ad::maxpool2(t, img), ShapeError);
  }
}
