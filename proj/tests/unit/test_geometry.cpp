#include <cmath>

#include "doctest.h"
#include "cps/geometry.hpp"
#include "oracles.hpp"

using namespace cps;

namespace {

ParamVector64 vec(const std::vector<double>& v) {
  return ParamVector64(v, {LayerEntry{"w", {v.size()}}}, "fp");
}

ParamVector64 random_vec(std::size_t n, std::uint64_t seed) {
  return vec(cps::testing::random_tensor({n}, seed).storage());
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("coefficient contracts") {
    CHECK_NOTHROW((Coeffs{{0.2, 1.0, 0.5}}.validate(3)));
    CHECK_THROWS_AS((Coeffs{{0.2, 1.1}}.validate(2)), ConfigError);
    CHECK_THROWS_AS((Coeffs{{-0.1, 0.5}}.validate(2)), ConfigError);
    CHECK_THROWS_AS((Coeffs{{0.5}}.validate(2)), ConfigError);
    CHECK(Coeffs{{1.0, 3.0}}.normalized().alpha == std::vector<double>{0.25, 0.75});
    CHECK_THROWS_AS((Coeffs{{0.0, 0.0}}.normalized()), NumericError);
    CHECK(Coeffs::one_hot(3, 1).is_one_hot());
    CHECK_FALSE(Coeffs::uniform(3).is_one_hot());
    CHECK(Coeffs{{0.3, 0.3, 0.1}}.argmax() == 0);
  }

  TEST_CASE("cosine distance properties") {
    for (std::uint64_t s = 1; s <= 20; ++s) {
      const auto a = random_vec(9, s);
      const auto b = random_vec(9, s + 100);
      const double d = cosine_distance(a, b);
      CHECK(d >= 0.0);
      CHECK(d <= 2.0);
      CHECK(d == doctest::Approx(cosine_distance(b, a)).epsilon(1e-14));
      std::vector<double> scaled(a.storage());
      for (auto& v : scaled) v *= 3.7;
      CHECK(cosine_distance(vec(scaled), b) == doctest::Approx(d).epsilon(1e-12));
      CHECK(cosine_distance(a, vec(scaled)) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
      std::vector<double> negated(a.storage());
      for (auto& v : negated) v = -v;
      CHECK(cosine_distance(a, vec(negated)) == doctest::Approx(2.0));
    }
    CHECK(cosine_distance(vec({1, 0}), vec({0, 1})) == doctest::Approx(1.0));
    CHECK_THROWS_AS(cosine_distance(vec({0, 0}), vec({0, 1})), NumericError);
    CHECK_THROWS_AS(cosine_distance(vec({1, 0}), ParamVector64({1, 0}, {LayerEntry{"w", {2}}}, "other")), ShapeError);
  }

  TEST_CASE("interpolation is linear in the coefficients") {
    std::vector<ParamVector64> ends{random_vec(11, 1), random_vec(11, 2), random_vec(11, 3)};
    const Coeffs a{{0.2, 0.1, 0.4}}, b{{0.3, 0.5, 0.1}}, ab{{0.5, 0.6, 0.5}};
    const auto pa = interpolate_params<double>(a, ends);
    const auto pb = interpolate_params<double>(b, ends);
    const auto pab = interpolate_params<double>(ab, ends);
    for (std::size_t k = 0; k < pab.size(); ++k) CHECK(pab.values()[k] == doctest::Approx(pa.values()[k] + pb.values()[k]).epsilon(1e-12));
    CHECK(interpolate_params<double>(Coeffs::one_hot(3, 2), ends) == ends[2]);
    CHECK_THROWS_AS(interpolate_params<double>(Coeffs{{0.5, 0.5}}, ends), ConfigError);
  }

  TEST_CASE("mean cosine distance gradient flows only into the chosen endpoint") {
    std::vector<ParamVector64> ends{random_vec(6, 4), random_vec(6, 5), random_vec(6, 6)};
    const auto [value, grad] = avg_cosine_distance_grad<double>(1, ends);
    CHECK(value == doctest::Approx((cosine_distance(ends[1], ends[0]) + cosine_distance(ends[1], ends[2])) / 2.0));
    auto f = [&](const std::vector<double>& v) {
      auto copy = ends;
      copy[1] = copy[1].with_values(v);
      return avg_cosine_distance_grad<double>(1, copy).first;
    };
    const auto fd = cps::testing::finite_difference(f, ends[1].storage(), 1e-6);
    CHECK(cps::testing::relative_error(grad.gradient.storage(), fd) < 1e-6);
    CHECK_THROWS_AS(avg_cosine_distance_grad<double>(0, std::span<const ParamVector64>(ends).first(1)), ConfigError);
  }

  TEST_CASE("sgd step") {
    const auto p = vec({1.0, 2.0});
    BasicGradRecord<double> g{vec({0.5, -1.0}), 0.0, 0};
    CHECK(sgd_step(p, g, 0.1).storage() == std::vector<double>{0.95, 2.1});
    CHECK_THROWS_AS(sgd_step(p, BasicGradRecord<double>{vec({1.0}), 0.0, 0}, 0.1), ShapeError);
  }
}
