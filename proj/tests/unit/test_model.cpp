#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "cps/checkpoint.hpp"
#include "cps/geometry.hpp"
#include "cps/model.hpp"
#include "oracles.hpp"

using namespace cps;
using cps::testing::random_tensor;

namespace {

// Plain-loop CNN used as an independent oracle for forward().
std::vector<double> reference_cnn(const ModelSpec& spec, const std::vector<double>& p, const Tensor<double>& x) {
  const std::size_t B = x.dim(0);
  std::size_t C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<double> act(x.storage());
  std::size_t off = 0;
  for (const auto out_c : spec.widths) {
    std::vector<double> y(B * out_c * H * W, 0.0);
    const double* w = p.data() + off;
    const double* bias = w + out_c * C * 9;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < out_c; ++o)
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j) {
            double s = bias[o];
            for (std::size_t c = 0; c < C; ++c)
              for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                  const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
                  if (ii < 0 || jj < 0 || ii >= static_cast<long>(H) || jj >= static_cast<long>(W)) continue;
                  s += w[((o * C + c) * 3 + static_cast<std::size_t>(di + 1)) * 3 + static_cast<std::size_t>(dj + 1)] *
                       act[((b * C + c) * H + static_cast<std::size_t>(ii)) * W + static_cast<std::size_t>(jj)];
                }
            y[((b * out_c + o) * H + i) * W + j] = std::max(s, 0.0);
          }
    off += out_c * C * 9 + out_c;
    C = out_c;
    if (H >= 2 && W >= 2) {
      const std::size_t h2 = H / 2, w2 = W / 2;
      std::vector<double> pooled(B * C * h2 * w2);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < h2; ++i)
            for (std::size_t j = 0; j < w2; ++j) {
              double m = -1e300;
              for (std::size_t a = 0; a < 2; ++a)
                for (std::size_t d = 0; d < 2; ++d) m = std::max(m, y[((b * C + c) * H + 2 * i + a) * W + 2 * j + d]);
              pooled[((b * C + c) * h2 + i) * w2 + j] = m;
            }
      y = std::move(pooled);
      H = h2;
      W = w2;
    }
    act = std::move(y);
  }
  std::vector<double> logits(B * spec.classes);
  const double* hw = p.data() + off;
  const double* hb = hw + spec.classes * C;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < spec.classes; ++k) {
      double s = hb[k];
      for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t q = 0; q < H * W; ++q) mean += act[(b * C + c) * H * W + q];
        s += hw[k * C + c] * mean / static_cast<double>(H * W);
      }
      logits[b * spec.classes + k] = s;
    }
  return logits;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("presets and layout") {
    CHECK(ModelSpec::preset("3-layer").widths == std::vector<std::size_t>{16, 16, 16});
    CHECK(ModelSpec::preset("6-layer").widths.size() == 6);
    CHECK(ModelSpec::preset("9-layer").widths.size() == 9);
    CHECK(ModelSpec::preset("6-layer-wide").widths.front() == 256);
    CHECK_THROWS_AS(ModelSpec::preset("7-layer"), ConfigError);
    ModelSpec bad;
    bad.classes = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = ModelSpec{};
    bad.widths.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    const auto spec = ModelSpec::preset("3-layer", {3, 8, 8}, 10);
    std::size_t total = 0;
    for (const auto& e : parameter_layout(spec)) total += shape_size(e.shape);
    CHECK(total == parameter_count(spec));
    CHECK(total == (16 * 3 * 9 + 16) + 2 * (16 * 16 * 9 + 16) + 10 * 16 + 10);
    CHECK(init_params(spec, 1).size() == total);
    CHECK_THROWS_AS(ParamVector(std::vector<float>(3), parameter_layout(spec), spec.fingerprint()), ShapeError);
  }

  TEST_CASE("fingerprints decide compatibility") {
    const auto a = ModelSpec::preset("3-layer", {3, 8, 8}, 10);
    auto b = a;
    b.classes = 9;
    CHECK(a.fingerprint() != b.fingerprint());
    CHECK(init_params(a, 1).compatible_with(init_params(a, 2)));
    CHECK_FALSE(init_params(a, 1).compatible_with(init_params(b, 1)));
    CHECK_THROWS_AS(forward(b, init_params(a, 1), Tensor<float>({1, 3, 8, 8})), ShapeError);
  }

  TEST_CASE("forward matches a plain-loop CNN on a 4x3x8x8 batch") {
    const auto spec = ModelSpec::preset("3-layer", {3, 8, 8}, 10);
    const auto params = init_params(spec, 3).cast<double>();
    const auto x = random_tensor({4, 3, 8, 8}, 5, 0.0, 1.0);
    const auto logits = forward(spec, params, x);
    REQUIRE(logits.shape() == Shape{4, 10});
    const auto ref = reference_cnn(spec, params.storage(), x);
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(logits[k] == doctest::Approx(ref[k]).epsilon(1e-12));
  }

  TEST_CASE("forward rejects mismatched batches and non-finite activations") {
    const auto spec = ModelSpec::preset("3-layer", {3, 8, 8}, 10);
    const auto params = init_params(spec, 1);
    CHECK_THROWS_AS(forward(spec, params, Tensor<float>({2, 3, 8, 7})), ShapeError);
    Tensor<float> x({1, 3, 8, 8}, 1.0f);
    x[0] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(forward(spec, params, x), NumericError);
  }

  TEST_CASE("backward matches finite differences through a dense model") {
    ModelSpec spec{ArchKind::dense, {6, 5}, {7}, 3};
    const auto params = init_params(spec, 2).cast<double>();
    const auto x = random_tensor({5, 7}, 6);
    const std::vector<int> y{0, 1, 2, 1, 0};
    const auto g = backward(spec, params, x, y);
    auto loss = [&](const std::vector<double>& v) {
      return cross_entropy(forward(spec, params.with_values(v), x), std::span<const int>(y));
    };
    const auto fd = cps::testing::finite_difference(loss, params.storage(), 1e-6);
    CHECK(cps::testing::relative_error(g.gradient.storage(), fd) < 1e-6);
    CHECK(g.gradient.layout() == params.layout());
    CHECK(g.loss == doctest::Approx(loss(params.storage())));
  }

  TEST_CASE("forward and backward are bitwise deterministic") {
    const auto spec = ModelSpec::preset("3-layer", {3, 8, 8}, 10);
    const auto params = init_params(spec, 1);
    const auto x = random_tensor({4, 3, 8, 8}, 1, 0.0, 1.0).cast<float>();
    const std::vector<int> y{1, 2, 3, 4};
    CHECK(forward(spec, params, x) == forward(spec, params, x));
    CHECK(backward(spec, params, x, y).gradient == backward(spec, params, x, y).gradient);
    CHECK(init_params(spec, 4) == init_params(spec, 4));
    CHECK_FALSE(init_params(spec, 4) == init_params(spec, 5));
  }

  TEST_CASE("checkpoint round trip and corruption") {
    const auto spec = ModelSpec::preset("3-layer", {3, 8, 8}, 10);
    const auto params = init_params(spec, 9);
    std::stringstream ss;
    write_params(ss, params);
    const std::string bytes = ss.str();
    std::istringstream in(bytes);
    CHECK(read_params(in) == params);

    const auto header_end = bytes.find('\n');
    REQUIRE(header_end != std::string::npos);
    CHECK(bytes.size() - header_end - 1 == params.size() * 4);
    // First value, little-endian float32.
    float first = 0.0f;
    unsigned char raw[4];
    for (int i = 0; i < 4; ++i) raw[i] = static_cast<unsigned char>(bytes[header_end + 1 + static_cast<std::size_t>(i)]);
    std::uint32_t word = raw[0] | (raw[1] << 8) | (raw[2] << 16) | (static_cast<std::uint32_t>(raw[3]) << 24);
    std::memcpy(&first, &word, 4);
    CHECK(first == params.values()[0]);

    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_params(truncated), DataError);
    std::istringstream padded(bytes + "x");
    CHECK_THROWS_AS(read_params(padded), DataError);
    std::istringstream garbage("not json\n");
    CHECK_THROWS_AS(read_params(garbage), DataError);
    CHECK_THROWS_AS(load_params("/nonexistent/params"), DataError);
  }

  TEST_CASE("linear gradient decomposition is exact for linear losses") {
    ModelSpec spec{ArchKind::linear, {4}, {6}, 4};
    const auto theta = init_params(spec, 1);
    const std::vector<Tensor<float>> one{random_tensor({3, 6}, 1).cast<float>()};
    CHECK(linear_grad_decomposition_check(theta, std::span<const Tensor<float>>(one), Coeffs{{1.0}}) == 0.0f);
    const std::vector<Tensor<float>> two{random_tensor({3, 6}, 2).cast<float>(), random_tensor({3, 6}, 3).cast<float>()};
    CHECK(linear_grad_decomposition_check(theta, std::span<const Tensor<float>>(two), Coeffs{{0.3, 0.7}}) < 1e-6f);
    CHECK(linear_grad_decomposition_check(theta, std::span<const Tensor<float>>(two), Coeffs{{0.0, 1.0}}) == 0.0f);
    const auto cnn = init_params(ModelSpec::preset("3-layer", {3, 8, 8}, 10), 1);
    CHECK_THROWS_AS(linear_grad_decomposition_check(cnn, std::span<const Tensor<float>>(one), Coeffs{{1.0}}), ConfigError);
  }
}
