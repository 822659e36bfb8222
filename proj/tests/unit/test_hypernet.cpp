#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "cps/hypernet.hpp"
#include "cps/synthetic.hpp"
#include "oracles.hpp"

using namespace cps;
namespace fs = std::filesystem;

namespace {

HyperSpec small_spec() {
  HyperSpec h;
  h.meta_widths = {6};
  h.base = ModelSpec{ArchKind::dense, {5}, {16}, 4};
  return h;
}

std::vector<TaskSet> tasks(std::size_t n) {
  SyntheticOptions o;
  o.n_tasks = n;
  o.samples_per_class = 12;
  o.shift = 1.5;
  return make_synthetic_tasks(o);
}

ContinualConfig quick() {
  ContinualConfig c;
  c.epochs_per_task = 3;
  c.batch_size = 16;
  c.replay_batches = 2;
  c.adam.learning_rate = 1e-2;
  return c;
}

}  // namespace

TEST_SUITE("hypernet") {
  TEST_CASE("meta network shape") {
    const auto h = small_spec();
    const auto meta = h.meta_spec();
    CHECK(meta.kind == ArchKind::dense);
    CHECK(meta.classes == parameter_count(h.base));
    CHECK(meta.input_size() == h.base.input_size());
    HyperSpec bad = h;
    bad.meta_widths.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("zero meta weights give uniform logits") {
    const auto h = small_spec();
    const auto zero = ParamVector::zeros(h.meta_spec());
    const auto x = cps::testing::random_tensor({3, 16}, 1, 0.0, 1.0).cast<float>();
    const auto [base, logits] = hypernet_forward(h, zero, x);
    for (const float v : base.values()) CHECK(v == 0.0f);
    const std::vector<int> y{0, 1, 3};
    CHECK(cross_entropy(logits, std::span<const int>(y)) == doctest::Approx(std::log(4.0)));
  }

  TEST_CASE("equal pooled embeddings emit equal base parameters") {
    const auto h = small_spec();
    const auto meta = init_params(h.meta_spec(), 2);
    const auto x = cps::testing::random_tensor({4, 16}, 3, 0.0, 1.0).cast<float>();
    Tensor<float> swapped = x;
    for (std::size_t k = 0; k < 16; ++k) std::swap(swapped[k], swapped[3 * 16 + k]);
    CHECK(hypernet_forward(h, meta, x).first == hypernet_forward(h, meta, swapped).first);
    CHECK_THROWS_AS(hypernet_forward(h, meta, Tensor<float>({2, 15})), ShapeError);
  }

  TEST_CASE("composed gradient matches finite differences") {
    const auto h = small_spec();
    const auto meta = init_params(h.meta_spec(), 4).cast<double>();
    const auto x = cps::testing::random_tensor({5, 16}, 5, 0.0, 1.0);
    const std::vector<int> y{0, 1, 2, 3, 1};
    auto loss = [&](const std::vector<double>& v, std::vector<double>* grad) {
      ad::Tape<double> tape;
      auto m = grad ? tape.variable(Tensor<double>({v.size()}, v)) : tape.constant(Tensor<double>({v.size()}, v));
      auto logits = build_hyper_logits(tape, h, m, tape.constant(x));
      auto l = ad::cross_entropy(tape, logits, y);
      if (grad) {
        tape.backward(l);
        *grad = tape.grad(m).storage();
      }
      return tape.value(l)[0];
    };
    std::vector<double> analytic;
    loss(meta.storage(), &analytic);
    const auto fd = cps::testing::finite_difference([&](const std::vector<double>& v) { return loss(v, nullptr); },
                                                    meta.storage(), 1e-6);
    CHECK(cps::testing::relative_error(analytic, fd) < 1e-6);
  }

  TEST_CASE("adam follows the reference recurrence") {
    AdamConfig cfg;
    cfg.learning_rate = 0.1;
    Adam adam(2, cfg);
    std::vector<float> p{1.0f, -2.0f};
    const std::vector<std::vector<float>> grads{{0.5f, -1.0f}, {0.25f, 2.0f}, {-0.5f, 0.0f}};
    double m[2] = {0, 0}, v[2] = {0, 0};
    double ref[2] = {1.0, -2.0};
    for (std::size_t t = 1; t <= grads.size(); ++t) {
      const auto& g = grads[t - 1];
      const auto proposal = adam.proposal(g);
      const auto before = p;
      adam.step(p, g);
      for (std::size_t k = 0; k < 2; ++k) {
        CHECK(p[k] == doctest::Approx(before[k] + proposal[k]));
        m[k] = 0.9 * m[k] + 0.1 * g[k];
        v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
        const double mh = m[k] / (1 - std::pow(0.9, t)), vh = v[k] / (1 - std::pow(0.999, t));
        ref[k] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
        CHECK(p[k] == doctest::Approx(ref[k]).epsilon(1e-5));
      }
    }
    CHECK(adam.steps() == 3);
  }

  TEST_CASE("output drift vanishes at the reference point") {
    const auto h = small_spec();
    const auto meta = init_params(h.meta_spec(), 6);
    const auto x = cps::testing::random_tensor({4, 16}, 7, 0.0, 1.0).cast<float>();
    const std::vector<float> zero(meta.size(), 0.0f);
    CHECK(output_drift(h, meta, meta, zero, x) == 0.0);
    std::vector<float> nudge(meta.size(), 0.01f);
    CHECK(output_drift(h, meta, meta, nudge, x) > 0.0);
  }

  TEST_CASE("continual training contracts") {
    const auto h = small_spec();
    const auto ts = tasks(3);
    const auto [state, report] = train_continual(h, ts, ts, quick());
    CHECK(state.snapshots.size() == 3);
    CHECK(report.after_each.size() == 3);
    CHECK(report.after_final.size() == 3);
    CHECK(report.after_final.back() == report.after_each.back());
    const auto again = train_continual(h, ts, ts, quick());
    CHECK(again.first == state);
    CHECK(again.second == report);

    // snapshot 0 is the same whether or not later tasks follow
    const auto prefix = train_continual(h, std::span(ts).first(2), std::span(ts).first(2), quick());
    CHECK(prefix.first.snapshots[0] == state.snapshots[0]);
    CHECK(prefix.first.snapshots[1] == state.snapshots[1]);

    CHECK_THROWS_AS(train_continual(h, std::span(ts).first(1), std::span(ts).first(1), quick()), ConfigError);
    CHECK_THROWS_AS(train_continual(h, ts, std::span(ts).first(2), quick()), ConfigError);
    auto wild = quick();
    wild.adam.learning_rate = 1e30;
    CHECK_THROWS_AS(train_continual(h, ts, ts, wild), NumericError);
  }

  TEST_CASE("plain sequential fine-tuning forgets") {
    const auto h = small_spec();
    const auto ts = tasks(3);
    auto cfg = quick();
    cfg.omega = 0.0;
    cfg.beta = 0.0;
    cfg.epochs_per_task = 10;
    const auto report = train_continual(h, ts, ts, cfg).second;
    CHECK(report.after_final[0] <= report.after_each[0]);
  }

  TEST_CASE("continual state round trip") {
    const auto h = small_spec();
    const auto ts = tasks(2);
    const auto state = train_continual(h, ts, ts, quick()).first;
    const auto dir = fs::temp_directory_path() / "cpslab-unit-continual";
    fs::remove_all(dir);
    save_continual_state(dir.string(), state);
    CHECK(load_continual_state(dir.string()) == state);
    fs::remove(dir / "snapshot_1.params");
    CHECK_THROWS_AS(load_continual_state(dir.string()), DataError);
    fs::remove_all(dir);
  }
}
