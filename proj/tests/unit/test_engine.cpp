#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "cps/inference.hpp"
#include "cps/probes.hpp"
#include "cps/subspace.hpp"
#include "cps/synthetic.hpp"
#include "cps/task_interpolation.hpp"

using namespace cps;
namespace fs = std::filesystem;

namespace {

struct Bench {
  ModelSpec spec{ArchKind::dense, {12}, {16}, 4};
  std::vector<TaskSet> tasks;
  TrainConfig cfg;
  Bench() {
    SyntheticOptions o;
    o.samples_per_class = 10;
    o.shift = 1.2;
    tasks = make_synthetic_tasks(o);
    cfg.max_epochs = 8;
    cfg.early_stop_loss = 1e-6;
    cfg.learning_rate = 0.1;
  }
};

const Bench& bench() {
  static const Bench b;
  return b;
}

const Subspace& trained(double beta) {
  static const Subspace b1 = train_cps(bench().spec, bench().tasks, 1.0, bench().cfg);
  static const Subspace b0 = train_cps(bench().spec, bench().tasks, 0.0, bench().cfg);
  return beta > 0.0 ? b1 : b0;
}

Subspace degenerate() {
  const auto p = trained(1.0).endpoints()[0];
  return Subspace(bench().spec, {p, p, p}, 1.0, 1);
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("cpslab-unit-" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("subspace") {
  TEST_CASE("construction invariants") {
    const auto p = init_params(bench().spec, 1);
    CHECK_THROWS_AS(Subspace(bench().spec, {p}, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(Subspace(bench().spec, {p, p}, -1.0, 1), ConfigError);
    ModelSpec other = bench().spec;
    other.widths = {5};
    CHECK_THROWS_AS(Subspace(bench().spec, {p, init_params(other, 1)}, 1.0, 1), ShapeError);
    CHECK_THROWS_AS(Subspace(bench().spec, {p, p}, 1.0, 1, {"only-one"}), ConfigError);
  }

  TEST_CASE("centre is the uniform average") {
    ModelSpec spec{ArchKind::linear, {2}, {1}, 2};
    auto mk = [&](float a, float b) { return init_params(spec, 1).with_values({a, b}); };
    const Subspace s(spec, {mk(0, 0), mk(2, 4), mk(4, 2)}, 1.0, 1);
    CHECK(centre(s).storage() == std::vector<float>{2.0f, 2.0f});
    const auto d = degenerate();
    const auto c = centre(d);
    const auto& e = d.endpoints()[0];
    for (std::size_t k = 0; k < e.size(); ++k) CHECK(c.values()[k] == doctest::Approx(e.values()[k]).epsilon(1e-6));
  }

  TEST_CASE("beta zero reproduces independent standard runs bit for bit") {
    const auto& s = trained(0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto ref = train_standard(bench().spec, bench().tasks[i], bench().cfg);
      CHECK(s.endpoints()[i] == ref.params);
      for (std::size_t e = 0; e < s.logs().size(); ++e) {
        CHECK(s.logs()[e].task_loss[i] == ref.epoch_losses[e]);
        CHECK(s.logs()[e].distance_term[i] == 0.0);
      }
    }
  }

  TEST_CASE("endpoints share one initialization") {
    const std::vector<TaskSet> same{bench().tasks[0], bench().tasks[0], bench().tasks[0]};
    const auto s = train_cps(bench().spec, same, 0.0, bench().cfg);
    CHECK(s.endpoints()[0] == s.endpoints()[1]);
    CHECK(s.endpoints()[1] == s.endpoints()[2]);
    for (const auto& log : s.logs())
      for (const double u : log.update_similarity) CHECK(u == doctest::Approx(1.0));
  }

  TEST_CASE("training is deterministic and logs stay in range") {
    const auto again = train_cps(bench().spec, bench().tasks, 1.0, bench().cfg);
    CHECK(again == trained(1.0));
    for (const auto& log : again.logs()) {
      CHECK(log.task_loss.size() == 3);
      CHECK(log.update_similarity.size() == 3);
      for (const double d : log.mean_cosine) CHECK((d >= 0.0 && d <= 2.0));
      for (const double d : log.centre_cosine) CHECK((d >= 0.0 && d <= 2.0));
      for (const double u : log.update_similarity) CHECK((u >= -1.0 && u <= 1.0));
      for (const double t : log.distance_term) CHECK(t >= 0.0);
    }
  }

  TEST_CASE("beta compresses the endpoints") {
    const double with = trained(1.0).logs().back().mean_cosine[0];
    const double without = trained(0.0).logs().back().mean_cosine[0];
    CHECK(with < without);
  }

  TEST_CASE("training preconditions") {
    CHECK_THROWS_AS(train_cps(bench().spec, std::span(bench().tasks).first(1), 1.0, bench().cfg), ConfigError);
    ModelSpec wrong = bench().spec;
    wrong.input_shape = {4, 4};
    CHECK_THROWS_AS(train_cps(wrong, bench().tasks, 1.0, bench().cfg), ShapeError);
    auto cfg = bench().cfg;
    cfg.learning_rate = 1e30;
    try {
      train_cps(bench().spec, bench().tasks, 1.0, cfg);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(e.index() >= 0);
      CHECK(e.index() < 3);
    }
  }

  TEST_CASE("checkpoint directory round trip") {
    const auto dir = scratch("subspace");
    save_subspace(dir.string(), trained(1.0));
    CHECK(load_subspace(dir.string()) == trained(1.0));
    std::filesystem::resize_file(dir / "endpoint_1.params", fs::file_size(dir / "endpoint_1.params") - 4);
    CHECK_THROWS_AS(load_subspace(dir.string()), DataError);
    CHECK_THROWS_AS(load_subspace((dir / "missing").string()), DataError);
    fs::remove_all(dir);
  }
}

TEST_SUITE("inference") {
  TEST_CASE("coefficient sampling") {
    const auto c = sample_coeffs(100, 1000, 3);
    CHECK(c.size() == 1000);
    for (const auto& a : c) {
      CHECK(a.sum() == doctest::Approx(1.0).epsilon(1e-6));
      for (const double v : a.alpha) CHECK(v >= 0.0);
    }
    CHECK(sample_coeffs(100, 1000, 3) == c);
    CHECK_FALSE(sample_coeffs(101, 1000, 3) == c);
    CHECK_THROWS_AS(sample_coeffs(1, 0, 3), ConfigError);
  }

  TEST_CASE("grid enumeration") {
    const auto two = grid_coeffs(2, 2, false);
    REQUIRE(two.size() == 3);
    CHECK(two[0].alpha == std::vector<double>{0.0, 1.0});
    CHECK(two[1].alpha == std::vector<double>{1.0, 0.0});
    CHECK(two[2].alpha == std::vector<double>{0.5, 0.5});
    CHECK(grid_coeffs(50, 3, false, false).size() == 50 * 50 * 50 - 1);
    const auto all = grid_coeffs(11, 3, false);
    const auto inner = grid_coeffs(11, 3, true);
    CHECK(all.size() - inner.size() == 3);
    for (const auto& c : inner) CHECK_FALSE(c.is_one_hot());
    for (const auto& c : all) CHECK(c.sum() == doctest::Approx(1.0));
    // brute-force count of distinct simplex points from an 11-value grid
    std::vector<std::vector<long>> seen;
    for (long a = 0; a <= 10; ++a)
      for (long b = 0; b <= 10; ++b)
        for (long c = 0; c <= 10; ++c) {
          if (a + b + c == 0) continue;
          const long g = std::gcd(std::gcd(a, b), c);
          std::vector<long> key{a / g, b / g, c / g};
          if (std::find(seen.begin(), seen.end(), key) == seen.end()) seen.push_back(key);
        }
    CHECK(all.size() == seen.size());
    CHECK_THROWS_AS(grid_coeffs(2, 1, true), ConfigError);
    CHECK_THROWS_AS(grid_coeffs(1, 3, false), ConfigError);
  }

  TEST_CASE("degenerate subspace makes every mode agree") {
    const auto s = degenerate();
    const auto& task = bench().tasks[0];
    const auto c = centre_report(s, task);
    const auto e = ensemble_predict(s, sample_coeffs(1, 20, 3), task);
    const auto b = lowest_loss_boundary(s, task);
    const auto i = lowest_loss_interpolated(s, task, grid_coeffs(5, 3, true));
    const auto single = evaluate(s.spec(), s.endpoints()[0], task);
    CHECK(c.accuracy == single.accuracy);
    CHECK(e.accuracy == single.accuracy);
    CHECK(b.accuracy == single.accuracy);
    CHECK(i.accuracy == single.accuracy);
    CHECK(b.index == 0u);
    CHECK(i.index == 0u);
  }

  TEST_CASE("ensemble reductions") {
    const auto& s = trained(1.0);
    const auto& task = bench().tasks[1];
    const std::vector<Coeffs> one{Coeffs{{0.2, 0.3, 0.5}}};
    const auto e = ensemble_predict(s, one, task);
    const auto direct = evaluate(s.spec(), interpolate_params<float>(one[0], s.endpoints()), task);
    CHECK(e.accuracy == direct.accuracy);
    CHECK(e.loss == doctest::Approx(direct.loss).epsilon(1e-5));
    const std::vector<Coeffs> centres(4, Coeffs::uniform(3));
    CHECK(ensemble_predict(s, centres, task).accuracy == centre_report(s, task).accuracy);
  }

  TEST_CASE("lowest-loss selection matches a brute-force oracle") {
    const auto& s = trained(1.0);
    const auto& task = bench().tasks[2];
    const auto grid = grid_coeffs(6, 3, true);
    std::vector<double> losses;
    for (const auto& c : grid) losses.push_back(evaluate(s.spec(), interpolate_params<float>(c, s.endpoints()), task).loss);
    const auto best = static_cast<std::size_t>(std::min_element(losses.begin(), losses.end()) - losses.begin());
    const auto r = lowest_loss_interpolated(s, task, grid);
    CHECK(r.index == best);
    CHECK(r.loss == losses[best]);
    CHECK(r.candidates == grid.size());
    // any positive monotone transform keeps the argmin
    std::vector<double> transformed;
    for (const double l : losses) transformed.push_back(std::exp(l));
    CHECK(first_argmin(transformed) == best);

    const std::vector<Coeffs> only_centre{Coeffs::uniform(3)};
    const auto c = lowest_loss_interpolated(s, task, only_centre);
    CHECK(c.loss == centre_report(s, task).loss);
    CHECK(c.accuracy == centre_report(s, task).accuracy);
    CHECK(first_argmin(std::vector<double>{2.0, 1.0, 1.0, 3.0}) == 1);
  }

  TEST_CASE("boundary selection") {
    const auto& s = trained(1.0);
    for (std::size_t t = 0; t < 3; ++t) {
      const auto r = lowest_loss_boundary(s, bench().tasks[t]);
      REQUIRE(r.index.has_value());
      CHECK(r.loss == evaluate(s.spec(), s.endpoints()[*r.index], bench().tasks[t]).loss);
      CHECK(*r.index == t);
    }
  }

  TEST_CASE("multi-task selection") {
    const auto& s = trained(1.0);
    const auto grid = grid_coeffs(5, 3, true);
    const std::vector<TaskSet> one{bench().tasks[0]};
    const auto single = lowest_loss_interpolated(s, bench().tasks[0], grid);
    const auto m1 = multi_task_lowest_loss(s, one, grid);
    CHECK(m1.index == single.index);
    CHECK(m1.loss == single.loss);
    CHECK(m1.accuracy == single.accuracy);
    const std::vector<TaskSet> twice{bench().tasks[0], bench().tasks[0]};
    const auto m2 = multi_task_lowest_loss(s, twice, grid);
    CHECK(m2.index == single.index);
    CHECK(m2.loss == 2.0 * single.loss);

    const auto m3 = multi_task_lowest_loss(s, bench().tasks, grid);
    std::vector<double> sums;
    for (const auto& c : grid) {
      const auto p = interpolate_params<float>(c, s.endpoints());
      double total = 0.0;
      for (const auto& t : bench().tasks) total += evaluate(s.spec(), p, t).loss;
      sums.push_back(total);
    }
    CHECK(m3.index == first_argmin(sums));
    CHECK(m3.per_task_accuracy.size() == 3);
    double mean = 0.0;
    for (const double a : m3.per_task_accuracy) mean += a / 3.0;
    CHECK(m3.accuracy == doctest::Approx(mean));
  }

  TEST_CASE("landscape grid") {
    const auto& s = trained(1.0);
    const auto tasks = enumerate_task_grid(bench().tasks, 3);
    const auto params = grid_coeffs(4, 3, false);
    const auto g = landscape_map(s, tasks, params);
    CHECK(g.rows() == tasks.size());
    CHECK(g.cols() == params.size());
    CHECK(g.loss.size() == g.rows() * g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const auto row = lowest_loss_interpolated(s, tasks[r].second, params);
      CHECK(g.argmin[r] == row.index);
    }
    const std::vector<std::pair<Coeffs, TaskSet>> one_task{tasks[4]};
    const std::vector<Coeffs> one_param{params[7]};
    const auto single = landscape_map(s, one_task, one_param);
    const auto direct = evaluate(s.spec(), interpolate_params<float>(params[7], s.endpoints()), tasks[4].second);
    CHECK(single.loss_at(0, 0) == direct.loss);
    CHECK(single.loss_at(0, 0) == g.loss_at(4, 7));

    std::vector<Coeffs> reversed(params.rbegin(), params.rend());
    const auto rg = landscape_map(s, tasks, reversed);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) CHECK(rg.loss_at(r, g.cols() - 1 - c) == g.loss_at(r, c));
  }
}

TEST_SUITE("probes") {
  TEST_CASE("update similarity quartiles") {
    std::vector<EpochLog> logs(1);
    logs[0].update_similarity = {0.5, 0.25, 0.75};
    const auto one = theorem2_probe(logs);
    CHECK(one.quartile_mean.size() == 1);
    CHECK(one.final_quartile() == doctest::Approx(0.5));
    CHECK_THROWS_AS(theorem2_probe(std::vector<EpochLog>{}), ConfigError);
    const auto full = theorem2_probe(trained(1.0).logs());
    CHECK(full.quartile_mean.size() == 4);
    std::size_t epochs = 0;
    for (const auto n : full.quartile_epochs) epochs += n;
    CHECK(epochs == trained(1.0).logs().size());
  }

  TEST_CASE("nearest grid point") {
    const auto& s = trained(1.0);
    const auto grid = grid_coeffs(5, 3, false);
    const auto target = s.endpoints()[2];
    const auto n = nearest_grid_point(s, target, grid);
    CHECK(grid[n.cosine_index].alpha == std::vector<double>{0.0, 0.0, 1.0});
    CHECK(n.euclidean_distance == doctest::Approx(0.0).scale(1.0));
  }

  TEST_CASE("ground-truth probe sanity") {
    const auto grid = grid_coeffs(5, 3, false);
    auto cfg = bench().cfg;
    const auto r = theorem3_probe(trained(1.0), trained(0.0), bench().tasks[0], cfg, grid);
    CHECK(r.with_beta.cosine_distance >= 0.0);
    // the endpoint task's ground truth is the beta-zero endpoint itself
    CHECK(r.without_beta.euclidean_distance == doctest::Approx(0.0).scale(1.0));
    CHECK(grid[r.without_beta.euclidean_index].alpha == std::vector<double>{1.0, 0.0, 0.0});
    const auto again = theorem3_probe(trained(1.0), trained(0.0), bench().tasks[0], cfg, grid);
    CHECK(again.ground_truth == r.ground_truth);
    ModelSpec other = bench().spec;
    other.widths = {6};
    const auto tiny = train_cps(other, bench().tasks, 1.0, cfg);
    CHECK_THROWS_AS(theorem3_probe(trained(1.0), tiny, bench().tasks[0], cfg, grid), ConfigError);
  }
}
