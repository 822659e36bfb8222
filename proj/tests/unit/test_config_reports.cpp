#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "cps/config.hpp"
#include "cps/reports.hpp"

using namespace cps;
namespace fs = std::filesystem;

TEST_SUITE("config") {
  TEST_CASE("empty config gives the documented defaults") {
    const auto c = parse_config("{}");
    CHECK(c.beta == 1.0);
    CHECK(c.train.train_seed == 1);
    CHECK(c.train.test_seed == 100);
    CHECK(c.train.early_stop_loss == 1.0);
    CHECK(c.inference.ensemble_m == 1000);
    CHECK(c.inference.param_segments == 50);
    CHECK(c.inference.input_segments == 5);
    CHECK(c.hypernet.continual.omega == 0.01);
    CHECK(c.model.widths == std::vector<std::size_t>{16, 16, 16});
    CHECK(c.data.synthetic.n_tasks == 3);
    const auto p = prepare_tasks(c);
    CHECK(p.train.size() == 3);
    CHECK(p.test.size() == 3);
    CHECK(p.model.input_shape == p.train[0].sample_shape);
  }

  TEST_CASE("overrides address nested keys") {
    const auto c = parse_config(R"({"train": {"max_epochs": 3}})",
                                {"train.max_epochs=7", "beta=0", "inference.modes=[\"centre\"]", "output_dir=runs/a"});
    CHECK(c.train.max_epochs == 7);
    CHECK(c.beta == 0.0);
    CHECK(c.inference.modes == std::vector<std::string>{"centre"});
    CHECK(c.output_dir == "runs/a");
    CHECK_THROWS_AS(parse_config("{}", {"nonsense"}), ConfigError);
    CHECK_THROWS_AS(parse_config("{}", {"train.unknown=1"}), ConfigError);
  }

  TEST_CASE("strict parsing") {
    CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"betta": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"train": {"max_epochs": "many"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"beta": -1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data": {"source": "mnist"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data": {"source": "cifar10"}})"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  }

  TEST_CASE("config serialization round trip and hash") {
    const auto c = parse_config(R"({"beta": 0.5, "model": {"kind": "dense", "widths": [8]}})");
    const auto back = parse_config(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    auto moved = c;
    moved.output_dir = "elsewhere";
    CHECK(config_hash(moved) == config_hash(c));
    auto other = c;
    other.beta = 0.25;
    CHECK(config_hash(other) != config_hash(c));
  }

  TEST_CASE("dataset recipes") {
    const auto dir = fs::temp_directory_path() / "cpslab-unit-recipe";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string fixture = std::string(CPS_FIXTURE_DIR) + "/cifar10_mini.bin";
    const auto cfg = parse_config(R"({"data": {"source": "cifar10", "path": ")" + fixture + R"(", "split_ratio": 0.5,
      "tasks": [{"name": "plain"}, {"name": "turned", "shifts": [{"kind": "rotation", "degrees": 90}]}]}})");
    const auto p = prepare_tasks(cfg);
    CHECK(p.train.size() == 2);
    CHECK(p.model.input_shape == Shape{3, 32, 32});
    CHECK(p.train[0].size() + p.test[0].size() == 6);
    CHECK(p.train[1].fine_labels == p.train[0].fine_labels);
    const auto one = parse_config(R"({"data": {"source": "cifar10", "path": ")" + fixture + R"(", "tasks": [{"name": "a"}]}})");
    CHECK_THROWS_AS(prepare_tasks(one), ConfigError);
    fs::remove_all(dir);
  }

  TEST_CASE("run manifest") {
    const auto dir = fs::temp_directory_path() / "cpslab-unit-manifest";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "a.txt") << "alpha";
    RunManifest m;
    m.command = "test";
    m.config_hash = "abc";
    m.record(dir.string(), "a.txt");
    m.timings.push_back({"stage", 1.5});
    const auto h = m.content_hash();
    auto slower = m;
    slower.timings[0].seconds = 9.0;
    CHECK(slower.content_hash() == h);
    m.save((dir / "m.json").string());
    const auto back = RunManifest::load((dir / "m.json").string());
    CHECK(back.content_hash() == h);
    CHECK(back.artifacts.size() == 1);
    std::ofstream(dir / "a.txt") << "beta";
    RunManifest changed = m;
    changed.artifacts.clear();
    changed.record(dir.string(), "a.txt");
    CHECK(changed.content_hash() != h);
    CHECK_THROWS_AS(m.record(dir.string(), "missing.txt"), DataError);
    fs::remove_all(dir);
  }
}

TEST_SUITE("reports") {
  TEST_CASE("numbers round trip exactly") {
    for (const double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678, 0.0}) CHECK(parse_number(format_number(v)) == v);
    CHECK_THROWS_AS(parse_number("1.5x"), DataError);
  }

  TEST_CASE("csv tables") {
    CsvTable t;
    t.header = {"a", "b"};
    t.add_row({"1", "2"});
    CHECK_THROWS_AS(t.add_row({"1"}), ShapeError);
    std::stringstream ss;
    t.write(ss);
    CHECK(ss.str() == "a,b\n1,2\n");
    const auto back = CsvTable::read(ss);
    CHECK(back.rows == t.rows);
    CHECK(back.column("b") == 1);
    CHECK_THROWS_AS(back.column("c"), DataError);
  }

  TEST_CASE("epoch log table round trip") {
    EpochLog a{1, {0.5, 0.25}, {0.1, 0.2}, {0.3, 0.4}, {0.05, 0.06}, {0.9}};
    EpochLog b{2, {0.4, 0.2}, {0.0, 0.1}, {0.2, 0.3}, {0.04, 0.05}, {0.8}};
    const std::vector<EpochLog> logs{a, b};
    const auto table = epoch_log_table(logs, 2);
    CHECK(table.header.size() == 1 + 4 * 2 + 1);
    CHECK(epoch_logs_from_table(table) == logs);
  }

  TEST_CASE("inference table has one row per mode") {
    InferenceRow row;
    row.mode = InferenceMode::centre;
    row.columns = {"clean", "backdoor"};
    InferenceReport r;
    r.accuracy = 0.5;
    r.coeffs = Coeffs::uniform(2);
    row.reports = {r, r};
    const auto t = inference_table({row});
    CHECK(t.rows.size() == 1);
    CHECK(t.header.front() == "mode");
    CHECK(t.rows[0][0] == "centre");
    CHECK(t.rows[0][t.column("clean_coeffs")] == "0.5;0.5");
  }

  TEST_CASE("forgetting table layout") {
    ForgettingReport r{{0.9, 0.8}, {0.5, 0.8}};
    const auto t = forgetting_table(r);
    CHECK(t.header == std::vector<std::string>{"evaluation", "task_0", "task_1"});
    CHECK(t.rows.size() == 2);
    CHECK(r.mean_after_final() == doctest::Approx(0.65));
  }
}
