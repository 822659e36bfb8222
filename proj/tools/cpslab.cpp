// cpslab: command-line front end for subspace training, inference, landscapes,
// attacks, baselines, hypernetwork continual learning and the probes.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 data error, 4 numeric divergence.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <list>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cps/checkpoint.hpp"
#include "cps/config.hpp"
#include "cps/hypernet.hpp"
#include "cps/inference.hpp"
#include "cps/probes.hpp"
#include "cps/reports.hpp"
#include "cps/shifts.hpp"
#include "cps/task_interpolation.hpp"

namespace fs = std::filesystem;
using namespace cps;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kDivergence = 4 };

struct Globals {
  std::string config;
  std::vector<std::string> sets;
  bool quiet = false;
};

/// Collects `--flag value` pairs that map one-to-one onto config keys.
class Overrides {
 public:
  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = values_.emplace_back(key, std::string());
    app->add_option(flag, slot.second, help + " (" + key + ")");
  }
  void bind_list(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = lists_.emplace_back(key, std::vector<std::string>());
    app->add_option(flag, slot.second, help + " (" + key + ")")->delimiter(',');
  }
  std::vector<std::string> resolve(const std::vector<std::string>& sets) const {
    std::vector<std::string> out = sets;
    for (const auto& [key, value] : values_)
      if (!value.empty()) out.push_back(key + "=" + value);
    for (const auto& [key, items] : lists_) {
      if (items.empty()) continue;
      std::string arr = "[";
      for (std::size_t i = 0; i < items.size(); ++i) arr += (i ? ",\"" : "\"") + items[i] + "\"";
      out.push_back(key + "=" + arr + "]");
    }
    return out;
  }

 private:
  std::list<std::pair<std::string, std::string>> values_;
  std::list<std::pair<std::string, std::vector<std::string>>> lists_;
};

struct Run {
  ExperimentConfig cfg;
  fs::path out;
  RunManifest manifest;
  std::chrono::steady_clock::time_point stage_start = std::chrono::steady_clock::now();

  void stage(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    manifest.timings.push_back({name, std::chrono::duration<double>(now - stage_start).count()});
    stage_start = now;
  }
  std::string path(const std::string& rel) const { return (out / rel).string(); }
  void save_table(const std::string& rel, const CsvTable& t) {
    fs::create_directories((out / rel).parent_path());
    t.save(path(rel));
    manifest.record(out.string(), rel);
  }
  void record_dir(const std::string& rel) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(out / rel))
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), out).generic_string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) manifest.record(out.string(), f);
  }
};

Run open_run(const Globals& g, const std::vector<std::string>& overrides, const std::string& command) {
  Run run;
  run.cfg = g.config.empty() ? parse_config("{}", overrides) : load_config(g.config, overrides);
  fs::path out = run.cfg.output_dir;
  if (out.is_relative()) {
    if (const char* root = std::getenv("CPSLAB_OUTPUT_ROOT"); root && *root) out = fs::path(root) / out;
  }
  run.out = out;
  run.manifest.command = command;
  run.manifest.config_hash = config_hash(run.cfg);
  return run;
}

void finish(Run& run, const Globals& g) {
  fs::create_directories(run.out);
  std::ofstream(run.out / (run.manifest.command + ".config.json"), std::ios::binary | std::ios::trunc)
      << config_to_json(run.cfg) << '\n';
  run.manifest.record(run.out.string(), run.manifest.command + ".config.json");
  const auto manifest_path = run.out / (run.manifest.command + ".manifest.json");
  run.manifest.save(manifest_path.string());
  if (!g.quiet) std::cout << "wrote " << manifest_path.string() << " (content " << run.manifest.content_hash() << ")\n";
}

Subspace load_matching_subspace(const std::string& dir, const ModelSpec& model) {
  auto s = load_subspace(dir);
  if (s.spec().fingerprint() != model.fingerprint()) {
    throw DataError("fingerprint mismatch: checkpoint model " + s.spec().canonical() + " vs configured " + model.canonical());
  }
  return s;
}

std::size_t task_index(std::size_t requested, const PreparedTasks& p) {
  if (requested >= p.test.size()) throw ConfigError("task index " + std::to_string(requested) + " out of range");
  return requested;
}

/// PGD copy of `task`, perturbed against `params`, back at pixel scale.
TaskSet adversarial_task(const ModelSpec& spec, const ParamVector& params, const TaskSet& task, const AttackConfig& attack,
                         double* max_linf = nullptr) {
  TaskSet out = task;
  const std::size_t per = task.sample_size();
  double worst = 0.0;
  for (std::size_t start = 0; start < task.size(); start += 256) {
    std::vector<std::size_t> rows(std::min(task.size(), start + 256) - start);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
    const auto clean = task.batch(rows);
    const auto adv = pgd_attack(spec, params, clean, task.labels_of(rows), attack);
    for (std::size_t k = 0; k < adv.size(); ++k) {
      worst = std::max(worst, static_cast<double>(std::abs(adv[k] - clean[k])));
      out.inputs[start * per + k] = adv[k] * kPixelMax;
    }
  }
  if (max_linf) *max_linf = worst;
  out.provenance.push_back("pgd");
  return out;
}

// ------------------------------------------------------------------ commands

void cmd_train_cps(Run& run) {
  const auto p = prepare_tasks(run.cfg);
  run.stage("data");
  const auto s = train_cps(p.model, p.train, run.cfg.beta, run.cfg.train);
  run.stage("train");
  save_subspace(run.path("subspace"), s);
  run.record_dir("subspace");
  std::vector<InferenceRow> rows;
  CsvTable summary;
  summary.header = {"endpoint", "task", "epochs", "final_task_loss", "test_accuracy", "test_loss"};
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto ev = evaluate(p.model, s.endpoints()[i], p.test[i]);
    summary.add_row({std::to_string(i), p.train[i].name, std::to_string(s.logs().size()),
                     format_number(s.logs().back().task_loss[i]), format_number(ev.accuracy), format_number(ev.loss)});
  }
  run.save_table("train_summary.csv", summary);
  run.stage("report");
}

void cmd_infer(Run& run, const std::string& subspace_dir, std::size_t task) {
  const auto p = prepare_tasks(run.cfg);
  const auto s = load_matching_subspace(subspace_dir, p.model);
  run.stage("load");
  const auto& inf = run.cfg.inference;
  const auto mid = centre(s);
  const std::size_t t = task_index(task, p);

  using Builder = std::function<TaskSet(const TaskSet&)>;
  std::vector<std::pair<std::string, Builder>> columns{
      {"clean", [](const TaskSet& x) { return x; }},
      {"backdoor", [&](const TaskSet& x) { return apply_backdoor(x, inf.backdoor); }},
      {"adversarial", [&](const TaskSet& x) { return adversarial_task(s.spec(), mid, x, run.cfg.attack); }},
      {"permutation", [&](const TaskSet& x) { return apply_permutation(x, inf.permutation_seed); }},
  };
  if (p.test[t].is_image()) columns.push_back({"rotation", [&](const TaskSet& x) { return apply_rotation(x, inf.rotation_degrees); }});

  std::vector<std::string> names;
  std::vector<TaskSet> single;
  std::vector<std::vector<TaskSet>> every;
  for (const auto& [name, build] : columns) {
    names.push_back(name);
    single.push_back(build(p.test[t]));
    every.emplace_back();
    for (const auto& x : p.test) every.back().push_back(build(x));
  }
  run.stage("shifts");

  const auto ensemble = sample_coeffs(run.cfg.train.test_seed, inf.ensemble_m, s.size());
  const auto grid = grid_coeffs(inf.param_segments, s.size(), inf.exclude_boundary);
  std::vector<InferenceRow> rows;
  for (const auto& m : inf.modes) {
    InferenceRow row;
    row.mode = inference_mode_from_string(m);
    row.columns = names;
    for (std::size_t c = 0; c < names.size(); ++c) {
      switch (row.mode) {
        case InferenceMode::centre: row.reports.push_back(centre_report(s, single[c])); break;
        case InferenceMode::ensemble: row.reports.push_back(ensemble_predict(s, ensemble, single[c])); break;
        case InferenceMode::interpolated: row.reports.push_back(lowest_loss_interpolated(s, single[c], grid)); break;
        case InferenceMode::boundary: row.reports.push_back(lowest_loss_boundary(s, single[c])); break;
        case InferenceMode::multi_task: row.reports.push_back(multi_task_lowest_loss(s, every[c], grid)); break;
      }
    }
    rows.push_back(std::move(row));
  }
  run.stage("inference");
  run.save_table("inference.csv", inference_table(rows));
}

void cmd_landscape(Run& run, const std::string& subspace_dir) {
  const auto p = prepare_tasks(run.cfg);
  const auto s = load_matching_subspace(subspace_dir, p.model);
  const auto& inf = run.cfg.inference;
  const auto task_grid = enumerate_task_grid(p.test, inf.input_segments);
  const auto param_grid = grid_coeffs(inf.param_segments, s.size(), false);
  run.stage("grids");
  const auto g = landscape_map(s, task_grid, param_grid);
  run.stage("evaluate");
  run.save_table("landscape/loss.csv", landscape_matrix_table(g, false));
  run.save_table("landscape/accuracy.csv", landscape_matrix_table(g, true));
  run.save_table("landscape/argmin.csv", landscape_argmin_table(g));
  run.save_table("landscape/param_grid.csv", coeff_table(g.param_coeffs, "param_index"));
  run.stage("report");
}

void cmd_attack(Run& run, const std::string& subspace_dir, const std::string& params_file, std::size_t task) {
  const auto p = prepare_tasks(run.cfg);
  ParamVector target;
  if (!params_file.empty()) {
    target = load_params(params_file);
    if (target.fingerprint() != p.model.fingerprint()) throw DataError("fingerprint mismatch between parameters and model");
  } else {
    target = centre(load_matching_subspace(subspace_dir, p.model));
  }
  const std::size_t t = task_index(task, p);
  const auto clean = evaluate(p.model, target, p.test[t]);
  double linf = 0.0;
  const auto adv_task = adversarial_task(p.model, target, p.test[t], run.cfg.attack, &linf);
  const auto adv = evaluate(p.model, target, adv_task);
  // The attack enforces its budget in float arithmetic.
  const double budget = static_cast<float>(run.cfg.attack.effective_epsilon());
  if (linf > budget) throw NumericError("PGD perturbation exceeded its L-infinity budget");
  run.stage("attack");
  CsvTable t_out;
  t_out.header = {"evaluation", "accuracy", "loss", "max_linf", "budget"};
  t_out.add_row({"clean", format_number(clean.accuracy), format_number(clean.loss), "0", format_number(budget)});
  t_out.add_row({"pgd", format_number(adv.accuracy), format_number(adv.loss), format_number(linf), format_number(budget)});
  run.save_table("attack.csv", t_out);
}

void cmd_baseline(Run& run, std::size_t task) {
  const auto p = prepare_tasks(run.cfg);
  const std::size_t t = task_index(task, p);
  const auto& b = run.cfg.baseline;
  TrainResult r;
  if (b.regime == "standard") {
    r = train_standard(p.model, p.train[t], run.cfg.train);
  } else if (b.regime == "cutmix") {
    r = train_cutmix(p.model, p.train[t], run.cfg.train, b.fraction);
  } else if (b.regime == "adversarial") {
    r = train_adversarial(p.model, p.train[t], run.cfg.train, run.cfg.attack, b.fraction);
  } else {
    r = train_backdoor_adv(p.model, p.train[t], run.cfg.train, b.triggers, b.fraction, b.trigger_epsilon);
  }
  run.stage("train");
  fs::create_directories(run.out / "baseline");
  save_params(run.path("baseline/" + b.regime + ".params"), r.params);
  run.manifest.record(run.out.string(), "baseline/" + b.regime + ".params");
  const auto clean = evaluate(p.model, r.params, p.test[t]);
  const auto adv = evaluate_under_pgd(p.model, r.params, p.test[t], run.cfg.attack);
  CsvTable summary;
  summary.header = {"regime", "epochs", "early_stopped", "final_train_loss", "clean_accuracy", "pgd_accuracy"};
  summary.add_row({b.regime, std::to_string(r.epochs), r.early_stopped ? "1" : "0", format_number(r.epoch_losses.back()),
                   format_number(clean.accuracy), format_number(adv.accuracy)});
  run.save_table("baseline/" + b.regime + ".csv", summary);
  CsvTable epochs;
  epochs.header = {"epoch", "train_loss", "augmented"};
  for (std::size_t e = 0; e < r.epochs; ++e)
    epochs.add_row({std::to_string(e + 1), format_number(r.epoch_losses[e]), std::to_string(r.augmented_per_epoch[e])});
  run.save_table("baseline/" + b.regime + ".epochs.csv", epochs);
  run.stage("report");
}

void cmd_hypernet(Run& run) {
  const auto p = prepare_tasks(run.cfg);
  HyperSpec spec{run.cfg.hypernet.meta_widths, p.model};
  const auto [state, report] = train_continual(spec, p.train, p.test, run.cfg.hypernet.continual);
  run.stage("train");
  save_continual_state(run.path("continual"), state);
  run.record_dir("continual");
  run.save_table("forgetting.csv", forgetting_table(report));
  run.stage("report");
}

void cmd_probe(Run& run, const std::string& subspace_dir) {
  const std::string kind = run.cfg.probe.kind;
  run.manifest.command = "probe-" + kind;
  const auto p = prepare_tasks(run.cfg);
  if (kind == "theorem2") {
    if (subspace_dir.empty()) throw ConfigError("probe theorem2 needs --subspace");
    const auto s = load_matching_subspace(subspace_dir, p.model);
    run.save_table("probe/theorem2.csv", update_similarity_table(theorem2_probe(s.logs())));
    return;
  }
  const auto with_beta = train_cps(p.model, p.train, run.cfg.beta, run.cfg.train);
  const auto without_beta = train_cps(p.model, p.train, 0.0, run.cfg.train);
  run.stage("subspaces");
  Coeffs mix{run.cfg.probe.task_coeffs};
  if (mix.alpha.empty()) {
    mix.alpha.assign(p.train.size(), 0.0);
    mix.alpha[0] = mix.alpha[1] = 0.5;
  }
  const auto task = interpolate_tasks(p.train, mix);
  const auto grid = grid_coeffs(run.cfg.probe.param_segments, with_beta.size(), false);
  const auto summary = theorem3_probe(with_beta, without_beta, task, run.cfg.train, grid);
  run.stage("probe");
  run.save_table("probe/theorem3.csv", ground_truth_table(summary));
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed parameter subspace laboratory"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("-c,--config", g.config, "JSON experiment configuration")->check(CLI::ExistingFile)->option_text("FILE");
  app.add_option("--set", g.sets, "override any config key, e.g. --set train.max_epochs=5");
  app.add_flag("-q,--quiet", g.quiet, "do not print the manifest path");

  Overrides ov;
  std::string subspace, params_file, probe_kind;
  std::size_t task = 0;
  std::function<void(Run&)> action;
  std::string command;

  auto common = [&](CLI::App* sub) {
    ov.bind(sub, "-o,--out", "output_dir", "output directory");
    ov.bind(sub, "--train-seed", "train.train_seed", "training seed");
    ov.bind(sub, "--test-seed", "train.test_seed", "evaluation seed");
  };

  auto* train = app.add_subcommand("train-cps", "train a compressed parameter subspace");
  common(train);
  ov.bind(train, "--beta", "beta", "distance coefficient");
  ov.bind(train, "--epochs", "train.max_epochs", "maximum epochs");
  ov.bind(train, "--lr", "train.learning_rate", "SGD learning rate");
  ov.bind(train, "--threshold", "train.early_stop_loss", "early-stop loss");
  train->callback([&] { command = "train-cps"; action = cmd_train_cps; });

  auto* infer = app.add_subcommand("infer", "subspace inference report");
  common(infer);
  infer->add_option("--subspace", subspace, "subspace checkpoint directory")->required();
  infer->add_option("--task", task, "index of the evaluated test task");
  ov.bind_list(infer, "--modes", "inference.modes", "centre,ensemble,interpolated,boundary,multi-task");
  ov.bind(infer, "--ensemble-m", "inference.ensemble_m", "ensemble size");
  ov.bind(infer, "--segments", "inference.param_segments", "parameter grid segments");
  infer->callback([&] { command = "infer"; action = [&](Run& r) { cmd_infer(r, subspace, task); }; });

  auto* land = app.add_subcommand("landscape", "input x parameter loss/accuracy grid");
  common(land);
  land->add_option("--subspace", subspace, "subspace checkpoint directory")->required();
  ov.bind(land, "--segments-input", "inference.input_segments", "task grid segments");
  ov.bind(land, "--segments-param", "inference.param_segments", "parameter grid segments");
  land->callback([&] { command = "landscape"; action = [&](Run& r) { cmd_landscape(r, subspace); }; });

  auto* attack = app.add_subcommand("attack", "PGD evaluation of the subspace centre or a parameter file");
  common(attack);
  attack->add_option("--subspace", subspace, "subspace checkpoint directory");
  attack->add_option("--params", params_file, "parameter checkpoint");
  attack->add_option("--task", task, "index of the evaluated test task");
  ov.bind(attack, "--epsilon", "attack.epsilon", "attack budget before scaling");
  ov.bind(attack, "--scale", "attack.scale", "budget scale");
  ov.bind(attack, "--steps", "attack.steps", "PGD iterations");
  attack->callback([&] {
    command = "attack";
    if (subspace.empty() == params_file.empty()) throw CLI::ValidationError("attack", "give exactly one of --subspace or --params");
    action = [&](Run& r) { cmd_attack(r, subspace, params_file, task); };
  });

  auto* base = app.add_subcommand("baseline", "train a single-model baseline");
  common(base);
  base->add_option("--task", task, "index of the training task");
  ov.bind(base, "--regime", "baseline.regime", "standard|cutmix|adversarial|backdoor-adv");
  ov.bind(base, "--fraction", "baseline.fraction", "augmented fraction");
  ov.bind(base, "--triggers", "baseline.triggers", "backdoor-adv trigger count");
  ov.bind(base, "--epochs", "train.max_epochs", "maximum epochs");
  base->callback([&] { command = "baseline"; action = [&](Run& r) { cmd_baseline(r, task); }; });

  auto* hyper = app.add_subcommand("hypernet", "sequential hypernetwork training");
  common(hyper);
  ov.bind(hyper, "--omega", "hypernet.omega", "output-drift weight");
  ov.bind(hyper, "--beta", "hypernet.beta", "snapshot distance weight");
  ov.bind(hyper, "--epochs", "hypernet.epochs_per_task", "epochs per task");
  hyper->callback([&] { command = "hypernet"; action = cmd_hypernet; });

  auto* probe = app.add_subcommand("probe", "update-similarity (theorem2) or ground-truth distance (theorem3) probe");
  common(probe);
  probe->add_option("kind", probe_kind, "theorem2|theorem3, default probe.kind")->check(CLI::IsMember({"theorem2", "theorem3"}));
  probe->add_option("--subspace", subspace, "subspace checkpoint directory (theorem2)");
  ov.bind(probe, "--segments", "probe.param_segments", "parameter grid segments");
  probe->callback([&] {
    command = "probe";
    action = [&](Run& r) { cmd_probe(r, subspace); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (!probe_kind.empty()) g.sets.push_back("probe.kind=" + probe_kind);
  return guarded([&] {
    auto run = open_run(g, ov.resolve(g.sets), command);
    action(run);
    finish(run, g);
  });
}
