#include "cps/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cps/cifar.hpp"
#include "cps/hashing.hpp"
#include "cps/inference.hpp"
#include "json_io.hpp"

namespace cps {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Reads keys from one object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: bad value for '" + where(key) + "': " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ShiftSpec shift_from_json(const json& j, const std::string& path) {
  Section s(j, path);
  ShiftSpec out;
  std::string kind = std::string(to_string(out.kind));
  s.get("kind", kind);
  try {
    out.kind = shift_kind_from_string(kind);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  s.get("seed", out.seed);
  s.get("p", out.p);
  s.get("epsilon", out.epsilon);
  s.get("degrees", out.degrees);
  s.finish();
  out.validate();
  return out;
}

json shift_to_json(const ShiftSpec& s) {
  return {{"kind", std::string(to_string(s.kind))}, {"seed", s.seed}, {"p", s.p}, {"epsilon", s.epsilon}, {"degrees", s.degrees}};
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key.path=value");
  const auto key = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  std::string pointer;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    pointer += "/" + part;
  }
  root[json::json_pointer(pointer)] = value;
}

void read_model(Section& root, ExperimentConfig& cfg) {
  if (!root.has("model")) return;
  const auto& j = root.raw("model");
  Section s(j, "model");
  std::string preset, kind;
  s.get("preset", preset);
  if (!preset.empty()) {
    try {
      cfg.model = ModelSpec::preset(preset);
    } catch (const Error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  if (s.has("kind")) {
    s.get("kind", kind);
    cfg.model.kind = arch_kind_from_string(kind);
  }
  s.get("widths", cfg.model.widths);
  if (s.has("input_shape")) {
    s.get("input_shape", cfg.model.input_shape);
    cfg.input_shape_set = true;
  }
  if (s.has("classes")) {
    s.get("classes", cfg.model.classes);
    cfg.classes_set = true;
  }
  s.finish();
}

void read_data(Section& root, DataRecipe& d) {
  if (!root.has("data")) return;
  Section s(root.raw("data"), "data");
  s.get("source", d.source);
  s.get("path", d.path);
  s.get("limit", d.limit);
  s.get("split_ratio", d.split_ratio);
  if (s.has("synthetic")) {
    Section y(s.raw("synthetic"), "data.synthetic");
    auto& o = d.synthetic;
    std::string mode(to_string(o.mode));
    y.get("seed", o.seed);
    y.get("n_tasks", o.n_tasks);
    y.get("classes", o.classes);
    y.get("samples_per_class", o.samples_per_class);
    y.get("mode", mode);
    o.mode = synthetic_mode_from_string(mode);
    y.get("features", o.features);
    y.get("shift", o.shift);
    y.get("noise", o.noise);
    y.get("pixel_offset", o.pixel_offset);
    y.get("pixel_scale", o.pixel_scale);
    y.get("sample_shape", o.sample_shape);
    y.finish();
  }
  if (s.has("tasks")) {
    const auto& arr = s.raw("tasks");
    if (!arr.is_array()) throw ConfigError("config: 'data.tasks' must be an array");
    d.tasks.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto path = "data.tasks[" + std::to_string(i) + "]";
      Section t(arr[i], path);
      TaskRecipe r;
      t.get("name", r.name);
      t.get("labels", r.labels);
      if (t.has("shifts")) {
        const auto& sh = t.raw("shifts");
        if (!sh.is_array()) throw ConfigError("config: '" + path + ".shifts' must be an array");
        for (std::size_t k = 0; k < sh.size(); ++k) r.shifts.push_back(shift_from_json(sh[k], path + ".shifts"));
      }
      t.finish();
      d.tasks.push_back(std::move(r));
    }
  }
  s.finish();
}

void read_train(Section& root, TrainConfig& t) {
  if (!root.has("train")) return;
  Section s(root.raw("train"), "train");
  s.get("learning_rate", t.learning_rate);
  s.get("batch_size", t.batch_size);
  s.get("max_epochs", t.max_epochs);
  s.get("early_stop_loss", t.early_stop_loss);
  s.get("train_seed", t.train_seed);
  s.get("test_seed", t.test_seed);
  s.finish();
}

void read_attack(Section& root, AttackConfig& a) {
  if (!root.has("attack")) return;
  Section s(root.raw("attack"), "attack");
  s.get("epsilon", a.epsilon);
  s.get("scale", a.scale);
  s.get("steps", a.steps);
  s.get("step_size", a.step_size);
  s.finish();
}

void read_inference(Section& root, InferenceSettings& inf) {
  if (!root.has("inference")) return;
  Section s(root.raw("inference"), "inference");
  s.get("modes", inf.modes);
  s.get("ensemble_m", inf.ensemble_m);
  s.get("param_segments", inf.param_segments);
  s.get("input_segments", inf.input_segments);
  s.get("exclude_boundary", inf.exclude_boundary);
  if (s.has("backdoor")) inf.backdoor = shift_from_json(s.raw("backdoor"), "inference.backdoor");
  s.get("permutation_seed", inf.permutation_seed);
  s.get("rotation_degrees", inf.rotation_degrees);
  s.finish();
}

void read_baseline(Section& root, BaselineSettings& b) {
  if (!root.has("baseline")) return;
  Section s(root.raw("baseline"), "baseline");
  s.get("regime", b.regime);
  s.get("fraction", b.fraction);
  s.get("triggers", b.triggers);
  s.get("trigger_epsilon", b.trigger_epsilon);
  s.finish();
}

void read_hypernet(Section& root, HypernetSettings& h) {
  if (!root.has("hypernet")) return;
  Section s(root.raw("hypernet"), "hypernet");
  auto& c = h.continual;
  s.get("meta_widths", h.meta_widths);
  s.get("omega", c.omega);
  s.get("beta", c.beta);
  s.get("epochs_per_task", c.epochs_per_task);
  s.get("batch_size", c.batch_size);
  s.get("replay_batches", c.replay_batches);
  s.get("learning_rate", c.adam.learning_rate);
  s.get("adam_beta1", c.adam.beta1);
  s.get("adam_beta2", c.adam.beta2);
  s.get("adam_epsilon", c.adam.epsilon);
  s.get("seed", c.seed);
  s.finish();
}

void read_probe(Section& root, ProbeSettings& p) {
  if (!root.has("probe")) return;
  Section s(root.raw("probe"), "probe");
  s.get("kind", p.kind);
  s.get("task_coeffs", p.task_coeffs);
  s.get("param_segments", p.param_segments);
  s.finish();
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  attack.validate();
  hypernet.continual.validate();
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a finite non-negative number");
  const auto& src = data.source;
  if (src != "synthetic" && src != "cifar10" && src != "cifar100") throw ConfigError("unknown data source '" + src + "'");
  if (src != "synthetic" && data.path.empty()) throw ConfigError("data.path is required for " + src);
  if (!(data.split_ratio > 0.0 && data.split_ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  for (const auto& m : inference.modes) inference_mode_from_string(m);
  if (inference.ensemble_m < 1) throw ConfigError("ensemble M must be >= 1");
  if (inference.param_segments < 2 || inference.input_segments < 2) throw ConfigError("grid segments must be >= 2");
  const auto& r = baseline.regime;
  if (r != "standard" && r != "cutmix" && r != "adversarial" && r != "backdoor-adv") {
    throw ConfigError("unknown baseline regime '" + r + "'");
  }
  if (probe.kind != "theorem2" && probe.kind != "theorem3") throw ConfigError("unknown probe '" + probe.kind + "'");
  if (probe.param_segments < 2) throw ConfigError("probe grid segments must be >= 2");
  if (output_dir.empty()) throw ConfigError("output directory must be non-empty");
}

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  if (j.is_null()) j = json::object();
  try {
    for (const auto& o : overrides) apply_override(j, o);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config override: ") + e.what());
  }

  ExperimentConfig cfg;
  Section root(j, "");
  try {
    read_model(root, cfg);
    read_data(root, cfg.data);
    root.get("beta", cfg.beta);
    read_train(root, cfg.train);
    read_attack(root, cfg.attack);
    read_inference(root, cfg.inference);
    read_baseline(root, cfg.baseline);
    read_hypernet(root, cfg.hypernet);
    read_probe(root, cfg.probe);
    root.get("output_dir", cfg.output_dir);
    root.finish();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json model = model_to_json(cfg.model);
  if (!cfg.input_shape_set) model.erase("input_shape");
  if (!cfg.classes_set) model.erase("classes");
  const auto& o = cfg.data.synthetic;
  json tasks = json::array();
  for (const auto& t : cfg.data.tasks) {
    json shifts = json::array();
    for (const auto& s : t.shifts) shifts.push_back(shift_to_json(s));
    tasks.push_back({{"name", t.name}, {"labels", t.labels}, {"shifts", shifts}});
  }
  const auto& inf = cfg.inference;
  const auto& c = cfg.hypernet.continual;
  const json j = {
      {"model", model},
      {"data",
       {{"source", cfg.data.source},
        {"path", cfg.data.path},
        {"limit", cfg.data.limit},
        {"split_ratio", cfg.data.split_ratio},
        {"synthetic",
         {{"seed", o.seed},
          {"n_tasks", o.n_tasks},
          {"classes", o.classes},
          {"samples_per_class", o.samples_per_class},
          {"mode", std::string(to_string(o.mode))},
          {"features", o.features},
          {"shift", o.shift},
          {"noise", o.noise},
          {"pixel_offset", o.pixel_offset},
          {"pixel_scale", o.pixel_scale},
          {"sample_shape", o.sample_shape}}},
        {"tasks", tasks}}},
      {"beta", cfg.beta},
      {"train",
       {{"learning_rate", cfg.train.learning_rate},
        {"batch_size", cfg.train.batch_size},
        {"max_epochs", cfg.train.max_epochs},
        {"early_stop_loss", cfg.train.early_stop_loss},
        {"train_seed", cfg.train.train_seed},
        {"test_seed", cfg.train.test_seed}}},
      {"attack",
       {{"epsilon", cfg.attack.epsilon}, {"scale", cfg.attack.scale}, {"steps", cfg.attack.steps}, {"step_size", cfg.attack.step_size}}},
      {"inference",
       {{"modes", inf.modes},
        {"ensemble_m", inf.ensemble_m},
        {"param_segments", inf.param_segments},
        {"input_segments", inf.input_segments},
        {"exclude_boundary", inf.exclude_boundary},
        {"backdoor", shift_to_json(inf.backdoor)},
        {"permutation_seed", inf.permutation_seed},
        {"rotation_degrees", inf.rotation_degrees}}},
      {"baseline",
       {{"regime", cfg.baseline.regime},
        {"fraction", cfg.baseline.fraction},
        {"triggers", cfg.baseline.triggers},
        {"trigger_epsilon", cfg.baseline.trigger_epsilon}}},
      {"hypernet",
       {{"meta_widths", cfg.hypernet.meta_widths},
        {"omega", c.omega},
        {"beta", c.beta},
        {"epochs_per_task", c.epochs_per_task},
        {"batch_size", c.batch_size},
        {"replay_batches", c.replay_batches},
        {"learning_rate", c.adam.learning_rate},
        {"adam_beta1", c.adam.beta1},
        {"adam_beta2", c.adam.beta2},
        {"adam_epsilon", c.adam.epsilon},
        {"seed", c.seed}}},
      {"probe", {{"kind", cfg.probe.kind}, {"task_coeffs", cfg.probe.task_coeffs}, {"param_segments", cfg.probe.param_segments}}},
      {"output_dir", cfg.output_dir}};
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& cfg) {
  auto j = json::parse(config_to_json(cfg));
  j.erase("output_dir");  // where results go does not change what they are
  return fnv1a_hex(j.dump());
}

PreparedTasks prepare_tasks(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  std::vector<TaskSet> raw;
  if (d.source == "synthetic") {
    raw = make_synthetic_tasks(d.synthetic);
    if (!d.tasks.empty()) {
      if (d.tasks.size() != raw.size()) {
        throw ConfigError("synthetic recipes list one task entry per generated task (" + std::to_string(raw.size()) + ")");
      }
      for (std::size_t t = 0; t < raw.size(); ++t) {
        const auto& r = d.tasks[t];
        if (!r.labels.empty()) raw[t] = filter_task(raw[t], r.labels);
        for (const auto& s : r.shifts) raw[t] = apply_shift(raw[t], s);
        if (!r.name.empty()) raw[t].name = r.name;
      }
    }
  } else {
    auto base = d.source == "cifar10" ? load_cifar10(d.path) : load_cifar100(d.path);
    if (d.limit > 0 && d.limit < base.size()) {
      std::vector<std::size_t> rows(d.limit);
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
      base = base.subset(rows);
    }
    if (d.tasks.size() < 2) throw ConfigError("dataset recipes need at least 2 entries in data.tasks");
    for (std::size_t t = 0; t < d.tasks.size(); ++t) {
      const auto& r = d.tasks[t];
      auto task = r.labels.empty() ? base : filter_task(base, r.labels);
      for (const auto& s : r.shifts) task = apply_shift(task, s);
      task.name = r.name.empty() ? "task" + std::to_string(t) : r.name;
      raw.push_back(std::move(task));
    }
  }

  PreparedTasks out;
  out.model = cfg.model;
  const auto& first = raw.front();
  if (!cfg.input_shape_set) out.model.input_shape = first.sample_shape;
  if (!cfg.classes_set) {
    std::size_t classes = 0;
    for (const auto& t : raw) classes = std::max(classes, t.classes);
    out.model.classes = classes;
  }
  out.model.validate();
  for (auto& t : raw) {
    if (t.sample_shape != out.model.input_shape) {
      throw DataError("task '" + t.name + "' samples do not match model input " + shape_string(out.model.input_shape));
    }
    auto [train, test] = train_test_split(t, d.split_ratio, cfg.train.train_seed);
    out.train.push_back(std::move(train));
    out.test.push_back(std::move(test));
  }
  return out;
}

void RunManifest::record(const std::string& dir, const std::string& relative) {
  artifacts.push_back({relative, file_hash((fs::path(dir) / relative).string())});
}

std::string RunManifest::content_hash() const {
  Fnv1a h;
  h.update(command);
  h.update("\n");
  h.update(config_hash);
  h.update("\n");
  h.update(version);
  for (const auto& a : artifacts) {
    h.update("\n");
    h.update(a.path);
    h.update("=");
    h.update(a.hash);
  }
  return h.hex();
}

void RunManifest::save(const std::string& path) const {
  json arts = json::array();
  for (const auto& a : artifacts) arts.push_back({{"path", a.path}, {"hash", a.hash}});
  json times = json::array();
  for (const auto& t : timings) times.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  const json j = {{"command", command},  {"config_hash", config_hash}, {"version", version},
                  {"artifacts", arts},   {"timings", times},           {"content_hash", content_hash()}};
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write manifest " + path);
  os << j.dump(2) << '\n';
}

RunManifest RunManifest::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read manifest " + path);
  try {
    const auto j = json::parse(is);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.version = j.at("version").get<std::string>();
    for (const auto& a : j.at("artifacts")) m.artifacts.push_back({a.at("path").get<std::string>(), a.at("hash").get<std::string>()});
    for (const auto& t : j.at("timings")) m.timings.push_back({t.at("stage").get<std::string>(), t.at("seconds").get<double>()});
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest ") + path + ": " + e.what());
  }
}

}  // namespace cps
