#include "cps/hypernet.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cps/checkpoint.hpp"
#include "cps/rng.hpp"
#include "json_io.hpp"

namespace cps {

namespace fs = std::filesystem;

ModelSpec HyperSpec::meta_spec() const {
  ModelSpec m;
  m.kind = ArchKind::dense;
  m.widths = meta_widths;
  m.input_shape = {base.input_size()};
  m.classes = parameter_count(base);
  return m;
}

void HyperSpec::validate() const {
  base.validate();
  if (meta_widths.empty()) throw ConfigError("hypernetwork needs at least one meta layer");
  meta_spec().validate();
}

template <typename T>
ad::Var build_hyper_logits(ad::Tape<T>& tape, const HyperSpec& spec, ad::Var meta, ad::Var batch, ad::Var* base_out) {
  const auto& x = tape.value(batch);
  if (x.rank() < 1 || x.dim(0) == 0) throw ShapeError("hypernet_forward: empty batch");
  const std::size_t rows = x.dim(0);
  const std::size_t features = spec.base.input_size();
  if (x.size() != rows * features) {
    throw ShapeError("hypernet batch " + shape_string(x.shape()) + " does not match base input " +
                     shape_string(spec.base.input_shape));
  }
  const auto meta_spec = spec.meta_spec();
  const std::size_t count = parameter_count(spec.base);
  if (tape.value(meta).size() != parameter_count(meta_spec)) {
    throw ShapeError("meta parameter vector does not match the hypernetwork layout");
  }
  auto embedding = ad::mean_rows(tape, ad::reshape(tape, batch, {rows, features}));
  auto emitted = build_logits(tape, meta_spec, meta, embedding);
  if (tape.value(emitted).size() != count) {
    throw ShapeError("meta output dimension does not match base parameter count");
  }
  auto base = ad::reshape(tape, emitted, {count});
  if (base_out) *base_out = base;
  return build_logits(tape, spec.base, base, batch);
}

template <typename T>
std::pair<BasicParamVector<T>, Tensor<T>> hypernet_forward(const HyperSpec& spec, const BasicParamVector<T>& meta,
                                                            const Tensor<T>& batch) {
  meta.require_spec(spec.meta_spec());
  ad::Tape<T> tape;
  auto m = tape.constant(Tensor<T>({meta.size()}, meta.storage()));
  auto x = tape.constant(batch);
  ad::Var base;
  auto logits = build_hyper_logits(tape, spec, m, x, &base);
  require_finite(tape.value(logits), "hypernetwork logits");
  auto params = BasicParamVector<T>(tape.value(base).storage(), parameter_layout(spec.base), spec.base.fingerprint());
  return {std::move(params), tape.value(logits)};
}

template ad::Var build_hyper_logits<float>(ad::Tape<float>&, const HyperSpec&, ad::Var, ad::Var, ad::Var*);
template ad::Var build_hyper_logits<double>(ad::Tape<double>&, const HyperSpec&, ad::Var, ad::Var, ad::Var*);
template std::pair<BasicParamVector<float>, Tensor<float>> hypernet_forward<float>(const HyperSpec&,
                                                                                   const BasicParamVector<float>&,
                                                                                   const Tensor<float>&);
template std::pair<BasicParamVector<double>, Tensor<double>> hypernet_forward<double>(const HyperSpec&,
                                                                                      const BasicParamVector<double>&,
                                                                                      const Tensor<double>&);

Adam::Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

std::vector<float> Adam::update_for(std::span<const float> g, std::vector<double>& m, std::vector<double>& v,
                                    std::size_t t) const {
  if (g.size() != m.size()) throw ShapeError("adam: gradient length does not match state");
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
  std::vector<float> delta(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
    v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * static_cast<double>(g[k]) * g[k];
    delta[k] = static_cast<float>(-cfg_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.epsilon));
  }
  return delta;
}

std::vector<float> Adam::proposal(std::span<const float> g) const {
  auto m = m_;
  auto v = v_;
  return update_for(g, m, v, t_ + 1);
}

void Adam::step(std::span<float> params, std::span<const float> g) {
  ++t_;
  const auto delta = update_for(g, m_, v_, t_);
  for (std::size_t k = 0; k < params.size(); ++k) params[k] += delta[k];
}

void ContinualConfig::validate() const {
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw ConfigError("omega must be a finite non-negative number");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a finite non-negative number");
  if (epochs_per_task < 1) throw ConfigError("epochs per task must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (replay_batches < 1) throw ConfigError("replay batches must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("adam learning rate must be positive");
}

double ForgettingReport::mean_after_final() const {
  if (after_final.empty()) return 0.0;
  return std::accumulate(after_final.begin(), after_final.end(), 0.0) / static_cast<double>(after_final.size());
}

double hypernet_accuracy(const HyperSpec& spec, const ParamVector& meta, const TaskSet& task, std::size_t batch_size) {
  if (task.empty()) throw DataError("hypernet evaluation: empty task");
  std::size_t correct = 0;
  const std::size_t classes = spec.base.classes;
  for (std::size_t start = 0; start < task.size(); start += batch_size) {
    std::vector<std::size_t> rows(std::min(task.size(), start + batch_size) - start);
    std::iota(rows.begin(), rows.end(), start);
    const auto logits = hypernet_forward(spec, meta, task.batch(rows)).second;
    for (std::size_t b = 0; b < rows.size(); ++b) {
      const float* z = &logits[b * classes];
      const auto pred = static_cast<std::size_t>(std::max_element(z, z + classes) - z);
      if (pred == static_cast<std::size_t>(task.fine_labels[rows[b]])) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(task.size());
}

namespace {

ad::Var shifted(ad::Tape<float>& tape, ad::Var p, std::span<const float> delta) {
  if (delta.empty()) return p;
  return ad::add(tape, p, tape.constant(Tensor<float>({delta.size()}, std::vector<float>(delta.begin(), delta.end()))));
}

}  // namespace

double output_drift(const HyperSpec& spec, const ParamVector& reference, const ParamVector& meta,
                    std::span<const float> delta, const Tensor<float>& batch) {
  const auto target = hypernet_forward(spec, reference, batch).second;
  ad::Tape<float> tape;
  auto p = tape.constant(Tensor<float>({meta.size()}, meta.storage()));
  auto x = tape.constant(batch);
  auto logits = build_hyper_logits(tape, spec, shifted(tape, p, delta), x);
  return tape.value(ad::mean_squared_error(tape, logits, target))[0];
}

std::pair<ContinualState, ForgettingReport> train_continual(const HyperSpec& spec, std::span<const TaskSet> train_tasks,
                                                            std::span<const TaskSet> eval_tasks,
                                                            const ContinualConfig& cfg) {
  spec.validate();
  cfg.validate();
  if (train_tasks.size() < 2) throw ConfigError("continual training needs at least 2 tasks");
  if (eval_tasks.size() != train_tasks.size()) throw ConfigError("one evaluation task is needed per training task");

  const auto meta_spec = spec.meta_spec();
  ContinualState state{spec, init_params(meta_spec, cfg.seed), {}, cfg.omega, cfg.beta, {}};
  ForgettingReport report;
  auto shuffle_rng = make_rng(cfg.seed, streams::shuffle);
  auto replay_rng = make_rng(cfg.seed, streams::replay);
  std::vector<std::vector<Tensor<float>>> replay;  // per completed task

  for (std::size_t ti = 0; ti < train_tasks.size(); ++ti) {
    const auto& task = train_tasks[ti];
    if (task.empty()) throw DataError("continual task " + std::to_string(ti) + " is empty");
    Adam adam(state.meta.size(), cfg.adam);

    const bool drift = cfg.omega > 0.0 && !replay.empty();
    std::vector<std::vector<Tensor<float>>> targets;
    if (drift) {
      for (const auto& batches : replay) {
        targets.emplace_back();
        for (const auto& b : batches) targets.back().push_back(hypernet_forward(spec, state.snapshots.back(), b).second);
      }
    }

    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs_per_task; ++epoch) {
      const auto order = shuffled_indices(shuffle_rng, task.size());
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
        const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                            order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch_size)));
        const auto inputs = task.batch(rows);
        const auto labels = task.labels_of(rows);
        const Tensor<float> flat({state.meta.size()}, state.meta.storage());

        std::vector<float> delta;
        if (drift) {
          ad::Tape<float> look;
          auto p = look.variable(flat);
          auto loss = ad::cross_entropy(look, build_hyper_logits(look, spec, p, look.constant(inputs)), labels);
          look.backward(loss);
          delta = adam.proposal(look.grad(p).data());
        }

        ad::Tape<float> tape;
        auto p = tape.variable(flat);
        auto total = ad::cross_entropy(tape, build_hyper_logits(tape, spec, p, tape.constant(inputs)), labels);
        if (drift) {
          auto moved = shifted(tape, p, delta);
          ad::Var sum{};
          for (std::size_t k = 0; k < replay.size(); ++k) {
            const std::size_t r = step % replay[k].size();
            auto logits = build_hyper_logits(tape, spec, moved, tape.constant(replay[k][r]));
            auto d = ad::mean_squared_error(tape, logits, targets[k][r]);
            sum = k == 0 ? d : ad::add(tape, sum, d);
          }
          total = ad::add(tape, total, ad::scale(tape, sum, static_cast<float>(cfg.omega / static_cast<double>(replay.size()))));
        }
        if (cfg.beta > 0.0 && !state.snapshots.empty()) {
          ad::Var sum{};
          for (std::size_t s = 0; s < state.snapshots.size(); ++s) {
            const auto& snap = state.snapshots[s];
            auto d = ad::cosine_distance(tape, p, tape.constant(Tensor<float>({snap.size()}, snap.storage())));
            sum = s == 0 ? d : ad::add(tape, sum, d);
          }
          total = ad::add(tape, total,
                          ad::scale(tape, sum, static_cast<float>(cfg.beta / static_cast<double>(state.snapshots.size()))));
        }
        if (!std::isfinite(tape.value(total)[0])) {
          throw DivergenceError("hypernetwork loss became non-finite on task " + std::to_string(ti),
                                static_cast<int>(epoch), static_cast<int>(ti));
        }
        tape.backward(total);
        adam.step(state.meta.values(), tape.grad(p).data());
      }
    }

    report.after_each.push_back(hypernet_accuracy(spec, state.meta, eval_tasks[ti], cfg.batch_size));
    state.snapshots.push_back(state.meta);
    state.task_order.push_back(task.name);
    replay.emplace_back();
    for (std::size_t r = 0; r < cfg.replay_batches; ++r) {
      const auto order = shuffled_indices(replay_rng, task.size());
      const std::vector<std::size_t> rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(cfg.batch_size, order.size())));
      replay.back().push_back(task.batch(rows));
    }
  }
  for (const auto& t : eval_tasks) report.after_final.push_back(hypernet_accuracy(spec, state.meta, t, cfg.batch_size));
  return {std::move(state), std::move(report)};
}

void save_continual_state(const std::string& dir, const ContinualState& state) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());
  save_params((fs::path(dir) / "meta.params").string(), state.meta);
  nlohmann::json snaps = nlohmann::json::array();
  for (std::size_t t = 0; t < state.snapshots.size(); ++t) {
    const auto name = "snapshot_" + std::to_string(t) + ".params";
    save_params((fs::path(dir) / name).string(), state.snapshots[t]);
    snaps.push_back(name);
  }
  const nlohmann::json manifest = {{"format", "cps-continual"},
                                   {"version", 1},
                                   {"meta_widths", state.spec.meta_widths},
                                   {"base", model_to_json(state.spec.base)},
                                   {"omega", state.omega},
                                   {"beta", state.beta},
                                   {"task_order", state.task_order},
                                   {"meta", "meta.params"},
                                   {"snapshots", snaps}};
  std::ofstream os(fs::path(dir) / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write manifest in " + dir);
  os << manifest.dump(2) << '\n';
}

ContinualState load_continual_state(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!is) throw DataError("no continual-state manifest in " + dir);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("continual manifest: ") + e.what());
  }
  if (m.value("format", "") != "cps-continual") throw DataError("not a continual-state manifest: " + dir);
  ContinualState s;
  s.spec.meta_widths = m.at("meta_widths").get<std::vector<std::size_t>>();
  s.spec.base = model_from_json(m.at("base"));
  s.spec.validate();
  s.omega = m.at("omega").get<double>();
  s.beta = m.at("beta").get<double>();
  s.task_order = m.at("task_order").get<std::vector<std::string>>();
  const auto meta_fp = s.spec.meta_spec().fingerprint();
  s.meta = load_params((fs::path(dir) / m.at("meta").get<std::string>()).string());
  if (s.meta.fingerprint() != meta_fp) throw DataError("meta checkpoint does not match the hypernetwork spec");
  for (const auto& f : m.at("snapshots")) {
    s.snapshots.push_back(load_params((fs::path(dir) / f.get<std::string>()).string()));
    if (s.snapshots.back().fingerprint() != meta_fp) throw DataError("snapshot does not match the hypernetwork spec");
  }
  return s;
}

}  // namespace cps
