#include "cps/subspace.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cps/checkpoint.hpp"
#include "cps/geometry.hpp"
#include "cps/reports.hpp"
#include "json_io.hpp"

namespace cps {

namespace fs = std::filesystem;

Subspace::Subspace(ModelSpec spec, std::vector<ParamVector> endpoints, double beta, std::uint64_t init_seed,
                   std::vector<std::string> provenance, std::vector<EpochLog> logs)
    : spec_(std::move(spec)), endpoints_(std::move(endpoints)), beta_(beta), init_seed_(init_seed),
      provenance_(std::move(provenance)), logs_(std::move(logs)) {
  spec_.validate();
  if (endpoints_.size() < 2) throw ConfigError("a subspace needs at least 2 endpoints");
  if (!(beta_ >= 0.0) || !std::isfinite(beta_)) throw ConfigError("beta must be a finite non-negative number");
  for (const auto& e : endpoints_) {
    e.require_spec(spec_);
    endpoints_[0].require_compatible(e, "Subspace");
  }
  if (!provenance_.empty() && provenance_.size() != endpoints_.size()) {
    throw ConfigError("subspace provenance must name one task per endpoint");
  }
}

namespace {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

void log_geometry(EpochLog& log, const std::vector<ParamVector>& endpoints, const ParamVector& init) {
  const std::size_t n = endpoints.size();
  const auto mid = interpolate_params(Coeffs::uniform(n), std::span<const ParamVector>(endpoints));
  std::vector<std::vector<double>> deltas(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum += cosine_distance(endpoints[i], endpoints[j]);
    log.mean_cosine.push_back(sum / static_cast<double>(n - 1));
    log.centre_cosine.push_back(cosine_distance(endpoints[i], mid));
    const auto v = endpoints[i].values();
    const auto v0 = init.values();
    deltas[i].resize(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) deltas[i][k] = static_cast<double>(v[k]) - static_cast<double>(v0[k]);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) log.update_similarity.push_back(cosine_similarity(deltas[i], deltas[j]));
}

}  // namespace

Subspace train_cps(const ModelSpec& spec, std::span<const TaskSet> tasks, double beta, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = tasks.size();
  if (n < 2) throw ConfigError("train_cps needs at least 2 tasks");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a finite non-negative number");
  for (const auto& t : tasks) {
    if (t.sample_shape != spec.input_shape) {
      throw ShapeError("task '" + t.name + "' samples " + shape_string(t.sample_shape) + " do not match model input " +
                       shape_string(spec.input_shape));
    }
    if (t.classes > spec.classes) throw ShapeError("task '" + t.name + "' has more classes than the model");
  }

  const auto init = init_params(spec, cfg.train_seed);
  std::vector<ParamVector> endpoints(n, init);
  std::vector<Rng> shuffles;
  for (std::size_t i = 0; i < n; ++i) shuffles.push_back(make_rng(cfg.train_seed, streams::shuffle));

  std::vector<EpochLog> logs;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    bool all_below = true;
    for (std::size_t i = 0; i < n; ++i) {
      Regularizer reg;
      if (beta > 0.0) {
        reg = [&endpoints, i, n, beta](ad::Tape<float>& tape, ad::Var p) {
          ad::Var total{};
          bool first = true;
          for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            auto other = tape.constant(Tensor<float>({endpoints[j].size()}, endpoints[j].storage()));
            auto d = ad::cosine_distance(tape, p, other);
            total = first ? d : ad::add(tape, total, d);
            first = false;
          }
          return ad::scale(tape, total, static_cast<float>(beta / static_cast<double>(n - 1)));
        };
      }
      EpochStats stats;
      try {
        stats = run_epoch(spec, tasks[i], cfg, endpoints[i], shuffles[i], epoch, {}, reg);
      } catch (const DivergenceError& e) {
        throw DivergenceError("endpoint " + std::to_string(i) + " diverged at epoch " + std::to_string(epoch),
                              e.epoch(), static_cast<int>(i));
      }
      log.task_loss.push_back(stats.task_loss);
      log.distance_term.push_back(stats.extra_loss);
      all_below = all_below && stats.task_loss <= cfg.early_stop_loss;
    }
    log_geometry(log, endpoints, init);
    logs.push_back(std::move(log));
    if (all_below) break;
  }

  std::vector<std::string> names;
  for (const auto& t : tasks) names.push_back(t.name);
  return Subspace(spec, std::move(endpoints), beta, cfg.train_seed, std::move(names), std::move(logs));
}

ParamVector centre(const Subspace& subspace) {
  return interpolate_params(Coeffs::uniform(subspace.size()), std::span<const ParamVector>(subspace.endpoints()));
}

void save_subspace(const std::string& dir, const Subspace& subspace) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < subspace.size(); ++i) {
    const auto name = "endpoint_" + std::to_string(i) + ".params";
    save_params((fs::path(dir) / name).string(), subspace.endpoints()[i]);
    files.push_back(name);
  }
  epoch_log_table(subspace.logs(), subspace.size()).save((fs::path(dir) / "epoch_log.csv").string());
  const nlohmann::json manifest = {{"format", "cps-subspace"},
                                   {"version", 1},
                                   {"model", model_to_json(subspace.spec())},
                                   {"fingerprint", subspace.spec().fingerprint()},
                                   {"beta", subspace.beta()},
                                   {"init_seed", subspace.init_seed()},
                                   {"provenance", subspace.provenance()},
                                   {"endpoints", files},
                                   {"epoch_log", "epoch_log.csv"}};
  std::ofstream os(fs::path(dir) / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write manifest in " + dir);
  os << manifest.dump(2) << '\n';
}

Subspace load_subspace(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!is) throw DataError("no subspace manifest in " + dir);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("subspace manifest: ") + e.what());
  }
  if (m.value("format", "") != "cps-subspace") throw DataError("not a subspace manifest: " + dir);
  const auto spec = model_from_json(m.at("model"));
  if (m.value("fingerprint", "") != spec.fingerprint()) throw DataError("subspace manifest fingerprint does not match its model");
  std::vector<ParamVector> endpoints;
  for (const auto& f : m.at("endpoints")) endpoints.push_back(load_params((fs::path(dir) / f.get<std::string>()).string()));
  for (const auto& e : endpoints) {
    if (e.fingerprint() != spec.fingerprint()) throw DataError("endpoint checkpoint fingerprint does not match subspace model");
  }
  std::vector<EpochLog> logs;
  if (m.contains("epoch_log")) logs = epoch_logs_from_table(CsvTable::load((fs::path(dir) / m.at("epoch_log").get<std::string>()).string()));
  return Subspace(spec, std::move(endpoints), m.at("beta").get<double>(), m.at("init_seed").get<std::uint64_t>(),
                  m.value("provenance", std::vector<std::string>{}), std::move(logs));
}

}  // namespace cps
