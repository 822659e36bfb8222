#include "cps/attacks.hpp"

#include <algorithm>
#include <cmath>

namespace cps {

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("attack epsilon must lie in [0, 1]");
  if (!(scale >= 0.0 && scale <= 1.0)) throw ConfigError("attack scale must lie in [0, 1]");
  if (steps < 1) throw ConfigError("attack needs at least one step");
  if (step_size < 0.0 || (step_size > 0.0 && step_size > effective_epsilon())) throw ConfigError("attack step size exceeds epsilon");
}

namespace {

// Largest float bound b with b - x <= eps when evaluated in float.
float upper_bound(float x, float eps) {
  float hi = std::min(x + eps, 1.0f);
  while (hi - x > eps) hi = std::nextafter(hi, x);
  return hi;
}

float lower_bound(float x, float eps) {
  float lo = std::max(x - eps, 0.0f);
  while (x - lo > eps) lo = std::nextafter(lo, x);
  return lo;
}

}  // namespace

Tensor<float> pgd_attack(const ModelSpec& spec, const ParamVector& params, const Tensor<float>& batch,
                         std::span<const int> labels, const AttackConfig& cfg) {
  cfg.validate();
  params.require_spec(spec);
  for (const float v : batch.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("pgd_attack expects normalized inputs in [0, 1]");
  }
  const auto eps = static_cast<float>(cfg.effective_epsilon());
  if (eps == 0.0f) return batch;
  const auto step = static_cast<float>(cfg.effective_step());

  std::vector<float> lo(batch.size()), hi(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    lo[k] = lower_bound(batch[k], eps);
    hi[k] = upper_bound(batch[k], eps);
  }

  Tensor<float> adv = batch;
  const Tensor<float> flat({params.size()}, params.storage());
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    ad::Tape<float> tape;
    auto p = tape.constant(flat);
    auto x = tape.variable(adv);
    auto loss = ad::cross_entropy(tape, build_logits(tape, spec, p, x), labels);
    tape.backward(loss);
    const auto g = tape.grad(x);
    if (!all_finite<float>(g.data())) throw NumericError("pgd_attack: non-finite input gradient");
    for (std::size_t k = 0; k < adv.size(); ++k) {
      const float dir = g[k] > 0.0f ? 1.0f : (g[k] < 0.0f ? -1.0f : 0.0f);
      adv[k] = std::clamp(adv[k] + step * dir, lo[k], hi[k]);
    }
  }
  return adv;
}

}  // namespace cps
