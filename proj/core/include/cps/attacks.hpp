#pragma once

#include <span>

#include "cps/model.hpp"

namespace cps {

/// L-infinity PGD settings. The effective budget is scale * epsilon, measured in
/// normalized pixel units against an upper limit of 1.0.
struct AttackConfig {
  double epsilon = 1.0;
  double scale = 0.4;
  std::size_t steps = 10;
  double step_size = 0.0;  // 0 selects effective_epsilon() / 4

  double effective_epsilon() const noexcept { return scale * epsilon; }
  double effective_step() const noexcept { return step_size > 0.0 ? step_size : effective_epsilon() / 4.0; }
  void validate() const;
};

/// White-box PGD ascent on cross-entropy without random start. The result
/// satisfies |out - in|_inf <= effective_epsilon() exactly (in float) and lies in [0, 1].
Tensor<float> pgd_attack(const ModelSpec& spec, const ParamVector& params, const Tensor<float>& batch,
                         std::span<const int> labels, const AttackConfig& cfg);

}  // namespace cps
