#pragma once

#include <cstdint>
#include <vector>

#include "vidsum/tensor.hpp"

namespace vidsum {

struct AdamState {
  std::vector<std::vector<double>> m;  // first moments, one entry per parameter
  std::vector<std::vector<double>> v;  // second moments
  std::uint64_t t = 0;

  static AdamState init_like(const std::vector<Tensor>& params);
};

// Bias-corrected Adam with decoupled weight decay (decay applied directly to
// the weights, not folded into the gradient). Every parameter must carry a
// populated gradient; t advances once per call.
void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0);

// Linear warmup to lr_max, then cosine decay to zero over the remaining steps.
double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double lr_max);

}  // namespace vidsum
