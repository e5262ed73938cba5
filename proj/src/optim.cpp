#include "vidsum/optim.hpp"

#include <cmath>

#include "vidsum/errors.hpp"

namespace vidsum {

AdamState AdamState::init_like(const std::vector<Tensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps, double weight_decay) {
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
    throw config_error("adam_step: betas must lie in (0, 1)");
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw contract_error("adam_step: state does not match parameter list");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    if (!p.has_grad())
      throw contract_error("adam_step: parameter " + std::to_string(pi) + " has no gradient");
    const auto& g = p.grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    auto& w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * w[i]);
    }
  }
}

double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double lr_max) {
  if (step >= total_steps)
    throw contract_error("lr_at: step " + std::to_string(step) + " >= total_steps " +
                         std::to_string(total_steps));
  if (warmup_steps >= total_steps)
    throw contract_error("lr_at: warmup_steps must be < total_steps");
  if (step < warmup_steps)
    return lr_max * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return 0.5 * lr_max * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace vidsum
