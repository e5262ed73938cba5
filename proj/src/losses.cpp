#include "vidsum/losses.hpp"

#include <cmath>

#include "vidsum/errors.hpp"

namespace vidsum {

Tensor distillation_loss(const Tensor& student_repr, const Tensor& teacher_repr,
                         double temperature) {
  if (student_repr.shape() != teacher_repr.shape())
    throw dimension_error("distillation_loss: student " + shape_str(student_repr.shape()) +
                          " vs teacher " + shape_str(teacher_repr.shape()));
  if (temperature <= 0.0) throw config_error("distillation_loss: temperature must be positive");

  // The teacher side is a frozen constant: detach before softening.
  const Tensor a = softmax(scale(teacher_repr.detached(), 1.0 / temperature), 0);
  const Tensor b = softmax(scale(student_repr, 1.0 / temperature), 0);
  return scale(sum(mul(a, log_clamped(b))), -1.0);
}

Decomposition entropy_kl_decompose(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw dimension_error("entropy_kl_decompose: lengths " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0 || b[i] < 0.0)
      throw contract_error("entropy_kl_decompose: negative probability");
    sa += a[i];
    sb += b[i];
  }
  if (std::abs(sa - 1.0) > 1e-9 || std::abs(sb - 1.0) > 1e-9)
    throw contract_error("entropy_kl_decompose: inputs must sum to 1 (got " + std::to_string(sa) +
                         ", " + std::to_string(sb) + ")");

  constexpr double kFloor = 1e-12;
  double h = 0.0, ce = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > 0.0) {
      h -= a[i] * std::log(a[i]);  // 0 log 0 := 0
      ce -= a[i] * std::log(std::max(b[i], kFloor));
    }
  }
  return {h, ce, ce - h};
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw dimension_error("mse_loss: pred " + shape_str(pred.shape()) + " vs target " +
                          shape_str(target.shape()));
  const Tensor diff = sub(pred, target.detached());
  return mean(mul(diff, diff));
}

}  // namespace vidsum
