#pragma once

#include <span>

#include "vidsum/tensor.hpp"

namespace vidsum {

// Cross-entropy between the softened teacher and student distributions:
// a = softmax(teacher / tau), b = softmax(student / tau), loss = -sum a_i log b_i.
// Differentiable with respect to the student side only.
Tensor distillation_loss(const Tensor& student_repr, const Tensor& teacher_repr,
                         double temperature = 1.0);

struct Decomposition {
  double entropy;        // H(a)
  double cross_entropy;  // CE(a, b)
  double kl;             // CE - H
};

// Both inputs must be distributions (non-negative, sum to 1 within 1e-9).
Decomposition entropy_kl_decompose(std::span<const double> a, std::span<const double> b);

// Mean over elements of the squared difference.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace vidsum
