#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vidsum/rng.hpp"

namespace vidsum {

class Tensor;

// One node of the autodiff DAG. Children hold shared_ptrs to parents only,
// so a graph is released as soon as the last handle to its output dies.
struct TensorNode {
  std::vector<std::size_t> shape;  // empty = scalar
  std::vector<double> data;        // row-major
  std::vector<double> grad;        // empty until backward touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Maps the output gradient to one gradient piece per parent (empty piece =
  // that parent needs nothing).
  std::function<std::vector<std::vector<double>>(TensorNode&, const std::vector<double>&)>
      backward_fn;

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

// Cheap shared handle over a TensorNode. Values are 64-bit floats; a tensor
// with no recorded producer is a leaf (parameter or constant).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(std::vector<std::size_t> shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);
  static Tensor normal(std::vector<std::size_t> shape, double mean, double stddev, Rng& rng,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;
  // 2-D accessors; throw on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  const std::vector<double>& data() const;
  std::vector<double>& data();
  double value() const;  // single-element tensors only
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool rg);
  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws if absent
  void zero_grad();

  // Copy of the value with no graph attachment.
  Tensor detached() const;

  std::shared_ptr<TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

enum class Activation { Relu, Gelu, GeluExact };

std::string shape_str(const std::vector<std::size_t>& shape);

// --- differentiable primitives -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// x[n x d] + bias[d], broadcast over rows.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<std::size_t> new_shape);
// [n x c1] ++ [n x c2] -> [n x (c1+c2)]
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor sigmoid(const Tensor& x);
Tensor activation(const Tensor& x, Activation kind);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Inverted dropout: survivors scaled by 1/(1-p) in training, identity in eval.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// log(max(x, floor)); zero gradient where the floor clamps.
Tensor log_clamped(const Tensor& x, double floor = 1e-12);

// Reverse-mode accumulation from a single-element loss. Repeated calls
// without zero_grad accumulate into existing gradients.
void backward(const Tensor& loss);

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h, evaluated per element.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h = 1e-5);

double gelu_scalar(double x, bool exact);

}  // namespace vidsum
