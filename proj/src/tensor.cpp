#include "vidsum/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "vidsum/errors.hpp"

namespace vidsum {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::shared_ptr<TensorNode> make_node(std::vector<std::size_t> shape, std::vector<double> data) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

// Per-parent grad pieces; an empty piece means "parent needs nothing".
using Pieces = std::vector<std::vector<double>>;

bool wants_grad(const TensorNode& n) { return n.requires_grad || n.backward_fn; }

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// --- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  auto node = make_node(std::move(shape), std::vector<double>(n, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> values,
                         bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw dimension_error("from_data: " + std::to_string(values.size()) +
                          " values do not fill shape " + shape_str(shape));
  auto node = make_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

Tensor Tensor::uniform(std::vector<std::size_t> shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  std::size_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return from_data(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::normal(std::vector<std::size_t> shape, double mean, double stddev, Rng& rng,
                      bool requires_grad) {
  std::size_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (auto& x : v) x = mean + stddev * rng.normal();
  return from_data(std::move(shape), std::move(v), requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size())
    throw dimension_error("dim: axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(node_->shape));
  return node_->shape[axis];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw dimension_error("rows: tensor is not 2-D: " + shape_str(shape()));
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw dimension_error("cols: tensor is not 2-D: " + shape_str(shape()));
  return node_->shape[1];
}

const std::vector<double>& Tensor::data() const { return node_->data; }
std::vector<double>& Tensor::data() { return node_->data; }

double Tensor::value() const {
  if (numel() != 1)
    throw contract_error("value: tensor has " + std::to_string(numel()) + " elements");
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return node_->data[row * cols() + col];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool rg) { node_->requires_grad = rg; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) throw contract_error("grad: no gradient present; run backward first");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detached() const {
  auto node = make_node(node_->shape, node_->data);
  return Tensor(std::move(node));
}

// --- op plumbing -----------------------------------------------------------

namespace {

using BackwardFn = std::function<Pieces(TensorNode&, const std::vector<double>&)>;

Tensor make_op(std::vector<std::size_t> shape, std::vector<double> data,
               std::vector<Tensor> inputs, BackwardFn fn) {
  auto node = make_node(std::move(shape), std::move(data));
  bool any = false;
  for (const auto& t : inputs) any = any || wants_grad(*t.node());
  if (any) {
    node->requires_grad = true;
    for (auto& t : inputs) node->parents.push_back(t.node());
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

}  // namespace

// --- primitives ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw dimension_error("matmul: expected 2-D operands, got " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
  if (a.cols() != b.rows())
    throw dimension_error("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av_ip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av_ip * bv[p * n + j];
    }

  return make_op({m, n}, std::move(out), {a, b},
                 [m, k, n](TensorNode& self, const std::vector<double>& g) -> Pieces {
                   auto& pa = *self.parents[0];
                   auto& pb = *self.parents[1];
                   Pieces pieces(2);
                   if (wants_grad(pa)) {  // dA = g . B^T
                     pieces[0].assign(m * k, 0.0);
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) {
                         const double gij = g[i * n + j];
                         for (std::size_t p = 0; p < k; ++p)
                           pieces[0][i * k + p] += gij * pb.data[p * n + j];
                       }
                   }
                   if (wants_grad(pb)) {  // dB = A^T . g
                     pieces[1].assign(k * n, 0.0);
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         const double a_ip = pa.data[i * k + p];
                         for (std::size_t j = 0; j < n; ++j)
                           pieces[1][p * n + j] += a_ip * g[i * n + j];
                       }
                   }
                   return pieces;
                 });
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw dimension_error(std::string(op) + ": shape mismatch: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](TensorNode& self, const std::vector<double>& g) -> Pieces {
                   Pieces p(2);
                   if (wants_grad(*self.parents[0])) p[0] = g;
                   if (wants_grad(*self.parents[1])) p[1] = g;
                   return p;
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](TensorNode& self, const std::vector<double>& g) -> Pieces {
                   Pieces p(2);
                   if (wants_grad(*self.parents[0])) p[0] = g;
                   if (wants_grad(*self.parents[1])) {
                     p[1].resize(g.size());
                     for (std::size_t i = 0; i < g.size(); ++i) p[1][i] = -g[i];
                   }
                   return p;
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](TensorNode& self, const std::vector<double>& g) -> Pieces {
                   auto& pa = *self.parents[0];
                   auto& pb = *self.parents[1];
                   Pieces p(2);
                   if (wants_grad(pa)) {
                     p[0].resize(g.size());
                     for (std::size_t i = 0; i < g.size(); ++i) p[0][i] = g[i] * pb.data[i];
                   }
                   if (wants_grad(pb)) {
                     p[1].resize(g.size());
                     for (std::size_t i = 0; i < g.size(); ++i) p[1][i] = g[i] * pa.data[i];
                   }
                   return p;
                 });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_op(a.shape(), std::move(out), {a},
                 [s](TensorNode&, const std::vector<double>& g) -> Pieces {
                   Pieces p(1);
                   p[0].resize(g.size());
                   for (std::size_t i = 0; i < g.size(); ++i) p[0][i] = g[i] * s;
                   return p;
                 });
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.cols())
    throw dimension_error("add_rowwise: " + shape_str(x.shape()) + " + " +
                          shape_str(bias.shape()));
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.data()[i * d + j] + bias.data()[j];
  return make_op({n, d}, std::move(out), {x, bias},
                 [n, d](TensorNode& self, const std::vector<double>& g) -> Pieces {
                   Pieces p(2);
                   if (wants_grad(*self.parents[0])) p[0] = g;
                   if (wants_grad(*self.parents[1])) {
                     p[1].assign(d, 0.0);
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < d; ++j) p[1][j] += g[i * d + j];
                   }
                   return p;
                 });
}

Tensor transpose(const Tensor& a) {
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j * n + i] = a.data()[i * d + j];
  return make_op({d, n}, std::move(out), {a},
                 [n, d](TensorNode&, const std::vector<double>& g) -> Pieces {
                   Pieces p(1);
                   p[0].resize(n * d);
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t j = 0; j < d; ++j) p[0][i * d + j] = g[j * n + i];
                   return p;
                 });
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> new_shape) {
  if (shape_numel(new_shape) != a.numel())
    throw dimension_error("reshape: cannot view " + shape_str(a.shape()) + " as " +
                          shape_str(new_shape));
  return make_op(std::move(new_shape), a.data(), {a},
                 [](TensorNode&, const std::vector<double>& g) -> Pieces { return {g}; });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows())
    throw dimension_error("concat_cols: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<double> out(n * (ca + cb));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a.data()[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b.data()[i * cb + j];
  }
  return make_op({n, ca + cb}, std::move(out), {a, b},
                 [n, ca, cb](TensorNode& self, const std::vector<double>& g) -> Pieces {
                   Pieces p(2);
                   if (wants_grad(*self.parents[0])) {
                     p[0].resize(n * ca);
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < ca; ++j)
                         p[0][i * ca + j] = g[i * (ca + cb) + j];
                   }
                   if (wants_grad(*self.parents[1])) {
                     p[1].resize(n * cb);
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < cb; ++j)
                         p[1][i * cb + j] = g[i * (ca + cb) + ca + j];
                   }
                   return p;
                 });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= std::max<std::size_t>(x.rank(), 1))
    throw dimension_error("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(x.shape()));
  const auto& shape = x.shape();
  const std::size_t len = shape.empty() ? 1 : shape[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];

  std::vector<double> out(x.numel());
  const auto& v = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = v[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, v[base + j * inner]);
      double denom = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(v[base + j * inner] - mx);
        out[base + j * inner] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= denom;
    }

  return make_op(x.shape(), std::move(out), {x},
                 [outer, inner, len](TensorNode& self, const std::vector<double>& g) -> Pieces {
                   // dx = s * (g - <g, s>) per slice
                   Pieces p(1);
                   p[0].resize(g.size());
                   for (std::size_t o = 0; o < outer; ++o)
                     for (std::size_t in = 0; in < inner; ++in) {
                       const std::size_t base = o * len * inner + in;
                       double dot = 0.0;
                       for (std::size_t j = 0; j < len; ++j)
                         dot += g[base + j * inner] * self.data[base + j * inner];
                       for (std::size_t j = 0; j < len; ++j) {
                         const std::size_t idx = base + j * inner;
                         p[0][idx] = self.data[idx] * (g[idx] - dot);
                       }
                     }
                   return p;
                 });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  return make_op(x.shape(), std::move(out), {x},
                 [](TensorNode& self, const std::vector<double>& g) -> Pieces {
                   Pieces p(1);
                   p[0].resize(g.size());
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const double s = self.data[i];
                     p[0][i] = g[i] * s * (1.0 - s);
                   }
                   return p;
                 });
}

double gelu_scalar(double x, bool exact) {
  if (exact) return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
  const double c = 0.7978845608028653559;  // sqrt(2/pi)
  const double u = c * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

namespace {

double gelu_grad_scalar(double x, bool exact) {
  if (exact) {
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
    const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
    return cdf + x * pdf;
  }
  const double c = 0.7978845608028653559;
  const double u = c * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace

Tensor activation(const Tensor& x, Activation kind) {
  std::vector<double> out(x.numel());
  const auto& v = x.data();
  switch (kind) {
    case Activation::Relu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
      break;
    case Activation::Gelu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_scalar(v[i], false);
      break;
    case Activation::GeluExact:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_scalar(v[i], true);
      break;
  }
  return make_op(x.shape(), std::move(out), {x},
                 [kind](TensorNode& self, const std::vector<double>& g) -> Pieces {
                   const auto& v = self.parents[0]->data;
                   Pieces p(1);
                   p[0].resize(g.size());
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     double d;
                     switch (kind) {
                       case Activation::Relu: d = v[i] > 0.0 ? 1.0 : 0.0; break;
                       case Activation::Gelu: d = gelu_grad_scalar(v[i], false); break;
                       default: d = gelu_grad_scalar(v[i], true); break;
                     }
                     p[0][i] = g[i] * d;
                   }
                   return p;
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps <= 0.0) throw config_error("layer_norm: eps must be positive");
  if (x.rank() != 2) throw dimension_error("layer_norm: expected 2-D input, got " +
                                           shape_str(x.shape()));
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.numel() != d || beta.numel() != d)
    throw dimension_error("layer_norm: gamma/beta must have length " + std::to_string(d));

  std::vector<double> out(n * d);
  std::vector<double> inv_sigma(n);
  const auto& v = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += v[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = v[i * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = is;
    for (std::size_t j = 0; j < d; ++j)
      out[i * d + j] = (v[i * d + j] - mu) * is * gamma.data()[j] + beta.data()[j];
  }

  return make_op(
      {n, d}, std::move(out), {x, gamma, beta},
      [n, d, inv_sigma](TensorNode& self, const std::vector<double>& g) -> Pieces {
        auto& px = *self.parents[0];
        auto& pgamma = *self.parents[1];
        Pieces p(3);
        const bool need_x = wants_grad(px);
        const bool need_gamma = wants_grad(pgamma);
        const bool need_beta = wants_grad(*self.parents[2]);
        if (need_x) p[0].assign(n * d, 0.0);
        if (need_gamma) p[1].assign(d, 0.0);
        if (need_beta) p[2].assign(d, 0.0);
        std::vector<double> xhat(d);
        for (std::size_t i = 0; i < n; ++i) {
          double mu = 0.0;
          for (std::size_t j = 0; j < d; ++j) mu += px.data[i * d + j];
          mu /= static_cast<double>(d);
          const double is = inv_sigma[i];
          for (std::size_t j = 0; j < d; ++j) xhat[j] = (px.data[i * d + j] - mu) * is;
          if (need_gamma)
            for (std::size_t j = 0; j < d; ++j) p[1][j] += g[i * d + j] * xhat[j];
          if (need_beta)
            for (std::size_t j = 0; j < d; ++j) p[2][j] += g[i * d + j];
          if (need_x) {
            double sum1 = 0.0, sum2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[i * d + j] * pgamma.data[j];
              sum1 += dxh;
              sum2 += dxh * xhat[j];
            }
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[i * d + j] * pgamma.data[j];
              p[0][i * d + j] = is * (dxh - sum1 * inv_d - xhat[j] * sum2 * inv_d);
            }
          }
        }
        return p;
      });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw config_error("dropout: probability must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;  // identity, no rng draws
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  return make_op(x.shape(), std::move(out), {x},
                 [mask](TensorNode&, const std::vector<double>& g) -> Pieces {
                   Pieces p(1);
                   p[0].resize(g.size());
                   for (std::size_t i = 0; i < g.size(); ++i) p[0][i] = g[i] * mask[i];
                   return p;
                 });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op({}, {s}, {x}, [](TensorNode& self, const std::vector<double>& g) -> Pieces {
    Pieces p(1);
    p[0].assign(self.parents[0]->data.size(), g[0]);
    return p;
  });
}

Tensor mean(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t n = x.numel();
  return make_op({}, {s / static_cast<double>(n)}, {x},
                 [n](TensorNode&, const std::vector<double>& g) -> Pieces {
                   Pieces p(1);
                   p[0].assign(n, g[0] / static_cast<double>(n));
                   return p;
                 });
}

Tensor log_clamped(const Tensor& x, double floor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(x.data()[i], floor));
  return make_op(x.shape(), std::move(out), {x},
                 [floor](TensorNode& self, const std::vector<double>& g) -> Pieces {
                   const auto& v = self.parents[0]->data;
                   Pieces p(1);
                   p[0].resize(g.size());
                   for (std::size_t i = 0; i < g.size(); ++i)
                     p[0][i] = v[i] > floor ? g[i] / v[i] : 0.0;
                   return p;
                 });
}

// --- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw contract_error("backward: loss must be a single-element tensor");

  // Post-order DFS so that the reversed list visits children before parents.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Transient per-node buffers keep repeated backward calls additive: each
  // call contributes exactly one copy of its gradients to every ancestor.
  std::unordered_map<TensorNode*, std::vector<double>> pending;
  pending[loss.node().get()] = {1.0};

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    auto found = pending.find(node);
    if (found == pending.end()) continue;
    std::vector<double> g = std::move(found->second);
    pending.erase(found);
    if (node->requires_grad) {
      node->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
    }
    if (!node->backward_fn) continue;
    Pieces pieces = node->backward_fn(*node, g);
    for (std::size_t pi = 0; pi < node->parents.size(); ++pi) {
      if (pi >= pieces.size() || pieces[pi].empty()) continue;
      TensorNode* parent = node->parents[pi].get();
      auto& buf = pending[parent];
      if (buf.empty()) {
        buf = std::move(pieces[pi]);
      } else {
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += pieces[pi][i];
      }
    }
  }
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h) {
  if (h <= 0.0) throw config_error("finite_diff_grad: h must be positive");
  Tensor probe = x.detached();
  std::vector<double> g(x.numel());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = probe.data()[i];
    probe.data()[i] = v + h;
    const double fp = f(probe);
    probe.data()[i] = v - h;
    const double fm = f(probe);
    probe.data()[i] = v;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor::from_data(x.shape(), std::move(g));
}

}  // namespace vidsum
