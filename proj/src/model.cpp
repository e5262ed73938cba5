#include "vidsum/model.hpp"

#include <cmath>

#include "vidsum/errors.hpp"

namespace vidsum {

void ModelConfig::validate() const {
  if (input_dim == 0 || d_model == 0 || n_heads == 0 || d_head == 0 || d_ff == 0 ||
      teacher_dim == 0 || n_layers_total == 0)
    throw config_error("model config: all dimensions must be positive");
  if (d_model != n_heads * d_head)
    throw config_error("model config: d_model (" + std::to_string(d_model) +
                       ") != n_heads * d_head (" + std::to_string(n_heads * d_head) + ")");
  if (pe_dim % 2 != 0) throw config_error("model config: pe_dim must be even");
  if (n_layers_first == 0 || n_layers_first >= n_layers_total)
    throw config_error("model config: layer split must leave both stages non-empty");
  if (dropout_p < 0.0 || dropout_p >= 1.0)
    throw config_error("model config: dropout_p must lie in [0, 1)");
  if (ln_eps <= 0.0) throw config_error("model config: ln_eps must be positive");
}

Tensor positional_encoding(std::size_t n, std::size_t pe_dim) {
  if (pe_dim % 2 != 0) throw config_error("positional_encoding: pe_dim must be even");
  std::vector<double> out(n * pe_dim);
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t i = 0; 2 * i < pe_dim; ++i) {
      const double rate = std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                                static_cast<double>(pe_dim));
      const double angle = static_cast<double>(pos) / rate;
      out[pos * pe_dim + 2 * i] = std::sin(angle);
      out[pos * pe_dim + 2 * i + 1] = std::cos(angle);
    }
  return Tensor::from_data({n, pe_dim}, std::move(out));
}

Tensor self_attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv) {
  if (x.rank() != 2 || x.rows() == 0)
    throw dimension_error("self_attention: input must be a non-empty [n x d] matrix, got " +
                          shape_str(x.shape()));
  const Tensor q = matmul(x, wq);
  const Tensor k = matmul(x, wk);
  const Tensor v = matmul(x, wv);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  const Tensor scores = scale(matmul(q, transpose(k)), inv_scale);
  return matmul(softmax(scores, 1), v);
}

Tensor aggregate_representation(const Tensor& x, const Tensor& weights) {
  if (x.rank() != 2 || weights.rank() != 1 || weights.dim(0) != x.rows())
    throw dimension_error("aggregate_representation: weights " + shape_str(weights.shape()) +
                          " do not match features " + shape_str(x.shape()));
  const Tensor row = matmul(reshape(weights, {1, weights.dim(0)}), x);
  return reshape(row, {x.cols()});
}

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::vector<std::size_t> shape, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::uniform(std::move(shape), -limit, limit, rng);
  t.set_requires_grad(true);
  return t;
}

Tensor const_param(std::size_t n, double value) {
  Tensor t = Tensor::full({n}, value);
  t.set_requires_grad(true);
  return t;
}

EncoderLayer init_layer(const ModelConfig& cfg, Rng& rng) {
  // With Rezero init the residual output projections start at zero, so a
  // fresh layer is the identity map; the branches wake up through their
  // gradients. The rng consumption is identical under both schemes.
  const bool rezero = cfg.init == InitScheme::Rezero;
  auto branch_out = [&](std::size_t fan_in, std::size_t fan_out) {
    Tensor t = glorot(fan_in, fan_out, {fan_in, fan_out}, rng);
    if (rezero)
      for (auto& v : t.data()) v = 0.0;
    return t;
  };

  EncoderLayer layer;
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    EncoderLayer::Head head;
    head.wq = glorot(cfg.d_model, cfg.d_head, {cfg.d_model, cfg.d_head}, rng);
    head.wk = glorot(cfg.d_model, cfg.d_head, {cfg.d_model, cfg.d_head}, rng);
    head.wv = glorot(cfg.d_model, cfg.d_head, {cfg.d_model, cfg.d_head}, rng);
    layer.heads.push_back(std::move(head));
  }
  const std::size_t concat = cfg.n_heads * cfg.d_head;
  layer.wo = branch_out(concat, cfg.d_model);
  layer.ln1_gamma = const_param(cfg.d_model, 1.0);
  layer.ln1_beta = const_param(cfg.d_model, 0.0);
  layer.ln2_gamma = const_param(cfg.d_model, 1.0);
  layer.ln2_beta = const_param(cfg.d_model, 0.0);
  layer.w1 = glorot(cfg.d_model, cfg.d_ff, {cfg.d_model, cfg.d_ff}, rng);
  layer.b1 = const_param(cfg.d_ff, 0.0);
  layer.w2 = branch_out(cfg.d_ff, cfg.d_model);
  layer.b2 = const_param(cfg.d_model, 0.0);
  return layer;
}

}  // namespace

StudentModel::StudentModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const std::size_t in_width = cfg_.input_dim + cfg_.pe_dim;
  input_proj_ = glorot(in_width, cfg_.d_model, {in_width, cfg_.d_model}, rng);
  for (std::size_t i = 0; i < cfg_.n_layers_first; ++i) first_.push_back(init_layer(cfg_, rng));
  for (std::size_t i = 0; i < cfg_.n_layers_second(); ++i)
    second_.push_back(init_layer(cfg_, rng));
  score_head_ = glorot(cfg_.d_model, 1, {cfg_.d_model}, rng);
  projection_head_ = glorot(cfg_.d_model, cfg_.teacher_dim, {cfg_.d_model, cfg_.teacher_dim}, rng);
}

Tensor StudentModel::multi_head_attention(const Tensor& x, const EncoderLayer& layer) const {
  Tensor heads;
  for (const auto& head : layer.heads) {
    Tensor out = self_attention(x, head.wq, head.wk, head.wv);
    heads = heads.defined() ? concat_cols(heads, out) : out;
  }
  return matmul(heads, layer.wo);
}

Tensor StudentModel::ffn(const Tensor& x, const EncoderLayer& layer) const {
  const Tensor hidden = activation(add_rowwise(matmul(x, layer.w1), layer.b1), cfg_.act);
  return add_rowwise(matmul(hidden, layer.w2), layer.b2);
}

Tensor StudentModel::encoder_layer_forward(const Tensor& x, const EncoderLayer& layer) const {
  // Pre-norm residual: x + MHA(LN(x)), then x + FFN(LN(x)).
  Tensor h = add(x, multi_head_attention(layer_norm(x, layer.ln1_gamma, layer.ln1_beta,
                                                    cfg_.ln_eps),
                                         layer));
  return add(h, ffn(layer_norm(h, layer.ln2_gamma, layer.ln2_beta, cfg_.ln_eps), layer));
}

StudentOutput StudentModel::forward(const Tensor& frames, bool training, Rng& rng) const {
  if (frames.rank() != 2 || frames.rows() == 0)
    throw dimension_error("forward: frames must be a non-empty [n x input_dim] matrix, got " +
                          shape_str(frames.shape()));
  if (frames.cols() != cfg_.input_dim)
    throw dimension_error("forward: feature width " + std::to_string(frames.cols()) +
                          " != input_dim " + std::to_string(cfg_.input_dim));
  const std::size_t n = frames.rows();

  Tensor pe = zero_pe_ ? Tensor::zeros({n, cfg_.pe_dim}) : positional_encoding(n, cfg_.pe_dim);
  Tensor h = matmul(concat_cols(frames, pe), input_proj_);
  h = dropout(h, cfg_.dropout_p, training, rng);

  for (const auto& layer : first_) h = encoder_layer_forward(h, layer);
  const Tensor stage_one = h;

  for (const auto& layer : second_) h = encoder_layer_forward(h, layer);

  const Tensor raw = reshape(matmul(h, reshape(score_head_, {cfg_.d_model, 1})), {n});
  const Tensor scores =
      cfg_.score_mode == ScoreMode::Softmax ? softmax(raw, 0) : sigmoid(raw);

  StudentOutput out;
  out.frame_features = stage_one;
  out.scores = scores;
  out.representation = aggregate_representation(stage_one, scores);
  if (cfg_.score_mode == ScoreMode::Softmax) {
    out.projected = reshape(
        matmul(reshape(out.representation, {1, cfg_.d_model}), projection_head_),
        {cfg_.teacher_dim});
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> StudentModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("input_proj", input_proj_);
  auto add_stage = [&out](const std::vector<EncoderLayer>& stage, const std::string& prefix) {
    for (std::size_t l = 0; l < stage.size(); ++l) {
      const auto& layer = stage[l];
      const std::string base = prefix + ".l" + std::to_string(l);
      for (std::size_t h = 0; h < layer.heads.size(); ++h) {
        const std::string hb = base + ".head" + std::to_string(h);
        out.emplace_back(hb + ".wq", layer.heads[h].wq);
        out.emplace_back(hb + ".wk", layer.heads[h].wk);
        out.emplace_back(hb + ".wv", layer.heads[h].wv);
      }
      out.emplace_back(base + ".wo", layer.wo);
      out.emplace_back(base + ".ln1.gamma", layer.ln1_gamma);
      out.emplace_back(base + ".ln1.beta", layer.ln1_beta);
      out.emplace_back(base + ".ln2.gamma", layer.ln2_gamma);
      out.emplace_back(base + ".ln2.beta", layer.ln2_beta);
      out.emplace_back(base + ".ffn.w1", layer.w1);
      out.emplace_back(base + ".ffn.b1", layer.b1);
      out.emplace_back(base + ".ffn.w2", layer.w2);
      out.emplace_back(base + ".ffn.b2", layer.b2);
    }
  };
  add_stage(first_, "enc1");
  add_stage(second_, "enc2");
  out.emplace_back("score_head", score_head_);
  out.emplace_back("projection_head", projection_head_);
  return out;
}

std::vector<Tensor> StudentModel::trainable_parameters(bool include_projection_head) const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) {
    if (!include_projection_head && name == "projection_head") continue;
    out.push_back(t);
  }
  return out;
}

void StudentModel::zero_grad() const {
  for (auto& [name, t] : named_parameters()) Tensor(t).zero_grad();
}

std::size_t StudentModel::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

}  // namespace vidsum
