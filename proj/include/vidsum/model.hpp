#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vidsum/tensor.hpp"

namespace vidsum {

enum class ScoreMode { Softmax, Sigmoid };

// Rezero starts every residual branch at zero (output projections wo and w2
// zero-initialized) so a fresh network is the identity over the projected
// frames; Glorot activates the branches immediately.
enum class InitScheme { Rezero, Glorot };

struct ModelConfig {
  std::size_t input_dim = 1024;   // frame feature width
  std::size_t d_model = 256;
  std::size_t n_layers_total = 6;
  std::size_t n_layers_first = 3;  // first stage; second stage gets the rest
  std::size_t n_heads = 4;
  std::size_t d_head = 64;
  std::size_t d_ff = 1024;
  std::size_t pe_dim = 64;
  double dropout_p = 0.2;
  Activation act = Activation::Relu;
  std::size_t teacher_dim = 512;
  ScoreMode score_mode = ScoreMode::Softmax;
  double ln_eps = 1e-5;
  InitScheme init = InitScheme::Rezero;

  void validate() const;  // throws config_error
  std::size_t n_layers_second() const { return n_layers_total - n_layers_first; }
};

struct StudentOutput {
  Tensor frame_features;  // [n x d_model], first-stage output
  Tensor scores;          // [n]
  Tensor representation;  // [d_model], score-weighted sum of frame_features
  Tensor projected;       // [teacher_dim]; only defined in softmax (pretrain) mode
};

// Sinusoidal encoding; column pair (2i, 2i+1) = (sin(pos/10000^{2i/pe_dim}), cos(...)).
Tensor positional_encoding(std::size_t n, std::size_t pe_dim);

// softmax(Q K^T / sqrt(d_head)) V with Q = X Wq, K = X Wk, V = X Wv.
Tensor self_attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv);

// phi = sum_i w_i x_i.
Tensor aggregate_representation(const Tensor& x, const Tensor& weights);

struct EncoderLayer {
  struct Head {
    Tensor wq, wk, wv;  // [d_model x d_head]
  };
  std::vector<Head> heads;
  Tensor wo;  // [(n_heads*d_head) x d_model]
  Tensor ln1_gamma, ln1_beta;
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1, w2, b2;  // position-wise FFN
};

// Two serial encoder stacks over projected frame features; the first stack's
// output carries the frame representations, the second stack feeds the score
// head. Scores weight the first-stage features into a video representation.
class StudentModel {
 public:
  StudentModel(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  void set_score_mode(ScoreMode mode) { cfg_.score_mode = mode; }

  StudentOutput forward(const Tensor& frames, bool training, Rng& rng) const;

  // Multi-head attention and FFN sublayers exposed for direct checks.
  Tensor multi_head_attention(const Tensor& x, const EncoderLayer& layer) const;
  Tensor ffn(const Tensor& x, const EncoderLayer& layer) const;

  const std::vector<EncoderLayer>& first_stage() const { return first_; }
  const std::vector<EncoderLayer>& second_stage() const { return second_; }
  const Tensor& input_projection() const { return input_proj_; }
  const Tensor& score_head() const { return score_head_; }
  const Tensor& projection_head() const { return projection_head_; }

  // Stable name -> parameter pairs; iteration order is the update order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  // Parameters touched by the optimizer; the projection head participates
  // only in softmax (pretrain) mode.
  std::vector<Tensor> trainable_parameters(bool include_projection_head) const;
  void zero_grad() const;
  std::size_t parameter_count() const;

  // Test hook: replace positional encoding with zeros.
  void set_zero_positional_encoding(bool flag) { zero_pe_ = flag; }

 private:
  Tensor encoder_layer_forward(const Tensor& x, const EncoderLayer& layer) const;

  ModelConfig cfg_;
  Tensor input_proj_;       // [(input_dim + pe_dim) x d_model]
  std::vector<EncoderLayer> first_, second_;
  Tensor score_head_;       // [d_model]
  Tensor projection_head_;  // [d_model x teacher_dim]
  bool zero_pe_ = false;
};

}  // namespace vidsum
