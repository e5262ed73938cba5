#include "vidsum/config_json.hpp"

#include "vidsum/errors.hpp"

namespace vidsum {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Gelu: return "gelu";
    default: return "gelu_exact";
  }
}

std::string to_string(ScoreMode m) { return m == ScoreMode::Softmax ? "softmax" : "sigmoid"; }

std::string to_string(InitScheme s) { return s == InitScheme::Rezero ? "rezero" : "glorot"; }

InitScheme init_scheme_from_string(const std::string& s) {
  if (s == "rezero") return InitScheme::Rezero;
  if (s == "glorot") return InitScheme::Glorot;
  throw config_error("unknown init scheme '" + s + "'");
}

std::string to_string(LossKind k) { return k == LossKind::CrossEntropy ? "cross_entropy" : "mse"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "gelu") return Activation::Gelu;
  if (s == "gelu_exact") return Activation::GeluExact;
  throw config_error("unknown activation '" + s + "'");
}

ScoreMode score_mode_from_string(const std::string& s) {
  if (s == "softmax") return ScoreMode::Softmax;
  if (s == "sigmoid") return ScoreMode::Sigmoid;
  throw config_error("unknown score mode '" + s + "'");
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "cross_entropy" || s == "ce") return LossKind::CrossEntropy;
  if (s == "mse") return LossKind::Mse;
  throw config_error("unknown loss kind '" + s + "'");
}

namespace {

template <typename T>
void read_if(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ordered_json to_json(const ModelConfig& cfg) {
  ordered_json j;
  j["input_dim"] = cfg.input_dim;
  j["d_model"] = cfg.d_model;
  j["n_layers_total"] = cfg.n_layers_total;
  j["n_layers_first"] = cfg.n_layers_first;
  j["n_heads"] = cfg.n_heads;
  j["d_head"] = cfg.d_head;
  j["d_ff"] = cfg.d_ff;
  j["pe_dim"] = cfg.pe_dim;
  j["dropout_p"] = cfg.dropout_p;
  j["activation"] = to_string(cfg.act);
  j["teacher_dim"] = cfg.teacher_dim;
  j["score_mode"] = to_string(cfg.score_mode);
  j["ln_eps"] = cfg.ln_eps;
  j["init"] = to_string(cfg.init);
  return j;
}

ModelConfig model_config_from_json(const ordered_json& j) {
  ModelConfig cfg;
  read_if(j, "input_dim", cfg.input_dim);
  read_if(j, "d_model", cfg.d_model);
  read_if(j, "n_layers_total", cfg.n_layers_total);
  read_if(j, "n_layers_first", cfg.n_layers_first);
  read_if(j, "n_heads", cfg.n_heads);
  read_if(j, "d_head", cfg.d_head);
  read_if(j, "d_ff", cfg.d_ff);
  read_if(j, "pe_dim", cfg.pe_dim);
  read_if(j, "dropout_p", cfg.dropout_p);
  if (j.contains("activation")) cfg.act = activation_from_string(j.at("activation"));
  read_if(j, "teacher_dim", cfg.teacher_dim);
  if (j.contains("score_mode")) cfg.score_mode = score_mode_from_string(j.at("score_mode"));
  read_if(j, "ln_eps", cfg.ln_eps);
  if (j.contains("init")) cfg.init = init_scheme_from_string(j.at("init"));
  return cfg;
}

ordered_json to_json(const PretrainConfig& cfg) {
  ordered_json j;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["warmup_epochs"] = cfg.warmup_epochs;
  j["lr_max"] = cfg.lr_max;
  j["loss_kind"] = to_string(cfg.loss_kind);
  j["temperature"] = cfg.temperature;
  j["seed"] = cfg.seed;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["weight_decay"] = cfg.weight_decay;
  return j;
}

PretrainConfig pretrain_config_from_json(const ordered_json& j) {
  PretrainConfig cfg;
  read_if(j, "batch_size", cfg.batch_size);
  read_if(j, "epochs", cfg.epochs);
  read_if(j, "warmup_epochs", cfg.warmup_epochs);
  read_if(j, "lr_max", cfg.lr_max);
  if (j.contains("loss_kind")) cfg.loss_kind = loss_kind_from_string(j.at("loss_kind"));
  read_if(j, "temperature", cfg.temperature);
  read_if(j, "seed", cfg.seed);
  read_if(j, "beta1", cfg.beta1);
  read_if(j, "beta2", cfg.beta2);
  read_if(j, "adam_eps", cfg.adam_eps);
  read_if(j, "weight_decay", cfg.weight_decay);
  return cfg;
}

ordered_json to_json(const FinetuneConfig& cfg) {
  ordered_json j;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["lr"] = cfg.lr;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["weight_decay"] = cfg.weight_decay;
  j["adam_eps"] = cfg.adam_eps;
  j["seed"] = cfg.seed;
  return j;
}

FinetuneConfig finetune_config_from_json(const ordered_json& j) {
  FinetuneConfig cfg;
  read_if(j, "batch_size", cfg.batch_size);
  read_if(j, "epochs", cfg.epochs);
  read_if(j, "lr", cfg.lr);
  read_if(j, "beta1", cfg.beta1);
  read_if(j, "beta2", cfg.beta2);
  read_if(j, "weight_decay", cfg.weight_decay);
  read_if(j, "adam_eps", cfg.adam_eps);
  read_if(j, "seed", cfg.seed);
  return cfg;
}

ordered_json to_json(const SynthConfig& cfg) {
  ordered_json j;
  j["n_videos"] = cfg.n_videos;
  j["n_frames"] = cfg.n_frames;
  j["input_dim"] = cfg.input_dim;
  j["teacher_dim"] = cfg.teacher_dim;
  j["sparsity"] = cfg.sparsity;
  j["noise_scale"] = cfg.noise_scale;
  j["seed"] = cfg.seed;
  return j;
}

SynthConfig synth_config_from_json(const ordered_json& j) {
  SynthConfig cfg;
  read_if(j, "n_videos", cfg.n_videos);
  read_if(j, "n_frames", cfg.n_frames);
  read_if(j, "input_dim", cfg.input_dim);
  read_if(j, "teacher_dim", cfg.teacher_dim);
  read_if(j, "sparsity", cfg.sparsity);
  read_if(j, "noise_scale", cfg.noise_scale);
  read_if(j, "seed", cfg.seed);
  return cfg;
}

}  // namespace vidsum
