#include "vidsum/train.hpp"

#include <algorithm>
#include <cmath>

#include "vidsum/errors.hpp"
#include "vidsum/losses.hpp"

namespace vidsum {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  Rng r(seed ^ salt);
  return r.next_u64();
}

void PretrainConfig::validate() const {
  if (batch_size == 0) throw config_error("pretrain config: batch_size must be positive");
  if (epochs == 0) throw config_error("pretrain config: epochs must be positive");
  if (warmup_epochs >= epochs)
    throw config_error("pretrain config: warmup_epochs must be < epochs");
  if (lr_max <= 0.0) throw config_error("pretrain config: lr_max must be positive");
  if (temperature <= 0.0) throw config_error("pretrain config: temperature must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
    throw config_error("pretrain config: betas must lie in (0, 1)");
}

void FinetuneConfig::validate() const {
  if (batch_size == 0) throw config_error("finetune config: batch_size must be positive");
  if (epochs == 0) throw config_error("finetune config: epochs must be positive");
  if (lr <= 0.0) throw config_error("finetune config: lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
    throw config_error("finetune config: betas must lie in (0, 1)");
}

namespace {

void shuffle_indices(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(i + 1)]);
}

EpochRecord finish_epoch(std::size_t epoch, double loss_total, std::size_t n_videos,
                         const std::vector<double>& scores) {
  EpochRecord rec;
  rec.epoch = epoch;
  rec.mean_loss = loss_total / static_cast<double>(n_videos);
  rec.n_scores = scores.size();
  if (!scores.empty()) {
    rec.score_min = rec.score_max = scores[0];
    for (double s : scores) {
      rec.score_min = std::min(rec.score_min, s);
      rec.score_max = std::max(rec.score_max, s);
    }
    for (double s : scores) {
      std::size_t bin = 19;
      if (rec.score_max > 0.0)
        bin = std::min<std::size_t>(
            19, static_cast<std::size_t>(std::floor(s / rec.score_max * 20.0)));
      rec.histogram[bin] += 1;
    }
  }
  return rec;
}

}  // namespace

std::vector<EpochRecord> pretrain(StudentModel& model, const Dataset& data,
                                  const PretrainConfig& cfg, TrainState& state,
                                  std::size_t max_epochs_this_call) {
  cfg.validate();
  if (model.config().score_mode != ScoreMode::Softmax)
    model.set_score_mode(ScoreMode::Softmax);
  if (data.videos.empty()) throw data_error("pretrain: dataset is empty");
  for (const auto& v : data.videos)
    if (!v.teacher_repr)
      throw data_error("pretrain: video '" + v.id + "' has no teacher representation");

  const auto params = model.trainable_parameters(/*include_projection_head=*/true);
  if (!state.initialized) {
    state.adam = AdamState::init_like(params);
    state.rng_state = mix_seed(cfg.seed, kTrainSalt);
    state.initialized = true;
  }
  Rng rng(0);
  rng.set_state(state.rng_state);

  const std::size_t n_videos = data.videos.size();
  const std::size_t steps_per_epoch = (n_videos + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * steps_per_epoch;
  const std::size_t warmup_steps = cfg.warmup_epochs * steps_per_epoch;

  std::size_t last_epoch = cfg.epochs;
  if (max_epochs_this_call > 0)
    last_epoch = std::min(last_epoch, state.epochs_done + max_epochs_this_call);

  std::vector<EpochRecord> records;
  std::vector<std::size_t> order(n_videos);
  for (std::size_t i = 0; i < n_videos; ++i) order[i] = i;

  for (std::size_t epoch = state.epochs_done; epoch < last_epoch; ++epoch) {
    shuffle_indices(order, rng);
    double loss_total = 0.0;
    std::vector<double> epoch_scores;
    epoch_scores.reserve(n_videos * data.videos[0].n_frames);

    for (std::size_t start = 0; start < n_videos; start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, n_videos);
      model.zero_grad();
      Tensor batch_loss;
      for (std::size_t b = start; b < stop; ++b) {
        const VideoSample& video = data.videos[order[b]];
        StudentOutput out = model.forward(video.frame_features, /*training=*/true, rng);
        Tensor loss = cfg.loss_kind == LossKind::CrossEntropy
                          ? distillation_loss(out.projected, *video.teacher_repr,
                                              cfg.temperature)
                          : mse_loss(out.projected, *video.teacher_repr);
        loss_total += loss.value();
        for (double s : out.scores.data()) epoch_scores.push_back(s);
        batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(stop - start));
      backward(batch_loss);
      const double lr = lr_at(state.global_step, total_steps, warmup_steps, cfg.lr_max);
      adam_step(params, state.adam, lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
      state.global_step += 1;
    }

    records.push_back(finish_epoch(epoch + 1, loss_total, n_videos, epoch_scores));
    state.epochs_done = epoch + 1;
  }

  state.rng_state = rng.state();
  return records;
}

std::vector<EpochRecord> finetune(StudentModel& model, const Dataset& data,
                                  const std::vector<std::string>& train_ids,
                                  const FinetuneConfig& cfg, TrainState& state) {
  cfg.validate();
  if (train_ids.empty()) throw data_error("finetune: no training videos");
  model.set_score_mode(ScoreMode::Sigmoid);

  std::vector<const VideoSample*> videos;
  for (const auto& id : train_ids) {
    const VideoSample* v = data.find(id);
    if (!v) throw data_error("finetune: unknown video id '" + id + "'");
    if (!v->gt_scores)
      throw data_error("finetune: video '" + id + "' has no ground-truth scores");
    videos.push_back(v);
  }

  const auto params = model.trainable_parameters(/*include_projection_head=*/false);
  if (!state.initialized) {
    state.adam = AdamState::init_like(params);
    state.rng_state = mix_seed(cfg.seed, kTrainSalt);
    state.initialized = true;
  }
  Rng rng(0);
  rng.set_state(state.rng_state);

  const std::size_t n_videos = videos.size();
  std::vector<std::size_t> order(n_videos);
  for (std::size_t i = 0; i < n_videos; ++i) order[i] = i;

  std::vector<EpochRecord> records;
  for (std::size_t epoch = state.epochs_done; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double loss_total = 0.0;
    std::vector<double> epoch_scores;

    for (std::size_t start = 0; start < n_videos; start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, n_videos);
      model.zero_grad();
      Tensor batch_loss;
      for (std::size_t b = start; b < stop; ++b) {
        const VideoSample& video = *videos[order[b]];
        StudentOutput out = model.forward(video.frame_features, /*training=*/true, rng);
        Tensor target = Tensor::from_data({video.n_frames}, *video.gt_scores);
        Tensor loss = mse_loss(out.scores, target);
        loss_total += loss.value();
        for (double s : out.scores.data()) epoch_scores.push_back(s);
        batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(stop - start));
      backward(batch_loss);
      adam_step(params, state.adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps,
                cfg.weight_decay);
      state.global_step += 1;
    }

    records.push_back(finish_epoch(epoch + 1, loss_total, n_videos, epoch_scores));
    state.epochs_done = epoch + 1;
  }

  state.rng_state = rng.state();
  return records;
}

}  // namespace vidsum
