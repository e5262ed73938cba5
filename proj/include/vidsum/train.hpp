#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vidsum/data.hpp"
#include "vidsum/model.hpp"
#include "vidsum/optim.hpp"

namespace vidsum {

enum class LossKind { CrossEntropy, Mse };

struct PretrainConfig {
  std::size_t batch_size = 512;
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 5;
  double lr_max = 1e-4;
  LossKind loss_kind = LossKind::CrossEntropy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

struct FinetuneConfig {
  std::size_t batch_size = 4;
  std::size_t epochs = 25;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-4;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Optimizer + stream state carried across epochs; snapshotting this alongside
// the parameters makes a resumed run bit-identical to an uninterrupted one.
struct TrainState {
  AdamState adam;
  std::uint64_t rng_state = 0;
  std::uint64_t global_step = 0;
  std::uint64_t epochs_done = 0;
  bool initialized = false;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  // Collapse diagnostics over every score emitted this epoch.
  std::size_t n_scores = 0;
  double score_min = 0.0;
  double score_max = 0.0;
  std::array<std::uint64_t, 20> histogram{};  // 20 bins over [0, score_max]
};

// Distillation pre-training over every video in the dataset. Initializes
// `state` on first use; `max_epochs_this_call` > 0 stops early (for
// checkpoint/resume), otherwise the loop runs to cfg.epochs.
std::vector<EpochRecord> pretrain(StudentModel& model, const Dataset& data,
                                  const PretrainConfig& cfg, TrainState& state,
                                  std::size_t max_epochs_this_call = 0);

// Supervised fine-tuning on the listed videos; sigmoid score mode, projection
// head frozen out of the update.
std::vector<EpochRecord> finetune(StudentModel& model, const Dataset& data,
                                  const std::vector<std::string>& train_ids,
                                  const FinetuneConfig& cfg, TrainState& state);

// Deterministic sub-streams for the components that draw randomness.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
constexpr std::uint64_t kModelInitSalt = 0x6d6f64656cULL;
constexpr std::uint64_t kTrainSalt = 0x747261696eULL;

}  // namespace vidsum
