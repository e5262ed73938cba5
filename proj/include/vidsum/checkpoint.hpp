#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vidsum/model.hpp"
#include "vidsum/train.hpp"

namespace vidsum {

// Directory layout: manifest.json plus one float64 tensor file per parameter
// and per Adam moment, all in the binary tensor container. Round-trips are
// bit-exact, including optimizer and rng state.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string phase;  // "pretrain" | "finetune"
  nlohmann::ordered_json config;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::string> trained_params;  // names covered by the Adam state
  AdamState adam;
  std::uint64_t rng_state = 0;
  std::uint64_t global_step = 0;
  std::uint64_t epochs_done = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Snapshot the model + optimizer into a checkpoint value.
Checkpoint snapshot_checkpoint(const StudentModel& model, const std::string& phase,
                               nlohmann::ordered_json config, const TrainState& state,
                               const std::vector<std::string>& trained_params);

// Copy checkpoint parameters into a model with matching architecture.
void load_into_model(const Checkpoint& ckpt, StudentModel& model);

TrainState train_state_from(const Checkpoint& ckpt);

}  // namespace vidsum
