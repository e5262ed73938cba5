#include "vidsum/checkpoint.hpp"

#include <fstream>

#include "vidsum/data.hpp"
#include "vidsum/errors.hpp"

namespace vidsum {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (char& c : out)
    if (c == '.' || c == '/') c = '_';
  return out;
}

std::string param_file(std::size_t index, const std::string& name) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%03zu_", index);
  return std::string(buf) + sanitize(name) + ".svsf";
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  fs::create_directories(dir);

  ordered_json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["phase"] = ckpt.phase;
  manifest["global_step"] = ckpt.global_step;
  manifest["epochs_done"] = ckpt.epochs_done;
  manifest["rng_state"] = ckpt.rng_state;
  manifest["config"] = ckpt.config;

  manifest["params"] = ordered_json::array();
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& [name, tensor] = ckpt.params[i];
    const std::string file = param_file(i, name);
    write_feature_file(dir / file, tensor, TensorDType::Float64);
    ordered_json pj;
    pj["name"] = name;
    pj["shape"] = tensor.shape();
    pj["file"] = file;
    manifest["params"].push_back(std::move(pj));
  }

  manifest["adam"] = ordered_json::object();
  manifest["adam"]["t"] = ckpt.adam.t;
  manifest["adam"]["trained_params"] = ckpt.trained_params;
  ordered_json moments = ordered_json::array();
  if (ckpt.adam.m.size() != ckpt.trained_params.size() ||
      ckpt.adam.v.size() != ckpt.trained_params.size())
    throw contract_error("save_checkpoint: Adam state does not match trained parameter list");
  for (std::size_t i = 0; i < ckpt.trained_params.size(); ++i) {
    char prefix[16];
    std::snprintf(prefix, sizeof(prefix), "a%03zu", i);
    const std::string m_file = std::string(prefix) + "_m.svsf";
    const std::string v_file = std::string(prefix) + "_v.svsf";
    write_feature_file(dir / m_file,
                       Tensor::from_data({ckpt.adam.m[i].size()}, ckpt.adam.m[i]),
                       TensorDType::Float64);
    write_feature_file(dir / v_file,
                       Tensor::from_data({ckpt.adam.v[i].size()}, ckpt.adam.v[i]),
                       TensorDType::Float64);
    ordered_json mj;
    mj["m"] = m_file;
    mj["v"] = v_file;
    moments.push_back(std::move(mj));
  }
  manifest["adam"]["moments"] = std::move(moments);

  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw data_error("save_checkpoint: cannot write manifest in " + dir.string());
  f << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f) throw data_error("load_checkpoint: cannot open " + manifest_path.string());
  ordered_json manifest;
  try {
    f >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw format_error("load_checkpoint: " + manifest_path.string() + ": " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.version = manifest.at("format_version").get<std::uint32_t>();
    if (ckpt.version != kCheckpointVersion)
      throw format_error("load_checkpoint: unsupported format version " +
                         std::to_string(ckpt.version));
    ckpt.phase = manifest.at("phase").get<std::string>();
    ckpt.global_step = manifest.at("global_step").get<std::uint64_t>();
    ckpt.epochs_done = manifest.at("epochs_done").get<std::uint64_t>();
    ckpt.rng_state = manifest.at("rng_state").get<std::uint64_t>();
    ckpt.config = manifest.at("config");

    for (const auto& pj : manifest.at("params")) {
      const std::string name = pj.at("name").get<std::string>();
      Tensor t = read_feature_file(dir / pj.at("file").get<std::string>());
      const auto shape = pj.at("shape").get<std::vector<std::size_t>>();
      if (t.shape() != shape)
        throw format_error("load_checkpoint: tensor '" + name + "' has shape " +
                           shape_str(t.shape()) + " but manifest declares " + shape_str(shape));
      ckpt.params.emplace_back(name, std::move(t));
    }

    const auto& aj = manifest.at("adam");
    ckpt.adam.t = aj.at("t").get<std::uint64_t>();
    ckpt.trained_params = aj.at("trained_params").get<std::vector<std::string>>();
    for (const auto& mj : aj.at("moments")) {
      ckpt.adam.m.push_back(read_feature_file(dir / mj.at("m").get<std::string>()).data());
      ckpt.adam.v.push_back(read_feature_file(dir / mj.at("v").get<std::string>()).data());
    }
    if (ckpt.adam.m.size() != ckpt.trained_params.size())
      throw format_error("load_checkpoint: Adam moment count " +
                         std::to_string(ckpt.adam.m.size()) + " != trained parameter count " +
                         std::to_string(ckpt.trained_params.size()));
  } catch (const nlohmann::json::exception& e) {
    throw format_error("load_checkpoint: " + manifest_path.string() + ": " + e.what());
  }
  return ckpt;
}

Checkpoint snapshot_checkpoint(const StudentModel& model, const std::string& phase,
                               ordered_json config, const TrainState& state,
                               const std::vector<std::string>& trained_params) {
  Checkpoint ckpt;
  ckpt.phase = phase;
  ckpt.config = std::move(config);
  for (const auto& [name, tensor] : model.named_parameters())
    ckpt.params.emplace_back(name, tensor.detached());
  ckpt.trained_params = trained_params;
  ckpt.adam = state.adam;
  ckpt.rng_state = state.rng_state;
  ckpt.global_step = state.global_step;
  ckpt.epochs_done = state.epochs_done;
  return ckpt;
}

void load_into_model(const Checkpoint& ckpt, StudentModel& model) {
  auto target = model.named_parameters();
  if (target.size() != ckpt.params.size())
    throw format_error("load_into_model: checkpoint has " + std::to_string(ckpt.params.size()) +
                       " tensors but model expects " + std::to_string(target.size()));
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto& [name, tensor] = target[i];
    const auto& [ckpt_name, ckpt_tensor] = ckpt.params[i];
    if (name != ckpt_name)
      throw format_error("load_into_model: parameter order mismatch: '" + name + "' vs '" +
                         ckpt_name + "'");
    if (tensor.shape() != ckpt_tensor.shape())
      throw format_error("load_into_model: parameter '" + name + "' has shape " +
                         shape_str(ckpt_tensor.shape()) + " but model expects " +
                         shape_str(tensor.shape()));
    Tensor dst = tensor;
    dst.data() = ckpt_tensor.data();
    dst.zero_grad();
  }
}

TrainState train_state_from(const Checkpoint& ckpt) {
  TrainState state;
  state.adam = ckpt.adam;
  state.rng_state = ckpt.rng_state;
  state.global_step = ckpt.global_step;
  state.epochs_done = ckpt.epochs_done;
  state.initialized = true;
  return state;
}

}  // namespace vidsum
