#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vidsum/checkpoint.hpp"
#include "vidsum/config_json.hpp"
#include "vidsum/data.hpp"
#include "vidsum/errors.hpp"
#include "vidsum/train.hpp"

using namespace vidsum;
namespace fs = std::filesystem;

namespace {

ModelConfig toy_model() {
  ModelConfig cfg;
  cfg.input_dim = 8;
  cfg.d_model = 16;
  cfg.n_layers_total = 2;
  cfg.n_layers_first = 1;
  cfg.n_heads = 2;
  cfg.d_head = 8;
  cfg.d_ff = 8;
  cfg.pe_dim = 4;
  cfg.dropout_p = 0.1;
  cfg.teacher_dim = 8;
  return cfg;
}

Dataset toy_dataset(std::uint64_t seed = 3, std::size_t videos = 4) {
  SynthConfig cfg;
  cfg.n_videos = videos;
  cfg.n_frames = 12;
  cfg.input_dim = 8;
  cfg.teacher_dim = 8;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

PretrainConfig toy_pretrain(std::size_t epochs) {
  PretrainConfig cfg;
  cfg.batch_size = 512;
  cfg.epochs = epochs;
  cfg.warmup_epochs = std::max<std::size_t>(1, epochs / 10);
  cfg.lr_max = 0.01;
  cfg.seed = 7;
  return cfg;
}

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("vidsum_train_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<unsigned char> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

bool dirs_identical(const fs::path& a, const fs::path& b) {
  std::vector<std::string> na, nb;
  for (const auto& e : fs::directory_iterator(a)) na.push_back(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) nb.push_back(e.path().filename().string());
  std::sort(na.begin(), na.end());
  std::sort(nb.begin(), nb.end());
  if (na != nb) return false;
  for (const auto& name : na)
    if (slurp(a / name) != slurp(b / name)) return false;
  return true;
}

Checkpoint snapshot_of(const StudentModel& model, const TrainState& state,
                       const std::string& phase) {
  nlohmann::ordered_json cfg;
  cfg["model"] = to_json(model.config());
  std::vector<std::string> trained;
  for (const auto& [name, t] : model.named_parameters()) trained.push_back(name);
  return snapshot_checkpoint(model, phase, cfg, state, trained);
}

}  // namespace

TEST_CASE("pretrain requires teacher representations") {
  Dataset ds = toy_dataset();
  ds.videos[2].teacher_repr.reset();
  StudentModel model(toy_model(), 1);
  TrainState state;
  try {
    pretrain(model, ds, toy_pretrain(2), state);
    FAIL("expected data_error");
  } catch (const data_error& e) {
    CHECK(std::string(e.what()).find("v2") != std::string::npos);
  }
}

TEST_CASE("pretrain loss decreases and stays finite for both loss kinds") {
  Dataset ds = toy_dataset(7, 6);
  for (LossKind kind : {LossKind::CrossEntropy, LossKind::Mse}) {
    StudentModel model(toy_model(), mix_seed(7, kModelInitSalt));
    PretrainConfig cfg = toy_pretrain(10);
    cfg.loss_kind = kind;
    TrainState state;
    const auto records = pretrain(model, ds, cfg, state);
    REQUIRE(records.size() == 10);
    for (const auto& r : records) CHECK(std::isfinite(r.mean_loss));
    CHECK(records[9].mean_loss < records[0].mean_loss);
    CHECK(state.global_step == 10);
  }
}

TEST_CASE("epoch records carry score diagnostics") {
  Dataset ds = toy_dataset();
  StudentModel model(toy_model(), 5);
  TrainState state;
  const auto records = pretrain(model, ds, toy_pretrain(3), state);
  for (const auto& r : records) {
    CHECK(r.n_scores == 4 * 12);
    CHECK(r.score_min >= 0.0);
    CHECK(r.score_max <= 1.0);
    CHECK(r.score_min <= r.score_max);
    std::uint64_t total = 0;
    for (auto c : r.histogram) total += c;
    CHECK(total == r.n_scores);
  }
}

TEST_CASE("pretrain does not touch dataset tensors and leaves teachers constant") {
  Dataset ds = toy_dataset();
  std::vector<std::vector<double>> feature_bits, teacher_bits;
  for (const auto& v : ds.videos) {
    feature_bits.push_back(v.frame_features.data());
    teacher_bits.push_back(v.teacher_repr->data());
  }
  StudentModel model(toy_model(), 9);
  TrainState state;
  pretrain(model, ds, toy_pretrain(3), state);
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    CHECK(ds.videos[i].frame_features.data() == feature_bits[i]);
    CHECK(ds.videos[i].teacher_repr->data() == teacher_bits[i]);
    CHECK_FALSE(ds.videos[i].frame_features.has_grad());
    CHECK_FALSE(ds.videos[i].teacher_repr->has_grad());
  }
}

TEST_CASE("identical seeds give bit-identical pretrain checkpoints") {
  Dataset ds = toy_dataset();
  auto run = [&](const fs::path& dir) {
    StudentModel model(toy_model(), mix_seed(7, kModelInitSalt));
    TrainState state;
    pretrain(model, ds, toy_pretrain(4), state);
    save_checkpoint(snapshot_of(model, state, "pretrain"), dir);
  };
  const fs::path d1 = temp_dir("det_a"), d2 = temp_dir("det_b");
  run(d1);
  run(d2);
  CHECK(dirs_identical(d1, d2));
}

TEST_CASE("finetune validates ground truth and freezes the projection head") {
  Dataset ds = toy_dataset();
  StudentModel model(toy_model(), 11);
  const std::vector<double> proj_before = model.projection_head().data();

  Dataset no_gt = ds;
  no_gt.videos[1].gt_scores.reset();
  {
    TrainState state;
    FinetuneConfig cfg;
    cfg.epochs = 1;
    try {
      finetune(model, no_gt, {"v0", "v1"}, cfg, state);
      FAIL("expected data_error");
    } catch (const data_error& e) {
      CHECK(std::string(e.what()).find("v1") != std::string::npos);
    }
  }

  TrainState state;
  FinetuneConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 2;
  cfg.seed = 3;
  const auto records = finetune(model, ds, {"v0", "v1", "v2"}, cfg, state);
  CHECK(records.size() == 5);
  for (const auto& r : records) CHECK(std::isfinite(r.mean_loss));
  CHECK(model.projection_head().data() == proj_before);
  CHECK(model.config().score_mode == ScoreMode::Sigmoid);
}

TEST_CASE("finetune is deterministic under a fixed seed") {
  Dataset ds = toy_dataset();
  auto run = [&](const fs::path& dir, bool from_pretrained) {
    StudentModel model(toy_model(), mix_seed(11, kModelInitSalt));
    if (from_pretrained) {
      TrainState ps;
      pretrain(model, ds, toy_pretrain(3), ps);
    }
    TrainState state;
    FinetuneConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 2;
    cfg.seed = 11;
    finetune(model, ds, {"v0", "v1", "v2"}, cfg, state);
    save_checkpoint(snapshot_of(model, state, "finetune"), dir);
  };
  // Both initialization routes are accepted and each is reproducible.
  for (bool pre : {false, true}) {
    const fs::path d1 = temp_dir(pre ? "ft_pre_a" : "ft_fresh_a");
    const fs::path d2 = temp_dir(pre ? "ft_pre_b" : "ft_fresh_b");
    run(d1, pre);
    run(d2, pre);
    CHECK(dirs_identical(d1, d2));
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Dataset ds = toy_dataset();
  StudentModel model(toy_model(), 13);
  TrainState state;
  pretrain(model, ds, toy_pretrain(2), state);

  const fs::path d1 = temp_dir("ckpt_a"), d2 = temp_dir("ckpt_b");
  const Checkpoint ckpt = snapshot_of(model, state, "pretrain");
  save_checkpoint(ckpt, d1);
  const Checkpoint loaded = load_checkpoint(d1);
  save_checkpoint(loaded, d2);
  CHECK(dirs_identical(d1, d2));

  CHECK(loaded.rng_state == state.rng_state);
  CHECK(loaded.global_step == state.global_step);
  CHECK(loaded.adam.t == state.adam.t);
  CHECK(loaded.adam.m == state.adam.m);
  CHECK(loaded.adam.v == state.adam.v);

  StudentModel restored(toy_model(), 0);
  load_into_model(loaded, restored);
  auto a = model.named_parameters();
  auto b = restored.named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].second.data() == b[i].second.data());
}

TEST_CASE("corrupt checkpoints are rejected without partial state") {
  Dataset ds = toy_dataset();
  StudentModel model(toy_model(), 17);
  TrainState state;
  pretrain(model, ds, toy_pretrain(1), state);
  const fs::path dir = temp_dir("ckpt_corrupt");
  save_checkpoint(snapshot_of(model, state, "pretrain"), dir);

  // Truncate one parameter file.
  const fs::path victim = dir / "p000_input_proj.svsf";
  const auto bytes = slurp(victim);
  {
    std::ofstream f(victim, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size() - 3));
  }
  CHECK_THROWS_AS(load_checkpoint(dir), format_error);

  // Version bump is rejected.
  const fs::path dir2 = temp_dir("ckpt_version");
  save_checkpoint(snapshot_of(model, state, "pretrain"), dir2);
  {
    std::ifstream f(dir2 / "manifest.json");
    nlohmann::ordered_json j;
    f >> j;
    j["format_version"] = 99;
    std::ofstream out(dir2 / "manifest.json", std::ios::trunc);
    out << j.dump(2) << "\n";
  }
  CHECK_THROWS_AS(load_checkpoint(dir2), format_error);
}

TEST_CASE("resuming mid-pretraining matches the uninterrupted run bit for bit") {
  Dataset ds = toy_dataset(19, 5);
  const PretrainConfig cfg = toy_pretrain(8);

  // Uninterrupted.
  StudentModel full(toy_model(), mix_seed(cfg.seed, kModelInitSalt));
  TrainState full_state;
  pretrain(full, ds, cfg, full_state);
  const fs::path d_full = temp_dir("resume_full");
  save_checkpoint(snapshot_of(full, full_state, "pretrain"), d_full);

  // Stop after 3 epochs, snapshot, restore into a fresh model, continue.
  StudentModel part(toy_model(), mix_seed(cfg.seed, kModelInitSalt));
  TrainState part_state;
  pretrain(part, ds, cfg, part_state, 3);
  const fs::path d_mid = temp_dir("resume_mid");
  save_checkpoint(snapshot_of(part, part_state, "pretrain"), d_mid);

  const Checkpoint mid = load_checkpoint(d_mid);
  StudentModel resumed(toy_model(), 0);
  load_into_model(mid, resumed);
  TrainState resumed_state = train_state_from(mid);
  pretrain(resumed, ds, cfg, resumed_state);
  const fs::path d_resumed = temp_dir("resume_done");
  save_checkpoint(snapshot_of(resumed, resumed_state, "pretrain"), d_resumed);

  CHECK(dirs_identical(d_full, d_resumed));
}

TEST_CASE("toy fine-tuning overfits quickly") {
  Dataset ds = toy_dataset(23, 4);
  ModelConfig mc = toy_model();
  mc.dropout_p = 0.0;
  StudentModel model(mc, mix_seed(7, kModelInitSalt));
  FinetuneConfig cfg;
  cfg.batch_size = 1;
  cfg.epochs = 60;
  cfg.lr = 3e-3;
  cfg.weight_decay = 0.0;
  cfg.seed = 7;
  TrainState state;
  const auto records = finetune(model, ds, {"v0", "v1", "v2", "v3"}, cfg, state);
  CHECK(records.back().mean_loss < 1e-2);
  CHECK(records.back().mean_loss < records.front().mean_loss);
}

TEST_CASE("config json round trips") {
  ModelConfig mc = toy_model();
  mc.act = Activation::Gelu;
  mc.score_mode = ScoreMode::Sigmoid;
  mc.init = InitScheme::Glorot;
  const ModelConfig mc2 = model_config_from_json(to_json(mc));
  CHECK(mc2.input_dim == mc.input_dim);
  CHECK(mc2.act == mc.act);
  CHECK(mc2.score_mode == mc.score_mode);
  CHECK(mc2.init == mc.init);
  CHECK(mc2.d_ff == mc.d_ff);

  PretrainConfig pc;
  pc.loss_kind = LossKind::Mse;
  pc.temperature = 2.5;
  const PretrainConfig pc2 = pretrain_config_from_json(to_json(pc));
  CHECK(pc2.loss_kind == LossKind::Mse);
  CHECK(pc2.temperature == 2.5);

  FinetuneConfig fc;
  fc.lr = 0.25;
  CHECK(finetune_config_from_json(to_json(fc)).lr == 0.25);

  CHECK_THROWS_AS(loss_kind_from_string("nope"), config_error);
  CHECK_THROWS_AS(activation_from_string("nope"), config_error);
}
