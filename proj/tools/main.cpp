#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "vidsum/checkpoint.hpp"
#include "vidsum/config_json.hpp"
#include "vidsum/data.hpp"
#include "vidsum/errors.hpp"
#include "vidsum/gradcheck.hpp"
#include "vidsum/metrics.hpp"
#include "vidsum/model.hpp"
#include "vidsum/text.hpp"
#include "vidsum/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace vidsum;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Tracks files created by a command so a failure can roll them back, leaving
// only an explicit marker. Inputs are always validated before the first write.
class OutputTracker {
 public:
  explicit OutputTracker(fs::path out_dir) : out_dir_(std::move(out_dir)) {}

  const fs::path& dir() const { return out_dir_; }

  void ensure_dir() { fs::create_directories(out_dir_); }

  fs::path track(const fs::path& relative) {
    ensure_dir();
    fs::path full = out_dir_ / relative;
    tracked_.push_back(full);
    return full;
  }

  void track_existing(const fs::path& full) { tracked_.push_back(full); }

  void write_text(const fs::path& relative, const std::string& content) {
    fs::path full = track(relative);
    std::ofstream f(full, std::ios::trunc | std::ios::binary);
    if (!f) throw data_error("cannot write " + full.string());
    f << content;
    if (!f) throw data_error("write failed for " + full.string());
  }

  void rollback_and_mark(const std::string& message) {
    for (const auto& p : tracked_) {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    std::ofstream f(out_dir_ / "run.failed", std::ios::trunc);
    if (f) f << message << "\n";
  }

 private:
  fs::path out_dir_;
  std::vector<fs::path> tracked_;
};

int run_guarded(OutputTracker* outputs, const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (outputs) outputs->rollback_and_mark(e.what());
    return kExitRuntime;
  }
}

ordered_json load_config_file(const std::string& path) {
  if (path.empty()) return ordered_json::object();
  std::ifstream f(path);
  if (!f) throw config_error("cannot open config file " + path);
  ordered_json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config file " + path + ": " + e.what());
  }
  return j;
}

ordered_json section(const ordered_json& cfg, const char* key) {
  return cfg.contains(key) ? cfg.at(key) : ordered_json::object();
}

std::string epoch_loss_csv(const std::vector<EpochRecord>& records) {
  std::ostringstream os;
  os << "epoch,loss\n";
  for (const auto& r : records) os << r.epoch << "," << format_double(r.mean_loss) << "\n";
  return os.str();
}

std::string score_hist_csv(const std::vector<EpochRecord>& records) {
  std::ostringstream os;
  os << "epoch,n_scores,score_min,score_max";
  for (int b = 0; b < 20; ++b) {
    char col[8];
    std::snprintf(col, sizeof(col), "bin_%02d", b);
    os << "," << col;
  }
  os << "\n";
  for (const auto& r : records) {
    os << r.epoch << "," << r.n_scores << "," << format_double(r.score_min) << ","
       << format_double(r.score_max);
    for (auto c : r.histogram) os << "," << c;
    os << "\n";
  }
  return os.str();
}

void validate_splits_against(const Splits& splits, const Dataset& dataset) {
  for (std::size_t f = 0; f < splits.folds.size(); ++f) {
    const auto& fold = splits.folds[f];
    std::set<std::string> seen;
    for (const auto& id : fold.train)
      if (!seen.insert(id).second)
        throw data_error("split " + std::to_string(f) + ": id '" + id + "' appears twice");
    for (const auto& id : fold.test)
      if (!seen.insert(id).second)
        throw data_error("split " + std::to_string(f) + ": id '" + id +
                         "' appears on both sides");
    for (const auto& id : seen)
      if (!dataset.find(id))
        throw data_error("split " + std::to_string(f) + ": id '" + id + "' not in dataset");
    if (seen.size() != dataset.videos.size())
      throw data_error("split " + std::to_string(f) + ": covers " +
                       std::to_string(seen.size()) + " of " +
                       std::to_string(dataset.videos.size()) + " videos");
  }
}

// Eval-mode frame scores for one video under a frozen model.
std::vector<double> predict_scores(const StudentModel& model, const VideoSample& video) {
  Rng rng(0);  // eval mode draws nothing
  StudentOutput out = model.forward(video.frame_features, /*training=*/false, rng);
  return out.scores.data();
}

struct LoadedCheckpoint {
  Checkpoint ckpt;
  ModelConfig model_cfg;
};

LoadedCheckpoint load_checkpoint_with_config(const std::string& dir) {
  LoadedCheckpoint out{load_checkpoint(dir), {}};
  if (!out.ckpt.config.contains("model"))
    throw format_error("checkpoint " + dir + " has no model config");
  out.model_cfg = model_config_from_json(out.ckpt.config.at("model"));
  return out;
}

std::string svg_score_plot(const std::vector<double>& scores,
                           const std::vector<double>* gt_scores) {
  const int width = 800, height = 240, pad = 30;
  double lo = scores[0], hi = scores[0];
  auto widen = [&](const std::vector<double>& v) {
    for (double s : v) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  };
  widen(scores);
  if (gt_scores) widen(*gt_scores);
  if (hi <= lo) hi = lo + 1.0;

  auto polyline = [&](const std::vector<double>& v, const char* stroke) {
    std::ostringstream os;
    os << "  <polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double x =
          pad + (width - 2.0 * pad) *
                    (n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1));
      const double y = height - pad - (height - 2.0 * pad) * (v[i] - lo) / (hi - lo);
      if (i) os << " ";
      os << format_double(x) << "," << format_double(y);
    }
    os << "\"/>\n";
    return os.str();
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  os << "  <line x1=\"" << pad << "\" y1=\"" << height - pad << "\" x2=\"" << width - pad
     << "\" y2=\"" << height - pad << "\" stroke=\"#999\"/>\n";
  os << "  <line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
     << height - pad << "\" stroke=\"#999\"/>\n";
  if (gt_scores) os << polyline(*gt_scores, "#d62728");
  os << polyline(scores, "#1f77b4");
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SynthConfig synth;
  std::size_t k = 5;
};

int cmd_synth(const SynthArgs& args) {
  OutputTracker outputs{args.out};
  return run_guarded(&outputs, [&] {
    args.synth.validate();
    Dataset ds = generate_synthetic(args.synth);
    Splits splits = make_splits(ds, args.k, args.synth.seed + 1);

    outputs.ensure_dir();
    // save_dataset writes manifest.json and one binary per tensor field.
    save_dataset(ds, outputs.dir());
    outputs.track_existing(outputs.dir() / "manifest.json");
    for (const auto& v : ds.videos) {
      outputs.track_existing(outputs.dir() / (v.id + "_features.svsf"));
      outputs.track_existing(outputs.dir() / (v.id + "_gt.svsf"));
      outputs.track_existing(outputs.dir() / (v.id + "_annotations.svsf"));
      outputs.track_existing(outputs.dir() / (v.id + "_teacher.svsf"));
    }
    save_splits(splits, outputs.track("splits.json"));
    std::cout << "wrote " << ds.videos.size() << " videos to " << outputs.dir().string() << "\n";
  });
}

struct PretrainArgs {
  std::string data, out, config, resume;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t stop_after_epochs = 0;
  std::optional<std::size_t> epochs, batch_size, warmup_epochs;
  std::optional<double> lr_max, temperature, dropout;
  std::optional<std::string> loss;
};

int cmd_pretrain(const PretrainArgs& args) {
  OutputTracker outputs{args.out};
  return run_guarded(&outputs, [&] {
    const ordered_json file_cfg = load_config_file(args.config);
    Dataset dataset = load_manifest(args.data);

    ModelConfig model_cfg;
    PretrainConfig pre_cfg;
    std::unique_ptr<StudentModel> model;
    TrainState state;

    if (!args.resume.empty()) {
      // Resuming continues under the recorded configuration.
      LoadedCheckpoint loaded = load_checkpoint_with_config(args.resume);
      if (loaded.ckpt.phase != "pretrain")
        throw config_error("checkpoint " + args.resume + " is a '" + loaded.ckpt.phase +
                           "' checkpoint");
      model_cfg = loaded.model_cfg;
      pre_cfg = pretrain_config_from_json(loaded.ckpt.config.at("pretrain"));
      model = std::make_unique<StudentModel>(model_cfg, 0);
      load_into_model(loaded.ckpt, *model);
      state = train_state_from(loaded.ckpt);
    } else {
      const ordered_json model_section = section(file_cfg, "model");
      model_cfg = model_config_from_json(model_section);
      // Dimensions follow the dataset unless the config pins them.
      if (!model_section.contains("input_dim")) model_cfg.input_dim = dataset.input_dim;
      if (!model_section.contains("teacher_dim")) model_cfg.teacher_dim = dataset.teacher_dim;
      model_cfg.score_mode = ScoreMode::Softmax;
      if (args.dropout) model_cfg.dropout_p = *args.dropout;

      pre_cfg = pretrain_config_from_json(section(file_cfg, "pretrain"));
      if (file_cfg.contains("seed")) pre_cfg.seed = file_cfg.at("seed").get<std::uint64_t>();
      if (args.seed_set) pre_cfg.seed = args.seed;
      if (args.epochs) pre_cfg.epochs = *args.epochs;
      if (args.batch_size) pre_cfg.batch_size = *args.batch_size;
      if (args.warmup_epochs) pre_cfg.warmup_epochs = *args.warmup_epochs;
      if (args.lr_max) pre_cfg.lr_max = *args.lr_max;
      if (args.temperature) pre_cfg.temperature = *args.temperature;
      if (args.loss) pre_cfg.loss_kind = loss_kind_from_string(*args.loss);

      model_cfg.validate();
      pre_cfg.validate();
      model = std::make_unique<StudentModel>(model_cfg, mix_seed(pre_cfg.seed, kModelInitSalt));
    }

    if (model_cfg.input_dim != dataset.input_dim)
      throw config_error("model input_dim " + std::to_string(model_cfg.input_dim) +
                         " != dataset input_dim " + std::to_string(dataset.input_dim));
    if (model_cfg.teacher_dim != dataset.teacher_dim)
      throw config_error("model teacher_dim " + std::to_string(model_cfg.teacher_dim) +
                         " != dataset teacher_dim " + std::to_string(dataset.teacher_dim));
    for (const auto& v : dataset.videos)
      if (!v.teacher_repr)
        throw data_error("pretrain: video '" + v.id + "' has no teacher representation");

    std::vector<EpochRecord> records =
        pretrain(*model, dataset, pre_cfg, state, args.stop_after_epochs);

    ordered_json ckpt_cfg;
    ckpt_cfg["model"] = to_json(model->config());
    ckpt_cfg["pretrain"] = to_json(pre_cfg);
    std::vector<std::string> trained;
    for (const auto& [name, t] : model->named_parameters()) trained.push_back(name);
    Checkpoint ckpt = snapshot_checkpoint(*model, "pretrain", ckpt_cfg, state, trained);

    outputs.track("checkpoint");
    save_checkpoint(ckpt, outputs.dir() / "checkpoint");
    outputs.write_text("loss.csv", epoch_loss_csv(records));
    outputs.write_text("score_hist.csv", score_hist_csv(records));
    std::cout << "pretrained " << records.size() << " epochs; checkpoint at "
              << (outputs.dir() / "checkpoint").string() << "\n";
  });
}

struct FinetuneArgs {
  std::string data, splits, out, config, init;
  std::size_t split = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> lr, weight_decay;
};

int cmd_finetune(const FinetuneArgs& args) {
  OutputTracker outputs{args.out};
  return run_guarded(&outputs, [&] {
    const ordered_json file_cfg = load_config_file(args.config);
    Dataset dataset = load_manifest(args.data);
    Splits splits = load_splits(args.splits);
    validate_splits_against(splits, dataset);
    if (args.split >= splits.k)
      throw config_error("split index " + std::to_string(args.split) + " out of range (k = " +
                         std::to_string(splits.k) + ")");

    FinetuneConfig ft_cfg = finetune_config_from_json(section(file_cfg, "finetune"));
    if (file_cfg.contains("seed")) ft_cfg.seed = file_cfg.at("seed").get<std::uint64_t>();
    if (args.seed_set) ft_cfg.seed = args.seed;
    if (args.epochs) ft_cfg.epochs = *args.epochs;
    if (args.batch_size) ft_cfg.batch_size = *args.batch_size;
    if (args.lr) ft_cfg.lr = *args.lr;
    if (args.weight_decay) ft_cfg.weight_decay = *args.weight_decay;
    ft_cfg.validate();

    ModelConfig model_cfg;
    std::unique_ptr<StudentModel> model;
    if (!args.init.empty()) {
      LoadedCheckpoint loaded = load_checkpoint_with_config(args.init);
      model_cfg = loaded.model_cfg;
      model = std::make_unique<StudentModel>(model_cfg, 0);
      load_into_model(loaded.ckpt, *model);
    } else {
      const ordered_json model_section = section(file_cfg, "model");
      model_cfg = model_config_from_json(model_section);
      if (!model_section.contains("input_dim")) model_cfg.input_dim = dataset.input_dim;
      if (!model_section.contains("teacher_dim")) model_cfg.teacher_dim = dataset.teacher_dim;
      model_cfg.validate();
      model = std::make_unique<StudentModel>(model_cfg, mix_seed(ft_cfg.seed, kModelInitSalt));
    }
    if (model_cfg.input_dim != dataset.input_dim)
      throw config_error("model input_dim " + std::to_string(model_cfg.input_dim) +
                         " != dataset input_dim " + std::to_string(dataset.input_dim));

    const auto& train_ids = splits.folds[args.split].train;
    for (const auto& id : train_ids)
      if (!dataset.find(id)->gt_scores)
        throw data_error("finetune: video '" + id + "' has no ground-truth scores");

    TrainState state;
    std::vector<EpochRecord> records = finetune(*model, dataset, train_ids, ft_cfg, state);

    ordered_json ckpt_cfg;
    ckpt_cfg["model"] = to_json(model->config());
    ckpt_cfg["finetune"] = to_json(ft_cfg);
    ckpt_cfg["split_index"] = args.split;
    std::vector<std::string> trained;
    for (const auto& [name, t] : model->named_parameters())
      if (name != "projection_head") trained.push_back(name);
    Checkpoint ckpt = snapshot_checkpoint(*model, "finetune", ckpt_cfg, state, trained);

    outputs.track("checkpoint");
    save_checkpoint(ckpt, outputs.dir() / "checkpoint");
    outputs.write_text("loss.csv", epoch_loss_csv(records));
    std::cout << "finetuned " << records.size() << " epochs on split " << args.split
              << "; checkpoint at " << (outputs.dir() / "checkpoint").string() << "\n";
  });
}

struct EvalArgs {
  std::string data, splits, ckpt, out, config;
  int split = -1;  // -1 = all
  std::optional<double> budget_ratio;
};

int cmd_eval(const EvalArgs& args) {
  OutputTracker outputs{args.out};
  return run_guarded(&outputs, [&] {
    const ordered_json file_cfg = load_config_file(args.config);
    Dataset dataset = load_manifest(args.data);
    Splits splits = load_splits(args.splits);
    validate_splits_against(splits, dataset);

    double budget_ratio = 0.15;
    if (section(file_cfg, "eval").contains("budget_ratio"))
      budget_ratio = section(file_cfg, "eval").at("budget_ratio").get<double>();
    if (args.budget_ratio) budget_ratio = *args.budget_ratio;
    if (!(budget_ratio > 0.0 && budget_ratio <= 1.0))
      throw config_error("budget_ratio must lie in (0, 1]");

    LoadedCheckpoint loaded = load_checkpoint_with_config(args.ckpt);
    StudentModel model(loaded.model_cfg, 0);
    load_into_model(loaded.ckpt, model);
    if (loaded.model_cfg.input_dim != dataset.input_dim)
      throw config_error("checkpoint input_dim " + std::to_string(loaded.model_cfg.input_dim) +
                         " != dataset input_dim " + std::to_string(dataset.input_dim));

    std::vector<std::size_t> requested;
    if (args.split >= 0) {
      if (static_cast<std::size_t>(args.split) >= splits.k)
        throw config_error("split index " + std::to_string(args.split) + " out of range (k = " +
                           std::to_string(splits.k) + ")");
      requested.push_back(static_cast<std::size_t>(args.split));
    } else {
      for (std::size_t i = 0; i < splits.k; ++i) requested.push_back(i);
    }

    // The protocol inputs for every requested test video are checked before
    // anything is written.
    for (std::size_t si : requested)
      for (const auto& id : splits.folds[si].test) {
        const VideoSample* v = dataset.find(id);
        if (!v->user_annotations || v->user_annotations->empty())
          throw data_error("eval: video '" + id + "' has no user annotations");
        if (!v->segments) throw data_error("eval: video '" + id + "' has no segments");
      }

    std::vector<MetricsReport> reports;
    for (std::size_t si : requested) {
      std::vector<std::pair<std::string, std::vector<double>>> predictions;
      for (const auto& id : splits.folds[si].test)
        predictions.emplace_back(id, predict_scores(model, *dataset.find(id)));
      reports.push_back(evaluate_videos(predictions, dataset, budget_ratio, si));
    }

    for (std::size_t i = 0; i < reports.size(); ++i) {
      const std::string stem = "report_split" + std::to_string(requested[i]);
      outputs.write_text(stem + ".json", reports[i].to_json().dump(2) + "\n");
      outputs.write_text(stem + ".csv", reports[i].to_csv());
    }

    ordered_json aggregate;
    aggregate["budget_ratio"] = budget_ratio;
    aggregate["splits"] = ordered_json::array();
    double tau_sum = 0, rho_sum = 0, f_sum = 0;
    for (const auto& r : reports) {
      ordered_json sj;
      sj["split_index"] = *r.split_index;
      sj["tau"] = r.mean_tau();
      sj["rho"] = r.mean_rho();
      sj["f_score"] = r.mean_f();
      aggregate["splits"].push_back(std::move(sj));
      tau_sum += r.mean_tau();
      rho_sum += r.mean_rho();
      f_sum += r.mean_f();
    }
    const double k = static_cast<double>(reports.size());
    aggregate["mean"]["tau"] = tau_sum / k;
    aggregate["mean"]["rho"] = rho_sum / k;
    aggregate["mean"]["f_score"] = f_sum / k;
    outputs.write_text("report_aggregate.json", aggregate.dump(2) + "\n");

    std::cout << "tau " << format_double(tau_sum / k) << "  rho " << format_double(rho_sum / k)
              << "  f_score " << format_double(f_sum / k) << "\n";
  });
}

struct ScoreArgs {
  std::string data, ckpt, out, video, svg;
};

int cmd_score(const ScoreArgs& args) {
  OutputTracker outputs{args.out};
  return run_guarded(&outputs, [&] {
    Dataset dataset = load_manifest(args.data);
    const VideoSample* video = dataset.find(args.video);
    if (!video) throw data_error("score: unknown video id '" + args.video + "'");

    LoadedCheckpoint loaded = load_checkpoint_with_config(args.ckpt);
    StudentModel model(loaded.model_cfg, 0);
    load_into_model(loaded.ckpt, model);

    const std::vector<double> scores = predict_scores(model, *video);

    std::ostringstream csv;
    csv << "frame_index,score";
    if (video->gt_scores) csv << ",gt_score";
    csv << "\n";
    for (std::size_t i = 0; i < scores.size(); ++i) {
      csv << i << "," << format_double(scores[i]);
      if (video->gt_scores) csv << "," << format_double((*video->gt_scores)[i]);
      csv << "\n";
    }
    outputs.write_text("score_" + args.video + ".csv", csv.str());

    if (!args.svg.empty()) {
      const std::string svg =
          svg_score_plot(scores, video->gt_scores ? &*video->gt_scores : nullptr);
      outputs.track_existing(args.svg);
      std::ofstream f(args.svg, std::ios::trunc);
      if (!f) throw data_error("cannot write " + args.svg);
      f << svg;
    }
    std::cout << "scored " << scores.size() << " frames of '" << args.video << "'\n";
  });
}

struct GradcheckArgs {
  std::uint64_t seed = 1;
  bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  return run_guarded(nullptr, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = run_gradcheck_suite(args.seed, 1e-4, 1e-5, args.inject_fault);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& r : results)
      std::printf("%-34s max_rel_error %.3e  %s\n", r.component.c_str(), r.max_rel_error,
                  r.pass ? "ok" : "FAIL");
    std::printf("%zu components in %.1f s\n", results.size(), elapsed);
    if (!all_pass(results)) {
      std::string bad;
      for (const auto& r : results)
        if (!r.pass) bad += (bad.empty() ? "" : ", ") + r.component;
      throw data_error("gradient check failed: " + bad);
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame-importance scoring lab: distillation pre-training, fine-tuning and "
               "summary evaluation for transformer frame scorers"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with planted "
                                            "importance weights plus a splits file");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--videos", synth_args.synth.n_videos, "Number of videos");
  synth->add_option("--frames", synth_args.synth.n_frames, "Frames per video");
  synth->add_option("--dim", synth_args.synth.input_dim, "Frame feature dimensionality");
  synth->add_option("--teacher-dim", synth_args.synth.teacher_dim,
                    "Teacher representation dimensionality");
  synth->add_option("--sparsity", synth_args.synth.sparsity,
                    "Fraction of high-importance frames");
  synth->add_option("--noise", synth_args.synth.noise_scale, "Teacher noise scale");
  synth->add_option("--seed", synth_args.synth.seed, "Generator seed");
  synth->add_option("--k", synth_args.k, "Number of train/test splits");

  PretrainArgs pre_args;
  auto* pre =
      app.add_subcommand("pretrain", "Distill the teacher representations into the student");
  pre->add_option("--data", pre_args.data, "Dataset manifest path")->required();
  pre->add_option("--out", pre_args.out, "Output directory")->required();
  pre->add_option("--config", pre_args.config, "JSON config file (flags win)");
  auto* pre_seed = pre->add_option("--seed", pre_args.seed, "Training seed");
  pre->add_option("--resume", pre_args.resume,
                  "Resume from this checkpoint directory (training config comes from it)");
  pre->add_option("--stop-after-epochs", pre_args.stop_after_epochs,
                  "Checkpoint after this many additional epochs (0 = run to completion)");
  std::size_t pre_epochs = 0, pre_batch = 0, pre_warmup = 0;
  double pre_lr = 0, pre_temp = 0, pre_dropout = 0;
  std::string pre_loss;
  auto* o_epochs = pre->add_option("--epochs", pre_epochs, "Total epochs");
  auto* o_batch = pre->add_option("--batch", pre_batch, "Videos per batch");
  auto* o_warmup = pre->add_option("--warmup-epochs", pre_warmup, "Linear warmup epochs");
  auto* o_lr = pre->add_option("--lr", pre_lr, "Peak learning rate");
  auto* o_temp = pre->add_option("--temperature", pre_temp, "Distillation temperature");
  auto* o_dropout = pre->add_option("--dropout", pre_dropout, "Dropout probability");
  auto* o_loss = pre->add_option("--loss", pre_loss, "Distillation loss: ce|mse")
                     ->check(CLI::IsMember({"ce", "cross_entropy", "mse"}));

  FinetuneArgs ft_args;
  auto* ft = app.add_subcommand("finetune", "Fine-tune on ground-truth frame scores");
  ft->add_option("--data", ft_args.data, "Dataset manifest path")->required();
  ft->add_option("--splits", ft_args.splits, "Splits file")->required();
  ft->add_option("--split", ft_args.split, "Split index")->required();
  ft->add_option("--out", ft_args.out, "Output directory")->required();
  ft->add_option("--config", ft_args.config, "JSON config file (flags win)");
  ft->add_option("--init", ft_args.init, "Initialize from this checkpoint (omit for fresh)");
  auto* ft_seed = ft->add_option("--seed", ft_args.seed, "Training seed");
  std::size_t ft_epochs = 0, ft_batch = 0;
  double ft_lr = 0, ft_wd = -1;
  auto* f_epochs = ft->add_option("--epochs", ft_epochs, "Epochs");
  auto* f_batch = ft->add_option("--batch", ft_batch, "Videos per batch");
  auto* f_lr = ft->add_option("--lr", ft_lr, "Learning rate");
  auto* f_wd = ft->add_option("--weight-decay", ft_wd, "Decoupled weight decay");

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test side of splits");
  ev->add_option("--data", eval_args.data, "Dataset manifest path")->required();
  ev->add_option("--splits", eval_args.splits, "Splits file")->required();
  ev->add_option("--ckpt", eval_args.ckpt, "Checkpoint directory")->required();
  ev->add_option("--out", eval_args.out, "Output directory")->required();
  ev->add_option("--config", eval_args.config, "JSON config file (flags win)");
  ev->add_option("--split", eval_args.split, "Single split index (default: all)");
  double ev_budget = 0;
  auto* e_budget = ev->add_option("--budget", ev_budget,
                                  "Summary budget as a fraction of frames");

  ScoreArgs score_args;
  auto* sc = app.add_subcommand("score", "Export per-frame scores for one video");
  sc->add_option("--data", score_args.data, "Dataset manifest path")->required();
  sc->add_option("--ckpt", score_args.ckpt, "Checkpoint directory")->required();
  sc->add_option("--video", score_args.video, "Video id")->required();
  sc->add_option("--out", score_args.out, "Output directory")->required();
  sc->add_option("--svg", score_args.svg, "Also write an SVG score curve to this path");

  GradcheckArgs gc_args;
  auto* gc = app.add_subcommand("gradcheck",
                                "Compare reverse-mode gradients against finite differences");
  gc->add_option("--seed", gc_args.seed, "Sample-point seed");
  gc->add_flag("--inject-fault", gc_args.inject_fault,
               "Corrupt one analytic gradient (test hook; must fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (synth->parsed()) return cmd_synth(synth_args);
  if (pre->parsed()) {
    pre_args.seed_set = pre_seed->count() > 0;
    if (o_epochs->count()) pre_args.epochs = pre_epochs;
    if (o_batch->count()) pre_args.batch_size = pre_batch;
    if (o_warmup->count()) pre_args.warmup_epochs = pre_warmup;
    if (o_lr->count()) pre_args.lr_max = pre_lr;
    if (o_temp->count()) pre_args.temperature = pre_temp;
    if (o_dropout->count()) pre_args.dropout = pre_dropout;
    if (o_loss->count()) pre_args.loss = pre_loss;
    return cmd_pretrain(pre_args);
  }
  if (ft->parsed()) {
    ft_args.seed_set = ft_seed->count() > 0;
    if (f_epochs->count()) ft_args.epochs = ft_epochs;
    if (f_batch->count()) ft_args.batch_size = ft_batch;
    if (f_lr->count()) ft_args.lr = ft_lr;
    if (f_wd->count()) ft_args.weight_decay = ft_wd;
    return cmd_finetune(ft_args);
  }
  if (ev->parsed()) {
    if (e_budget->count()) eval_args.budget_ratio = ev_budget;
    return cmd_eval(eval_args);
  }
  if (sc->parsed()) return cmd_score(score_args);
  if (gc->parsed()) return cmd_gradcheck(gc_args);
  return kExitUsage;
}
