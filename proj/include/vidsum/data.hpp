#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vidsum/tensor.hpp"

namespace vidsum {

struct VideoSample {
  std::string id;
  std::size_t n_frames = 0;
  Tensor frame_features;  // [n_frames x input_dim]
  std::optional<std::vector<double>> gt_scores;                      // length n, values in [0,1]
  std::optional<std::vector<std::vector<double>>> user_annotations;  // U x n
  std::optional<std::vector<std::pair<std::size_t, std::size_t>>> segments;  // [start, end)
  std::optional<Tensor> teacher_repr;  // [teacher_dim]
};

struct Dataset {
  std::string name;
  std::size_t input_dim = 0;
  std::size_t teacher_dim = 0;
  std::vector<VideoSample> videos;

  const VideoSample* find(const std::string& id) const;
  void validate() const;  // throws data_error
};

struct Splits {
  struct Fold {
    std::vector<std::string> train, test;
  };
  std::size_t k = 0;
  std::vector<Fold> folds;
};

struct SynthConfig {
  std::size_t n_videos = 8;
  std::size_t n_frames = 32;
  std::size_t input_dim = 16;
  std::size_t teacher_dim = 16;
  double sparsity = 0.25;     // fraction of high-importance frames
  double noise_scale = 0.0;   // stddev added to the teacher representation
  std::uint64_t seed = 0;

  void validate() const;
};

// Binary tensor container: magic "SVSF", u32 version=1, u32 dtype
// (1 = float32, 2 = float64), u32 ndim, ndim u64 dims, row-major payload.
// All integers little-endian.
enum class TensorDType : std::uint32_t { Float32 = 1, Float64 = 2 };

void write_feature_file(const std::filesystem::path& path, const Tensor& tensor,
                        TensorDType dtype = TensorDType::Float32);
Tensor read_feature_file(const std::filesystem::path& path);

Dataset load_manifest(const std::filesystem::path& manifest_path);
// Writes manifest.json plus one feature file per tensor field under dir.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

Dataset generate_synthetic(const SynthConfig& cfg);

// Teacher representation of one synthetic video: map * (sum_i w_i f_i), plus
// optional noise. `map` is row-major [teacher_dim x input_dim].
std::vector<double> synth_teacher_repr(const std::vector<double>& map, std::size_t teacher_dim,
                                       const Tensor& features, const std::vector<double>& weights,
                                       double noise_scale, Rng& rng);

Splits make_splits(const Dataset& dataset, std::size_t k, std::uint64_t seed);
Splits load_splits(const std::filesystem::path& path);
void save_splits(const Splits& splits, const std::filesystem::path& path);

// Indices floor(j * fps_in / fps_out) while < n_frames_in.
std::vector<std::size_t> downsample_indices(double fps_in, double fps_out,
                                            std::size_t n_frames_in);

}  // namespace vidsum
