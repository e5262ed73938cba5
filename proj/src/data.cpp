#include "vidsum/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "vidsum/errors.hpp"

namespace vidsum {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// --- binary tensor container -------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'V', 'S', 'F'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::vector<unsigned char>& buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[off + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::vector<unsigned char>& buf, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[off + i]) << (8 * i);
  return v;
}

void require_bytes(const std::vector<unsigned char>& buf, std::size_t off, std::size_t need,
                   const fs::path& path, const char* what) {
  if (buf.size() < off + need)
    throw format_error(path.string() + ": truncated " + what + " at byte offset " +
                       std::to_string(buf.size()) + " (expected " + std::to_string(off + need) +
                       " bytes)");
}

}  // namespace

void write_feature_file(const fs::path& path, const Tensor& tensor, TensorDType dtype) {
  for (double v : tensor.data())
    if (!std::isfinite(v))
      throw contract_error("write_feature_file: non-finite value in tensor for " + path.string());

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(dtype));
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) put_u64(out, d);
  if (dtype == TensorDType::Float32) {
    for (double v : tensor.data())
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  } else {
    for (double v : tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw data_error("write_feature_file: cannot open " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw data_error("write_feature_file: write failed for " + path.string());
}

Tensor read_feature_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("read_feature_file: cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());

  require_bytes(buf, 0, 16, path, "header");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw format_error(path.string() + ": bad magic at byte offset 0");
  const std::uint32_t version = get_u32(buf, 4);
  if (version != kVersion)
    throw format_error(path.string() + ": unsupported version " + std::to_string(version) +
                       " at byte offset 4");
  const std::uint32_t dtype = get_u32(buf, 8);
  if (dtype != static_cast<std::uint32_t>(TensorDType::Float32) &&
      dtype != static_cast<std::uint32_t>(TensorDType::Float64))
    throw format_error(path.string() + ": unsupported dtype " + std::to_string(dtype) +
                       " at byte offset 8");
  const std::uint32_t ndim = get_u32(buf, 12);

  std::size_t off = 16;
  require_bytes(buf, off, 8ull * ndim, path, "dimension list");
  std::vector<std::size_t> shape(ndim);
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    shape[i] = static_cast<std::size_t>(get_u64(buf, off));
    if (shape[i] == 0)
      throw format_error(path.string() + ": zero dimension at byte offset " + std::to_string(off));
    numel *= shape[i];
    off += 8;
  }

  const std::size_t elem = dtype == static_cast<std::uint32_t>(TensorDType::Float32) ? 4 : 8;
  require_bytes(buf, off, numel * elem, path, "payload");
  if (buf.size() != off + numel * elem)
    throw format_error(path.string() + ": trailing bytes after payload at byte offset " +
                       std::to_string(off + numel * elem));

  std::vector<double> values(numel);
  if (elem == 4) {
    for (std::size_t i = 0; i < numel; ++i)
      values[i] = static_cast<double>(std::bit_cast<float>(get_u32(buf, off + 4 * i)));
  } else {
    for (std::size_t i = 0; i < numel; ++i)
      values[i] = std::bit_cast<double>(get_u64(buf, off + 8 * i));
  }
  return Tensor::from_data(std::move(shape), std::move(values));
}

// --- dataset -----------------------------------------------------------------

const VideoSample* Dataset::find(const std::string& id) const {
  for (const auto& v : videos)
    if (v.id == id) return &v;
  return nullptr;
}

namespace {

void validate_scores(const std::vector<double>& scores, std::size_t n, const std::string& id,
                     const std::string& field) {
  if (scores.size() != n)
    throw data_error("video '" + id + "': " + field + " length " +
                     std::to_string(scores.size()) + " != n_frames " + std::to_string(n));
  for (double s : scores)
    if (!(s >= 0.0 && s <= 1.0))
      throw data_error("video '" + id + "': " + field + " value " + std::to_string(s) +
                       " outside [0, 1]");
}

}  // namespace

void Dataset::validate() const {
  std::set<std::string> ids;
  for (const auto& v : videos) {
    if (!ids.insert(v.id).second) throw data_error("duplicate video id '" + v.id + "'");
    if (v.n_frames == 0) throw data_error("video '" + v.id + "': n_frames is zero");
    if (!v.frame_features.defined() || v.frame_features.rank() != 2 ||
        v.frame_features.rows() != v.n_frames || v.frame_features.cols() != input_dim)
      throw data_error("video '" + v.id + "': features shape " +
                       (v.frame_features.defined() ? shape_str(v.frame_features.shape())
                                                   : std::string("<missing>")) +
                       " != [" + std::to_string(v.n_frames) + "x" + std::to_string(input_dim) +
                       "]");
    if (v.gt_scores) validate_scores(*v.gt_scores, v.n_frames, v.id, "gt_scores");
    if (v.user_annotations) {
      for (std::size_t u = 0; u < v.user_annotations->size(); ++u)
        validate_scores((*v.user_annotations)[u], v.n_frames, v.id,
                        "user_annotations[" + std::to_string(u) + "]");
    }
    if (v.segments) {
      const auto& segs = *v.segments;
      if (segs.empty()) throw data_error("video '" + v.id + "': segments list is empty");
      std::size_t expect_start = 0;
      for (const auto& [s, e] : segs) {
        if (s != expect_start)
          throw data_error("video '" + v.id + "': segments must be sorted, disjoint and cover [0, " +
                           std::to_string(v.n_frames) + "); got boundary " + std::to_string(s) +
                           " where " + std::to_string(expect_start) + " was expected");
        if (e <= s)
          throw data_error("video '" + v.id + "': empty segment [" + std::to_string(s) + ", " +
                           std::to_string(e) + ")");
        expect_start = e;
      }
      if (expect_start != v.n_frames)
        throw data_error("video '" + v.id + "': segments cover [0, " +
                         std::to_string(expect_start) + ") but n_frames is " +
                         std::to_string(v.n_frames));
    }
    if (v.teacher_repr) {
      if (v.teacher_repr->rank() != 1 || v.teacher_repr->dim(0) != teacher_dim)
        throw data_error("video '" + v.id + "': teacher_repr shape " +
                         shape_str(v.teacher_repr->shape()) + " != [" +
                         std::to_string(teacher_dim) + "]");
    }
  }
}

Dataset load_manifest(const fs::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw data_error("load_manifest: cannot open " + manifest_path.string());
  ordered_json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error("load_manifest: " + manifest_path.string() + ": " + e.what());
  }

  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  try {
    ds.name = j.at("name").get<std::string>();
    ds.input_dim = j.at("input_dim").get<std::size_t>();
    ds.teacher_dim = j.at("teacher_dim").get<std::size_t>();
    for (const auto& vj : j.at("videos")) {
      VideoSample v;
      v.id = vj.at("id").get<std::string>();
      v.n_frames = vj.at("n_frames").get<std::size_t>();
      v.frame_features = read_feature_file(base / vj.at("features").get<std::string>());
      if (vj.contains("gt_scores") && !vj["gt_scores"].is_null())
        v.gt_scores = read_feature_file(base / vj["gt_scores"].get<std::string>()).data();
      if (vj.contains("user_annotations") && !vj["user_annotations"].is_null()) {
        Tensor ann = read_feature_file(base / vj["user_annotations"].get<std::string>());
        if (ann.rank() != 2)
          throw data_error("video '" + v.id + "': user_annotations must be 2-D, got " +
                           shape_str(ann.shape()));
        std::vector<std::vector<double>> rows;
        for (std::size_t u = 0; u < ann.rows(); ++u)
          rows.emplace_back(ann.data().begin() + static_cast<std::ptrdiff_t>(u * ann.cols()),
                            ann.data().begin() + static_cast<std::ptrdiff_t>((u + 1) * ann.cols()));
        v.user_annotations = std::move(rows);
      }
      if (vj.contains("segments") && !vj["segments"].is_null()) {
        std::vector<std::pair<std::size_t, std::size_t>> segs;
        for (const auto& sj : vj["segments"])
          segs.emplace_back(sj.at(0).get<std::size_t>(), sj.at(1).get<std::size_t>());
        v.segments = std::move(segs);
      }
      if (vj.contains("teacher_repr") && !vj["teacher_repr"].is_null())
        v.teacher_repr = read_feature_file(base / vj["teacher_repr"].get<std::string>());
      ds.videos.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error("load_manifest: " + manifest_path.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  fs::create_directories(dir);
  ordered_json j;
  j["name"] = dataset.name;
  j["input_dim"] = dataset.input_dim;
  j["teacher_dim"] = dataset.teacher_dim;
  j["videos"] = ordered_json::array();
  for (const auto& v : dataset.videos) {
    ordered_json vj;
    vj["id"] = v.id;
    vj["n_frames"] = v.n_frames;
    const std::string features_file = v.id + "_features.svsf";
    write_feature_file(dir / features_file, v.frame_features);
    vj["features"] = features_file;
    if (v.gt_scores) {
      const std::string file = v.id + "_gt.svsf";
      write_feature_file(dir / file, Tensor::from_data({v.gt_scores->size()}, *v.gt_scores));
      vj["gt_scores"] = file;
    } else {
      vj["gt_scores"] = nullptr;
    }
    if (v.user_annotations && !v.user_annotations->empty()) {
      const std::size_t u = v.user_annotations->size(), n = v.n_frames;
      std::vector<double> flat;
      flat.reserve(u * n);
      for (const auto& row : *v.user_annotations) flat.insert(flat.end(), row.begin(), row.end());
      const std::string file = v.id + "_annotations.svsf";
      write_feature_file(dir / file, Tensor::from_data({u, n}, std::move(flat)));
      vj["user_annotations"] = file;
    } else {
      vj["user_annotations"] = nullptr;
    }
    if (v.segments) {
      ordered_json segs = ordered_json::array();
      for (const auto& [s, e] : *v.segments) segs.push_back({s, e});
      vj["segments"] = segs;
    } else {
      vj["segments"] = nullptr;
    }
    if (v.teacher_repr) {
      const std::string file = v.id + "_teacher.svsf";
      write_feature_file(dir / file, *v.teacher_repr);
      vj["teacher_repr"] = file;
    } else {
      vj["teacher_repr"] = nullptr;
    }
    j["videos"].push_back(std::move(vj));
  }
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw data_error("save_dataset: cannot write manifest in " + dir.string());
  f << j.dump(2) << "\n";
}

// --- synthetic generator -------------------------------------------------------

void SynthConfig::validate() const {
  if (n_videos == 0 || n_frames == 0 || input_dim == 0 || teacher_dim == 0)
    throw config_error("synth config: counts and dimensions must be positive");
  if (!(sparsity > 0.0 && sparsity < 1.0))
    throw config_error("synth config: sparsity must lie in (0, 1)");
  if (noise_scale < 0.0) throw config_error("synth config: noise scale must be >= 0");
}

std::vector<double> synth_teacher_repr(const std::vector<double>& map, std::size_t teacher_dim,
                                       const Tensor& features, const std::vector<double>& weights,
                                       double noise_scale, Rng& rng) {
  const std::size_t n = features.rows(), d = features.cols();
  if (map.size() != teacher_dim * d)
    throw dimension_error("synth_teacher_repr: map size mismatch");
  if (weights.size() != n) throw dimension_error("synth_teacher_repr: weights length mismatch");
  std::vector<double> pooled(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) pooled[j] += weights[i] * features.data()[i * d + j];
  std::vector<double> out(teacher_dim, 0.0);
  for (std::size_t t = 0; t < teacher_dim; ++t)
    for (std::size_t j = 0; j < d; ++j) out[t] += map[t * d + j] * pooled[j];
  if (noise_scale > 0.0)
    for (auto& v : out) v += noise_scale * rng.normal();
  return out;
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  // One fixed linear map shared across the whole dataset, scaled so the
  // softened teacher distributions stay temperate rather than one-hot.
  constexpr double kTeacherMapScale = 0.4;
  std::vector<double> map(cfg.teacher_dim * cfg.input_dim);
  for (auto& v : map) v = kTeacherMapScale * rng.normal();

  // Fixed unit direction that carries the importance signal inside the frame
  // features; without a content marker no scorer could tell important frames
  // from their features at all. The imprint is centered so it does not turn
  // into a shared offset across every pooled representation.
  std::vector<double> marker(cfg.input_dim);
  double marker_norm = 0.0;
  for (auto& v : marker) {
    v = rng.normal();
    marker_norm += v * v;
  }
  marker_norm = std::sqrt(marker_norm);
  for (auto& v : marker) v /= marker_norm;
  constexpr double kImprintScale = 4.0;
  constexpr double kImprintCenter = 2.0;

  Dataset ds;
  ds.name = "synthetic";
  ds.input_dim = cfg.input_dim;
  ds.teacher_dim = cfg.teacher_dim;

  const std::size_t n = cfg.n_frames;
  std::size_t n_high = static_cast<std::size_t>(std::lround(cfg.sparsity * static_cast<double>(n)));
  n_high = std::clamp<std::size_t>(n_high, 1, n - 1);

  for (std::size_t v = 0; v < cfg.n_videos; ++v) {
    VideoSample sample;
    sample.id = "v" + std::to_string(v);
    sample.n_frames = n;
    sample.frame_features = Tensor::normal({n, cfg.input_dim}, 0.0, 1.0, rng);

    // Pick n_high distinct frames for the high-importance group.
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < n_high; ++i)
      std::swap(idx[i], idx[i + rng.below(n - i)]);

    std::vector<bool> high(n, false);
    for (std::size_t i = 0; i < n_high; ++i) high[idx[i]] = true;

    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i)
      raw[i] = high[i] ? 3.0 + rng.uniform() : rng.uniform();

    // Imprint the centered raw importance onto the features along the marker.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < cfg.input_dim; ++j)
        sample.frame_features.data()[i * cfg.input_dim + j] +=
            kImprintScale * (raw[i] - kImprintCenter) * marker[j];

    // Softmax-normalized planted weights.
    double mx = raw[0];
    for (double r : raw) mx = std::max(mx, r);
    std::vector<double> planted(n);
    double denom = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      planted[i] = std::exp(raw[i] - mx);
      denom += planted[i];
    }
    for (auto& p : planted) p /= denom;

    sample.teacher_repr = Tensor::from_data(
        {cfg.teacher_dim},
        synth_teacher_repr(map, cfg.teacher_dim, sample.frame_features, planted,
                           cfg.noise_scale, rng));

    double lo = planted[0], hi = planted[0];
    for (double p : planted) {
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
    std::vector<double> gt(n);
    for (std::size_t i = 0; i < n; ++i)
      gt[i] = hi > lo ? (planted[i] - lo) / (hi - lo) : 0.5;
    sample.gt_scores = gt;

    // Three annotators: the exact scores plus two noisy copies.
    std::vector<std::vector<double>> annotations;
    annotations.push_back(gt);
    for (int a = 0; a < 2; ++a) {
      std::vector<double> noisy(n);
      for (std::size_t i = 0; i < n; ++i)
        noisy[i] = std::clamp(gt[i] + 0.05 * rng.normal(), 0.0, 1.0);
      annotations.push_back(std::move(noisy));
    }
    sample.user_annotations = std::move(annotations);

    std::vector<std::pair<std::size_t, std::size_t>> segs;
    for (std::size_t s = 0; s < n; s += 5) segs.emplace_back(s, std::min(s + 5, n));
    sample.segments = std::move(segs);

    ds.videos.push_back(std::move(sample));
  }
  ds.validate();
  return ds;
}

// --- splits -------------------------------------------------------------------

Splits make_splits(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
  const std::size_t n = dataset.videos.size();
  if (k < 2) throw config_error("make_splits: k must be >= 2");
  if (k > n)
    throw config_error("make_splits: k = " + std::to_string(k) + " exceeds " +
                       std::to_string(n) + " videos");
  std::vector<std::string> ids;
  for (const auto& v : dataset.videos) ids.push_back(v.id);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(ids[i], ids[rng.below(i + 1)]);

  Splits splits;
  splits.k = k;
  const std::size_t base = n / k, extra = n % k;
  std::size_t cursor = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t sz = base + (f < extra ? 1 : 0);
    Splits::Fold fold;
    fold.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(cursor),
                     ids.begin() + static_cast<std::ptrdiff_t>(cursor + sz));
    for (std::size_t i = 0; i < n; ++i)
      if (i < cursor || i >= cursor + sz) fold.train.push_back(ids[i]);
    cursor += sz;
    splits.folds.push_back(std::move(fold));
  }
  return splits;
}

Splits load_splits(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw data_error("load_splits: cannot open " + path.string());
  ordered_json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error("load_splits: " + path.string() + ": " + e.what());
  }
  Splits splits;
  try {
    splits.k = j.at("k").get<std::size_t>();
    for (const auto& sj : j.at("splits")) {
      Splits::Fold fold;
      for (const auto& id : sj.at("train")) fold.train.push_back(id.get<std::string>());
      for (const auto& id : sj.at("test")) fold.test.push_back(id.get<std::string>());
      splits.folds.push_back(std::move(fold));
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error("load_splits: " + path.string() + ": " + e.what());
  }
  if (splits.folds.size() != splits.k)
    throw format_error("load_splits: " + path.string() + ": k = " + std::to_string(splits.k) +
                       " but " + std::to_string(splits.folds.size()) + " splits present");
  return splits;
}

void save_splits(const Splits& splits, const fs::path& path) {
  ordered_json j;
  j["k"] = splits.k;
  j["splits"] = ordered_json::array();
  for (const auto& fold : splits.folds) {
    ordered_json sj;
    sj["train"] = fold.train;
    sj["test"] = fold.test;
    j["splits"].push_back(std::move(sj));
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw data_error("save_splits: cannot write " + path.string());
  f << j.dump(2) << "\n";
}

std::vector<std::size_t> downsample_indices(double fps_in, double fps_out,
                                            std::size_t n_frames_in) {
  if (!(fps_out > 0.0) || fps_out > fps_in)
    throw config_error("downsample_indices: need 0 < fps_out <= fps_in");
  std::vector<std::size_t> out;
  for (std::size_t j = 0;; ++j) {
    const double pos = std::floor(static_cast<double>(j) * fps_in / fps_out);
    if (pos >= static_cast<double>(n_frames_in)) break;
    out.push_back(static_cast<std::size_t>(pos));
  }
  return out;
}

}  // namespace vidsum
