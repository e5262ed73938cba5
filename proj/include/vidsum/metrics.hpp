#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidsum/data.hpp"

namespace vidsum {

// Rank metrics are undefined for n < 2 or an all-tied side; callers must
// exclude undefined values from averages instead of treating them as zero.
struct RankResult {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
};

// Kendall's tau-b: (C - D) / sqrt((C + D + T_pred)(C + D + T_gt)), where the
// T terms count pairs tied on exactly one side.
RankResult kendall_tau(std::span<const double> pred, std::span<const double> gt);

// Spearman's rho: Pearson correlation of average ranks (ties share the mean rank).
RankResult spearman_rho(std::span<const double> pred, std::span<const double> gt);

// Exact 0/1 knapsack maximizing total value under the weight capacity. Among
// optimal solutions the lexicographically smallest index set wins.
std::vector<std::size_t> knapsack_select(const std::vector<double>& values,
                                         const std::vector<std::size_t>& weights,
                                         std::size_t capacity);

struct SummarySelection {
  std::vector<std::size_t> segment_indices;
  std::vector<std::size_t> frames;  // sorted union of the selected segments
  std::size_t total_frames = 0;
  std::size_t budget = 0;
};

// Segment value = mean frame score inside the segment; capacity
// = floor(budget_ratio * n).
SummarySelection generate_summary(
    std::span<const double> frame_scores,
    const std::vector<std::pair<std::size_t, std::size_t>>& segments, double budget_ratio);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  bool defined = true;  // false only when both sets are empty
};

PRF f_score(const std::vector<std::size_t>& generated, const std::vector<std::size_t>& user);

struct VideoMetrics {
  std::string id;
  RankResult tau, rho;
  double precision = 0.0, recall = 0.0, f = 0.0;
  bool f_defined = false;
};

// Ranks and summary overlaps against each annotator, averaged per video.
VideoMetrics evaluate_video(std::span<const double> pred_scores, const VideoSample& sample,
                            double budget_ratio);

struct MetricsReport {
  std::optional<std::size_t> split_index;
  double budget_ratio = 0.15;
  std::vector<VideoMetrics> per_video;

  // Means over the videos where the metric is defined.
  double mean_tau() const;
  double mean_rho() const;
  double mean_precision() const;
  double mean_recall() const;
  double mean_f() const;

  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
};

MetricsReport evaluate_videos(
    const std::vector<std::pair<std::string, std::vector<double>>>& predictions,
    const Dataset& dataset, double budget_ratio, std::optional<std::size_t> split_index = {});

}  // namespace vidsum
