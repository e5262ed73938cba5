#include "vidsum/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "vidsum/errors.hpp"
#include "vidsum/text.hpp"

namespace vidsum {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

RankResult kendall_tau(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size())
    throw dimension_error("kendall_tau: lengths " + std::to_string(pred.size()) + " vs " +
                          std::to_string(gt.size()));
  const std::size_t n = pred.size();
  if (n < 2) return {};
  double concordant = 0, discordant = 0, ties_pred = 0, ties_gt = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = pred[j] - pred[i];
      const double dy = gt[j] - gt[i];
      if (dx == 0.0 && dy == 0.0) continue;  // tied on both sides: ignored
      if (dx == 0.0)
        ties_pred += 1;
      else if (dy == 0.0)
        ties_gt += 1;
      else if (dx * dy > 0.0)
        concordant += 1;
      else
        discordant += 1;
    }
  const double f1 = concordant + discordant + ties_pred;
  const double f2 = concordant + discordant + ties_gt;
  if (f1 == 0.0 || f2 == 0.0) return {};
  return {(concordant - discordant) / std::sqrt(f1 * f2), true};
}

namespace {

// 1-based average ranks; tied values share the mean of their rank range.
std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

RankResult spearman_rho(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size())
    throw dimension_error("spearman_rho: lengths " + std::to_string(pred.size()) + " vs " +
                          std::to_string(gt.size()));
  const std::size_t n = pred.size();
  if (n < 2) return {};
  const std::vector<double> ra = average_ranks(pred);
  const std::vector<double> rb = average_ranks(gt);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = ra[i] - ma, db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) return {};
  return {cov / std::sqrt(va * vb), true};
}

std::vector<std::size_t> knapsack_select(const std::vector<double>& values,
                                         const std::vector<std::size_t>& weights,
                                         std::size_t capacity) {
  if (values.size() != weights.size())
    throw dimension_error("knapsack_select: " + std::to_string(values.size()) + " values vs " +
                          std::to_string(weights.size()) + " weights");
  const std::size_t k = values.size();
  for (std::size_t w : weights)
    if (w == 0) throw contract_error("knapsack_select: weights must be positive");

  // best[i][c]: max value achievable with items i.. under capacity c.
  std::vector<std::vector<double>> best(k + 1, std::vector<double>(capacity + 1, 0.0));
  for (std::size_t i = k; i-- > 0;)
    for (std::size_t c = 0; c <= capacity; ++c) {
      double b = best[i + 1][c];
      if (weights[i] <= c) b = std::max(b, values[i] + best[i + 1][c - weights[i]]);
      best[i][c] = b;
    }

  // Greedy front-to-back reconstruction. Taking item i whenever the optimum
  // stays reachable yields the lexicographically smallest optimal set, except
  // that a zero optimum is realized by the empty set.
  std::vector<std::size_t> chosen;
  std::size_t c = capacity;
  for (std::size_t i = 0; i < k; ++i) {
    if (best[i][c] <= 0.0) break;
    if (weights[i] <= c && values[i] + best[i + 1][c - weights[i]] == best[i][c]) {
      chosen.push_back(i);
      c -= weights[i];
    }
  }
  return chosen;
}

namespace {

void validate_segments(const std::vector<std::pair<std::size_t, std::size_t>>& segments,
                       std::size_t n) {
  std::size_t expect = 0;
  if (segments.empty()) throw data_error("segments: empty list cannot cover [0, " +
                                         std::to_string(n) + ")");
  for (const auto& [s, e] : segments) {
    if (s != expect || e <= s)
      throw data_error("segments: invalid interval [" + std::to_string(s) + ", " +
                       std::to_string(e) + ") after position " + std::to_string(expect));
    expect = e;
  }
  if (expect != n)
    throw data_error("segments: cover [0, " + std::to_string(expect) + ") but n is " +
                     std::to_string(n));
}

}  // namespace

SummarySelection generate_summary(
    std::span<const double> frame_scores,
    const std::vector<std::pair<std::size_t, std::size_t>>& segments, double budget_ratio) {
  if (!(budget_ratio > 0.0 && budget_ratio <= 1.0))
    throw config_error("generate_summary: budget_ratio must lie in (0, 1]");
  const std::size_t n = frame_scores.size();
  validate_segments(segments, n);

  std::vector<double> values;
  std::vector<std::size_t> weights;
  for (const auto& [s, e] : segments) {
    double total = 0.0;
    for (std::size_t i = s; i < e; ++i) total += frame_scores[i];
    values.push_back(total / static_cast<double>(e - s));
    weights.push_back(e - s);
  }

  SummarySelection sel;
  sel.budget = static_cast<std::size_t>(std::floor(budget_ratio * static_cast<double>(n)));
  sel.segment_indices = knapsack_select(values, weights, sel.budget);
  for (std::size_t si : sel.segment_indices)
    for (std::size_t i = segments[si].first; i < segments[si].second; ++i)
      sel.frames.push_back(i);
  sel.total_frames = sel.frames.size();
  return sel;
}

PRF f_score(const std::vector<std::size_t>& generated, const std::vector<std::size_t>& user) {
  if (generated.empty() && user.empty()) return {0.0, 0.0, 0.0, false};
  std::vector<std::size_t> a = generated, b = user;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  const double overlap = static_cast<double>(inter.size());
  PRF out;
  out.precision = a.empty() ? 0.0 : overlap / static_cast<double>(a.size());
  out.recall = b.empty() ? 0.0 : overlap / static_cast<double>(b.size());
  out.f = (out.precision + out.recall) > 0.0
              ? 2.0 * out.recall * out.precision / (out.recall + out.precision)
              : 0.0;
  return out;
}

VideoMetrics evaluate_video(std::span<const double> pred_scores, const VideoSample& sample,
                            double budget_ratio) {
  if (!sample.user_annotations || sample.user_annotations->empty())
    throw data_error("evaluate_video: video '" + sample.id + "' has no user annotations");
  if (!sample.segments)
    throw data_error("evaluate_video: video '" + sample.id + "' has no segments");
  if (pred_scores.size() != sample.n_frames)
    throw dimension_error("evaluate_video: " + std::to_string(pred_scores.size()) +
                          " scores for " + std::to_string(sample.n_frames) + " frames");

  VideoMetrics vm;
  vm.id = sample.id;

  double tau_sum = 0, rho_sum = 0;
  std::size_t tau_n = 0, rho_n = 0;
  const SummarySelection generated = generate_summary(pred_scores, *sample.segments,
                                                      budget_ratio);
  double p_sum = 0, r_sum = 0, f_sum = 0;
  std::size_t f_n = 0;

  for (const auto& annotation : *sample.user_annotations) {
    const RankResult t = kendall_tau(pred_scores, annotation);
    if (t.defined) {
      tau_sum += t.value;
      ++tau_n;
    }
    const RankResult r = spearman_rho(pred_scores, annotation);
    if (r.defined) {
      rho_sum += r.value;
      ++rho_n;
    }
    const SummarySelection user_summary =
        generate_summary(annotation, *sample.segments, budget_ratio);
    const PRF prf = f_score(generated.frames, user_summary.frames);
    if (prf.defined) {
      p_sum += prf.precision;
      r_sum += prf.recall;
      f_sum += prf.f;
      ++f_n;
    }
  }

  if (tau_n) vm.tau = {tau_sum / static_cast<double>(tau_n), true};
  if (rho_n) vm.rho = {rho_sum / static_cast<double>(rho_n), true};
  if (f_n) {
    vm.precision = p_sum / static_cast<double>(f_n);
    vm.recall = r_sum / static_cast<double>(f_n);
    vm.f = f_sum / static_cast<double>(f_n);
    vm.f_defined = true;
  }
  return vm;
}

namespace {

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace

double MetricsReport::mean_tau() const {
  std::vector<double> v;
  for (const auto& m : per_video)
    if (m.tau.defined) v.push_back(m.tau.value);
  return mean_of(v);
}

double MetricsReport::mean_rho() const {
  std::vector<double> v;
  for (const auto& m : per_video)
    if (m.rho.defined) v.push_back(m.rho.value);
  return mean_of(v);
}

double MetricsReport::mean_precision() const {
  std::vector<double> v;
  for (const auto& m : per_video)
    if (m.f_defined) v.push_back(m.precision);
  return mean_of(v);
}

double MetricsReport::mean_recall() const {
  std::vector<double> v;
  for (const auto& m : per_video)
    if (m.f_defined) v.push_back(m.recall);
  return mean_of(v);
}

double MetricsReport::mean_f() const {
  std::vector<double> v;
  for (const auto& m : per_video)
    if (m.f_defined) v.push_back(m.f);
  return mean_of(v);
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["protocol"] = nlohmann::ordered_json::object();
  if (split_index)
    j["protocol"]["split_index"] = *split_index;
  else
    j["protocol"]["split_index"] = nullptr;
  j["protocol"]["budget_ratio"] = budget_ratio;
  j["protocol"]["annotator_averaging"] = "per annotator within each video, then across videos";

  auto number_or_null = [](double v, bool defined) {
    return defined ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
  };

  j["videos"] = nlohmann::ordered_json::array();
  for (const auto& m : per_video) {
    nlohmann::ordered_json vj;
    vj["id"] = m.id;
    vj["tau"] = number_or_null(m.tau.value, m.tau.defined);
    vj["tau_defined"] = m.tau.defined;
    vj["rho"] = number_or_null(m.rho.value, m.rho.defined);
    vj["rho_defined"] = m.rho.defined;
    vj["precision"] = number_or_null(m.precision, m.f_defined);
    vj["recall"] = number_or_null(m.recall, m.f_defined);
    vj["f_score"] = number_or_null(m.f, m.f_defined);
    vj["f_defined"] = m.f_defined;
    j["videos"].push_back(std::move(vj));
  }

  nlohmann::ordered_json means;
  means["tau"] = number_or_null(mean_tau(), !std::isnan(mean_tau()));
  means["rho"] = number_or_null(mean_rho(), !std::isnan(mean_rho()));
  means["precision"] = number_or_null(mean_precision(), !std::isnan(mean_precision()));
  means["recall"] = number_or_null(mean_recall(), !std::isnan(mean_recall()));
  means["f_score"] = number_or_null(mean_f(), !std::isnan(mean_f()));
  j["means"] = std::move(means);
  return j;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "id,tau,rho,precision,recall,f_score\n";
  for (const auto& m : per_video) {
    os << m.id << ",";
    os << (m.tau.defined ? format_double(m.tau.value) : "nan") << ",";
    os << (m.rho.defined ? format_double(m.rho.value) : "nan") << ",";
    os << (m.f_defined ? format_double(m.precision) : "nan") << ",";
    os << (m.f_defined ? format_double(m.recall) : "nan") << ",";
    os << (m.f_defined ? format_double(m.f) : "nan") << "\n";
  }
  return os.str();
}

MetricsReport evaluate_videos(
    const std::vector<std::pair<std::string, std::vector<double>>>& predictions,
    const Dataset& dataset, double budget_ratio, std::optional<std::size_t> split_index) {
  MetricsReport report;
  report.split_index = split_index;
  report.budget_ratio = budget_ratio;
  for (const auto& [id, scores] : predictions) {
    const VideoSample* sample = dataset.find(id);
    if (!sample) throw data_error("evaluate_videos: unknown video id '" + id + "'");
    report.per_video.push_back(evaluate_video(scores, *sample, budget_ratio));
  }
  return report;
}

}  // namespace vidsum
