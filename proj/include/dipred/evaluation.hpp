#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dipred/classifier.hpp"
#include "dipred/labels.hpp"
#include "dipred/prednet/model.hpp"
#include "dipred/rank_pooling.hpp"

namespace dipred::eval {

// Per-frame marker for frames at which no prediction has been made yet.
inline constexpr ClassId kNoPrediction = -3;

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

// Mean of mse(DI_{p+C-1}, DI_{p+C}) over every context position p.
template <typename T>
double prev_baseline_mse(const std::vector<Tensor<T>>& seq, std::size_t context) {
  if (context == 0 || seq.size() <= context)
    throw Error("prev_baseline_mse: need more than " + std::to_string(context) + " DIs, got " +
                std::to_string(seq.size()));
  double s = 0.0;
  for (std::size_t p = 0; p + context < seq.size(); ++p) s += mse(seq[p + context - 1], seq[p + context]);
  return s / static_cast<double>(seq.size() - context);
}

// One test video: its DI sequence (with next_label set) and raw frame labels.
struct VideoDIs {
  std::string name;
  std::vector<DynamicImage> dis;
  LabelTimeline timeline;
  std::size_t frames = 0;
};

struct VideoMse {
  std::string name;
  double model_mse = 0.0;
  double prev_mse = 0.0;
  std::size_t count = 0;
};

struct Ratio {
  std::size_t correct = 0;
  std::size_t total = 0;
  double value() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct TdStats {
  long long sum = 0;  // frames
  std::size_t count = 0;
  double mean() const { return count ? static_cast<double>(sum) / static_cast<double>(count) : 0.0; }
};

struct MetricsReport {
  double model_mse = 0.0;
  double prev_mse = 0.0;
  double model_mse_raw = 0.0;
  double prev_mse_raw = 0.0;
  std::size_t mse_count = 0;
  std::vector<VideoMse> per_video;
  std::map<std::size_t, double> rollout_mse;  // k -> mean mse of the k-th fed-back prediction
  std::size_t rollout_count = 0;
  bool classifier_present = false;
  std::map<std::size_t, Ratio> accuracy_by_horizon;  // k -> ratio
  Ratio baseline_prev_accuracy;                       // last observed DI classified instead of a prediction
  std::map<ClassId, TdStats> avg_of_td;
};

namespace detail {

inline std::vector<Tensor<float>> normalized(const std::vector<DynamicImage>& dis, std::size_t begin, std::size_t n) {
  std::vector<Tensor<float>> out;
  for (std::size_t i = begin; i < begin + n; ++i) out.push_back(dis[i].normalized());
  return out;
}

}  // namespace detail

// Slides the context over each video; model and copy-previous errors are
// averaged over the same positions.
inline void evaluate_prediction(const prednet::PredNetModel<float>& model, const std::vector<VideoDIs>& videos,
                                MetricsReport& report) {
  const std::size_t C = model.cfg.context;
  double m = 0, pv = 0, mr = 0, pr = 0;
  std::size_t n = 0;
  report.per_video.clear();
  for (const auto& v : videos) {
    VideoMse vm{v.name, 0.0, 0.0, 0};
    for (std::size_t p = 0; p + C < v.dis.size(); ++p) {
      const auto ctx = detail::normalized(v.dis, p, C);
      const auto pred = prednet::predict_next<float>(model, ctx);
      const auto& last = v.dis[p + C - 1];
      const auto& next = v.dis[p + C];
      const auto actual = next.normalized();
      const double em = mse(pred, actual), ep = mse(ctx.back(), actual);
      vm.model_mse += em;
      vm.prev_mse += ep;
      ++vm.count;
      mr += mse(last.denormalize(pred), next.values);
      pr += mse(last.values, next.values);
    }
    m += vm.model_mse;
    pv += vm.prev_mse;
    n += vm.count;
    if (vm.count) {
      vm.model_mse /= static_cast<double>(vm.count);
      vm.prev_mse /= static_cast<double>(vm.count);
    }
    report.per_video.push_back(vm);
  }
  report.mse_count = n;
  const double d = n ? static_cast<double>(n) : 1.0;
  report.model_mse = m / d;
  report.prev_mse = pv / d;
  report.model_mse_raw = mr / d;
  report.prev_mse_raw = pr / d;
}

// Mean mse of the k-th rolled-out DI against DI p + C - 1 + k, over the
// positions that have all K future DIs.
inline void rollout_mse(const prednet::PredNetModel<float>& model, const std::vector<VideoDIs>& videos, std::size_t K,
                        MetricsReport& report) {
  const std::size_t C = model.cfg.context;
  std::vector<double> acc(K, 0.0);
  std::size_t n = 0;
  for (const auto& v : videos)
    for (std::size_t p = 0; p + C - 1 + K < v.dis.size(); ++p) {
      const auto roll = prednet::predict_rollout<float>(model, detail::normalized(v.dis, p, C), K);
      for (std::size_t k = 1; k <= K; ++k) acc[k - 1] += mse(roll[k - 1], v.dis[p + C - 1 + k].normalized());
      ++n;
    }
  report.rollout_mse.clear();
  report.rollout_count = n;
  for (std::size_t k = 1; k <= K; ++k) report.rollout_mse[k] = n ? acc[k - 1] / static_cast<double>(n) : 0.0;
}

// Classifies the k-th rolled-out DI against the next-action label of DI
// p + C - 1 + k. Only positions with all K future DIs are used, and pairs
// whose ground truth is END are skipped.
inline void horizon_accuracy(const prednet::PredNetModel<float>& model,
                             const classifier::ClassifierModel<float>& clf, const std::vector<VideoDIs>& videos,
                             std::size_t K, MetricsReport& report) {
  const std::size_t C = model.cfg.context;
  report.classifier_present = true;
  report.accuracy_by_horizon.clear();
  for (std::size_t k = 1; k <= K; ++k) report.accuracy_by_horizon[k] = {};
  report.baseline_prev_accuracy = {};
  for (const auto& v : videos) {
    for (std::size_t p = 0; p + C - 1 + K < v.dis.size(); ++p) {
      const auto ctx = detail::normalized(v.dis, p, C);
      const auto roll = prednet::predict_rollout<float>(model, ctx, K);
      for (std::size_t k = 1; k <= K; ++k) {
        const auto& truth = v.dis[p + C - 1 + k].next_label;
        if (!truth) throw Error("horizon_accuracy: DI without next-action label in " + v.name);
        if (!is_action(*truth)) continue;
        auto& r = report.accuracy_by_horizon[k];
        ++r.total;
        r.correct += classifier::classify(clf, roll[k - 1]).label == *truth;
        if (k == 1) {
          ++report.baseline_prev_accuracy.total;
          report.baseline_prev_accuracy.correct += classifier::classify(clf, ctx.back()).label == *truth;
        }
      }
    }
  }
}

// Expands one prediction per context position into per-frame labels. The
// prediction for position p is available at the last frame of its last
// context window and holds until the next prediction.
inline std::vector<ClassId> hold_predictions(std::size_t frames, const std::vector<std::size_t>& at,
                                             const std::vector<ClassId>& labels) {
  if (at.size() != labels.size()) throw Error("hold_predictions: length mismatch");
  std::vector<ClassId> out(frames, kNoPrediction);
  for (std::size_t i = 0; i < at.size(); ++i) {
    const std::size_t end = i + 1 < at.size() ? at[i + 1] : frames;
    for (std::size_t f = at[i]; f < std::min(end, frames); ++f) out[f] = labels[i];
  }
  return out;
}

// For each action start s of class c (s > 0): TD = s - t*, with t* the
// earliest frame such that every frame in [t*, s) predicts c; 0 if frame
// s - 1 does not predict c.
inline std::map<ClassId, TdStats> avg_of_td(const std::vector<ClassId>& predicted, const LabelTimeline& timeline) {
  if (predicted.size() != timeline.size()) throw Error("avg_of_td: prediction and timeline lengths differ");
  std::map<ClassId, TdStats> out;
  for (const auto& seg : timeline.segments()) {
    if (!is_action(seg.label) || seg.begin == 0) continue;
    std::size_t t = seg.begin;
    while (t > 0 && predicted[t - 1] == seg.label) --t;
    auto& st = out[seg.label];
    st.sum += static_cast<long long>(seg.begin - t);
    ++st.count;
  }
  return out;
}

inline void merge_td(std::map<ClassId, TdStats>& into, const std::map<ClassId, TdStats>& add) {
  for (const auto& [c, s] : add) {
    into[c].sum += s.sum;
    into[c].count += s.count;
  }
}

// Single-step predictions per video, held per frame, scored by avg_of_td.
inline void temporal_distance(const prednet::PredNetModel<float>& model, const classifier::ClassifierModel<float>& clf,
                              const std::vector<VideoDIs>& videos, MetricsReport& report) {
  const std::size_t C = model.cfg.context;
  report.avg_of_td.clear();
  for (const auto& v : videos) {
    std::vector<std::size_t> at;
    std::vector<ClassId> labels;
    for (std::size_t p = 0; p + C <= v.dis.size(); ++p) {
      const auto& last = v.dis[p + C - 1];
      at.push_back(last.start_frame + last.window - 1);
      labels.push_back(classifier::classify(clf, prednet::predict_next<float>(model, detail::normalized(v.dis, p, C))).label);
    }
    merge_td(report.avg_of_td, avg_of_td(hold_predictions(v.timeline.size(), at, labels), v.timeline));
  }
}

// ---- report files ----

struct ReportRow {
  std::string metric;
  std::string name;
  double value;
  std::size_t count;
  bool operator==(const ReportRow&) const = default;
};

inline std::vector<ReportRow> report_rows(const MetricsReport& r) {
  std::vector<ReportRow> rows{
      {"mse", "model", r.model_mse, r.mse_count},
      {"mse", "prev", r.prev_mse, r.mse_count},
      {"mse_raw", "model", r.model_mse_raw, r.mse_count},
      {"mse_raw", "prev", r.prev_mse_raw, r.mse_count},
  };
  for (const auto& [k, v] : r.rollout_mse) rows.push_back({"rollout_mse", "k" + std::to_string(k), v, r.rollout_count});
  for (const auto& v : r.per_video) {
    rows.push_back({"video_mse_model", v.name, v.model_mse, v.count});
    rows.push_back({"video_mse_prev", v.name, v.prev_mse, v.count});
  }
  if (!r.classifier_present) {
    rows.push_back({"classifier", "absent", 0.0, 0});
    return rows;
  }
  for (const auto& [k, a] : r.accuracy_by_horizon) rows.push_back({"accuracy", "k" + std::to_string(k), a.value(), a.total});
  rows.push_back({"accuracy", "baseline_prev_di", r.baseline_prev_accuracy.value(), r.baseline_prev_accuracy.total});
  for (const auto& [c, s] : r.avg_of_td) rows.push_back({"avg_of_td", class_name(c), s.mean(), s.count});
  return rows;
}

inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// CSV `metric,name,value,count`; values are written with round-trip precision.
inline void write_report(const MetricsReport& r, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open for writing: " + path);
  os << "metric,name,value,count\n";
  for (const auto& row : report_rows(r))
    os << row.metric << ',' << row.name << ',' << format_value(row.value) << ',' << row.count << '\n';
  if (!os) throw Error("write failed: " + path);
}

inline void write_horizon_csv(const MetricsReport& r, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open for writing: " + path);
  os << "horizon,accuracy\n";
  for (const auto& [k, a] : r.accuracy_by_horizon) os << k << ',' << format_value(a.value()) << '\n';
  if (!os) throw Error("write failed: " + path);
}

inline std::vector<ReportRow> read_report(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "metric,name,value,count") throw Error("report missing header: " + path);
  std::vector<ReportRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string metric, name, value, count;
    if (!std::getline(ls, metric, ',') || !std::getline(ls, name, ',') || !std::getline(ls, value, ',') ||
        !std::getline(ls, count))
      throw Error("malformed report row in " + path + ": " + line);
    rows.push_back({metric, name, std::strtod(value.c_str(), nullptr), std::stoul(count)});
  }
  return rows;
}

}  // namespace dipred::eval
