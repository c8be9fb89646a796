#include "lap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace lap {
namespace {

void check_matched(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(pred.size()) + " predictions for " +
                                std::to_string(gt.size()) + " ground-truth samples");
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (pred[i].size() != gt[i].size()) throw std::invalid_argument("metrics: joint count differs at sample " + std::to_string(i));
  }
}

double distance(const Keypoint& a, const Keypoint& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

double pck(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt, double tau, double normalizer) {
  check_matched(pred, gt);
  if (!(normalizer > 0)) throw std::invalid_argument("pck: normalizer must be positive");
  std::int64_t hits = 0, total = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    for (std::size_t j = 0; j < gt[i].joints.size(); ++j) {
      if (!gt[i].joints[j].visible) continue;
      ++total;
      if (distance(pred[i].joints[j], gt[i].joints[j]) <= tau * normalizer) ++hits;
    }
  }
  if (total == 0) throw std::invalid_argument("pck: no visible ground-truth joints");
  return static_cast<double>(hits) / static_cast<double>(total);
}

double oks(const KeypointSet& pred, const KeypointSet& gt, double area, const std::vector<double>& k) {
  if (!(area > 0)) throw std::invalid_argument("oks: area must be positive");
  if (pred.size() != gt.size() || static_cast<int>(k.size()) != gt.size()) {
    throw std::invalid_argument("oks: prediction, ground truth and k disagree on joint count");
  }
  double sum = 0;
  int visible = 0;
  for (std::size_t j = 0; j < gt.joints.size(); ++j) {
    if (!gt.joints[j].visible) continue;
    const double dx = pred.joints[j].x - gt.joints[j].x, dy = pred.joints[j].y - gt.joints[j].y;
    sum += std::exp(-(dx * dx + dy * dy) / (2 * area * k[j] * k[j]));
    ++visible;
  }
  return visible ? sum / visible : 0.0;
}

std::vector<double> coco_oks_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

std::vector<ThresholdResult> average_precision(const std::vector<Detection>& detections,
                                               const std::vector<double>& thresholds) {
  if (detections.empty()) throw std::invalid_argument("average_precision: no detections");
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].confidence > detections[b].confidence; });
  const double num_gt = static_cast<double>(detections.size());

  std::vector<ThresholdResult> out;
  for (double t : thresholds) {
    ThresholdResult r{t, 0.0, {}, {}};
    double tp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (detections[order[i]].oks >= t) tp += 1;
      r.precision.push_back(tp / static_cast<double>(i + 1));
      r.recall.push_back(tp / num_gt);
    }
    // All-point interpolation: precision envelope from the right.
    std::vector<double> envelope = r.precision;
    for (std::size_t i = envelope.size() - 1; i > 0; --i) envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
    double prev_recall = 0;
    for (std::size_t i = 0; i < envelope.size(); ++i) {
      r.ap += (r.recall[i] - prev_recall) * envelope[i];
      prev_recall = r.recall[i];
    }
    out.push_back(std::move(r));
  }
  return out;
}

EvalResult evaluate(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt,
                    const KeypointSchema& schema, double image_w, double image_h, const EvalOptions& options) {
  check_matched(pred, gt);
  if (gt.empty()) throw std::invalid_argument("evaluate: empty sample list");
  const double area = options.area > 0 ? options.area : image_w * image_h;
  const double norm = options.normalizer > 0 ? options.normalizer : std::hypot(image_w, image_h);

  EvalResult r;
  r.samples = static_cast<int>(gt.size());
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    dets.push_back({oks(pred[i], gt[i], area, schema.oks_k), pred[i].mean_confidence()});
  }
  const auto thresholds = coco_oks_thresholds();
  r.per_threshold = average_precision(dets, thresholds);
  for (const auto& t : r.per_threshold) r.ap += t.ap;
  r.ap /= static_cast<double>(r.per_threshold.size());
  r.ap50 = r.per_threshold[0].ap;
  r.ap75 = r.per_threshold[5].ap;
  for (double tau : options.pck_taus) r.pck.emplace_back(tau, pck(pred, gt, tau, norm));

  const int joints = schema.size();
  for (int j = 0; j < joints; ++j) {
    double err = 0;
    int n = 0, hits = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const Keypoint& g = gt[i].joints[static_cast<std::size_t>(j)];
      if (!g.visible) continue;
      const double d = distance(pred[i].joints[static_cast<std::size_t>(j)], g);
      err += d;
      hits += d <= 0.1 * norm ? 1 : 0;
      ++n;
    }
    r.joint_error.push_back(n ? err / n : std::nan(""));
    r.joint_pck.push_back(n ? static_cast<double>(hits) / n : std::nan(""));
  }
  return r;
}

std::string format_eval_report(const EvalResult& r, const KeypointSchema& schema) {
  std::string out;
  char buf[160];
  auto line = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof buf, fmt, args...);
    out += buf;
  };
  out += "# lap eval report v1\n";
  line("samples %d\n", r.samples);
  line("AP %.4f\n", r.ap);
  line("AP50 %.4f\n", r.ap50);
  line("AP75 %.4f\n", r.ap75);
  for (const auto& [tau, v] : r.pck) line("PCK@%.2f %.4f\n", tau, v);
  for (const auto& t : r.per_threshold) line("ap_at %.2f %.4f\n", t.threshold, t.ap);
  for (int j = 0; j < schema.size(); ++j) {
    line("joint %s mean_error_px %.4f pck@0.10 %.4f\n", schema.joints[static_cast<std::size_t>(j)].c_str(),
         r.joint_error[static_cast<std::size_t>(j)], r.joint_pck[static_cast<std::size_t>(j)]);
  }
  return out;
}

}  // namespace lap
