#pragma once

// Single-person keypoint metrics: PCK, OKS and AP over OKS thresholds.

#include "lap/heatmap.hpp"

#include <string>
#include <vector>

namespace lap {

/// Fraction of visible ground-truth joints whose prediction lies within
/// tau * normalizer pixels. Throws when no joint is visible.
double pck(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt, double tau, double normalizer);

/// Mean over visible ground-truth joints of exp(-d^2 / (2 area k_j^2)).
/// Returns 0 when no joint is visible.
double oks(const KeypointSet& pred, const KeypointSet& gt, double area, const std::vector<double>& k);

struct Detection {
  double oks = 0;
  double confidence = 0;
};

struct ThresholdResult {
  double threshold = 0;
  double ap = 0;
  std::vector<double> precision;  // along the confidence-ranked list
  std::vector<double> recall;
};

/// 0.50, 0.55, ..., 0.95
std::vector<double> coco_oks_thresholds();

/// One detection per image, one ground truth per image. For each threshold,
/// detections ranked by descending confidence (ties keep input order) are
/// true positives when oks >= threshold; AP is the all-point interpolated
/// area under the precision-recall curve.
std::vector<ThresholdResult> average_precision(const std::vector<Detection>& detections,
                                               const std::vector<double>& thresholds);

struct EvalResult {
  std::vector<ThresholdResult> per_threshold;
  double ap = 0;  // mean over thresholds
  double ap50 = 0;
  double ap75 = 0;
  std::vector<std::pair<double, double>> pck;  // (tau, value)
  std::vector<double> joint_error;             // mean pixel error per joint over visible instances
  std::vector<double> joint_pck;               // PCK at 0.1 per joint
  int samples = 0;
};

struct EvalOptions {
  double area = 0;        // object area for OKS; 0 means image width * height
  double normalizer = 0;  // PCK normalizer; 0 means the image diagonal
  std::vector<double> pck_taus{0.05, 0.1, 0.2};
};

EvalResult evaluate(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt,
                    const KeypointSchema& schema, double image_w, double image_h, const EvalOptions& options = {});

std::string format_eval_report(const EvalResult& r, const KeypointSchema& schema);

}  // namespace lap
