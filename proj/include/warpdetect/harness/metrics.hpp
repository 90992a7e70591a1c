#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "warpdetect/detect.hpp"

namespace wd::harness {

using ImageDetections = std::vector<Detection>;
using ImageLabels = std::vector<GroundTruthBox>;

struct MetricsReport {
  double accuracy = 0.0;  // exact-scene accuracy: images with zero FP and zero FN
  double precision = 0.0;
  double recall = 0.0;
  double map50 = 0.0;
  double f1 = 0.0;
  double mean_inference_ms = 0.0;
  std::vector<double> per_class_ap;
  std::size_t false_positive_count = 0;
  std::size_t true_positive_count = 0;
  std::size_t false_negative_count = 0;
  std::size_t images = 0;
  std::size_t skipped_images = 0;
};

struct MatchOptions {
  double iou_match = 0.5;
  double score_threshold = 0.25;
  std::size_t num_classes = 3;
};

/// Per image: detections in descending score order each take the unmatched
/// gt with the highest IoU >= iou_match (same class unless class_agnostic).
/// Returns for each detection the matched gt index or -1.
std::vector<long> match_image(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                              double iou_match, bool class_agnostic);

/// All-point interpolated AP per class, averaged over classes present in gts.
/// Zero when there are no gts.
double compute_map(std::span<const ImageDetections> dets, std::span<const ImageLabels> gts,
                   std::size_t num_classes, double iou_match = 0.5,
                   std::vector<double>* per_class_ap = nullptr);

/// Counts at score_threshold plus mAP over every detection.
MetricsReport score_detections(std::span<const ImageDetections> dets,
                               std::span<const ImageLabels> gts, const MatchOptions& opts);

/// (K+1) x (K+1) counts, row = gt class, column = predicted class, index K is
/// background. Matching ignores class so mislabels land off the diagonal.
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const ImageDetections> dets,
                                                       std::span<const ImageLabels> gts,
                                                       const MatchOptions& opts);

}  // namespace wd::harness
