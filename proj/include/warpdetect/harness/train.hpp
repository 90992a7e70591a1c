#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "warpdetect/harness/augment.hpp"
#include "warpdetect/harness/metrics.hpp"
#include "warpdetect/harness/model.hpp"
#include "warpdetect/harness/optimizer.hpp"
#include "warpdetect/harness/records.hpp"
#include "warpdetect/harness/scene.hpp"

namespace wd::harness {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  std::size_t patience = 10;  // epochs without mAP improvement; 0 disables
  AdamWConfig optim;
  MatchOptions match;
  double nms_iou = 0.5;
  double min_score = 0.001;  // detections kept for ranking metrics
  std::uint64_t seed = 0;
  void validate() const;
};

/// Detections for one image; `index` is the position in the evaluated split.
using Detector = std::function<ImageDetections(std::size_t index, const Tensor& image)>;

Detector model_detector(const Model& model, double min_score, double nms_iou);

struct EvalResult {
  MetricsReport metrics;
  std::vector<ImageDetections> detections;  // scenes kept after augmentation
  std::vector<ImageLabels> labels;
  std::vector<std::string> notices;
};

/// Augments each scene with a per-item seed, runs the detector and scores the
/// outcome. Scenes whose labels are all dropped are skipped and noted.
EvalResult evaluate(const Detector& detector, const Dataset& data, const AugmentationSpec& aug,
                    std::uint64_t aug_seed, const MatchOptions& match);

/// Loss of one scene without recording gradients.
double scene_loss(const Model& model, const Scene& scene, LossBreakdown* breakdown = nullptr);

/// One optimizer step on the mean loss of `batch`; returns that mean.
/// Per-sample gradients are computed in parallel and summed in batch order.
/// Throws DivergenceError when the loss is not finite.
double train_step(Model& model, AdamW& opt, std::span<const Scene* const> batch);

struct TrainResult {
  RunRecord record;
  Model model;  // weights of the best validation epoch
};

TrainResult train(Variant variant, const ModelConfig& model_cfg, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& cfg, std::ostream* log = nullptr);

}  // namespace wd::harness
