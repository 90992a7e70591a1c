#include "warpdetect/harness/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "warpdetect/errors.hpp"
#include "parallel_errors.hpp"

namespace wd::harness {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  optim.validate();
  if (match.iou_match <= 0 || match.iou_match > 1) throw ConfigError("iou_match must be in (0,1]");
  if (nms_iou <= 0 || nms_iou > 1) throw ConfigError("nms_iou must be in (0,1]");
}

Detector model_detector(const Model& model, double min_score, double nms_iou) {
  return [&model, min_score, nms_iou](std::size_t, const Tensor& image) {
    return model.predict(image, min_score, nms_iou);
  };
}

EvalResult evaluate(const Detector& detector, const Dataset& data, const AugmentationSpec& aug,
                    std::uint64_t aug_seed, const MatchOptions& match) {
  if (data.empty()) throw ConfigError("evaluate: empty dataset");
  const std::size_t n = data.size();
  std::vector<Augmented> inputs(n);
  std::vector<ImageDetections> dets(n);
  std::vector<double> ms(n, 0.0);
  ParallelErrors errors(n);
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < static_cast<long>(n); ++k) {
    const auto i = static_cast<std::size_t>(k);
    errors.run(i, [&] {
      inputs[i] = augment(data[i].image, data[i].labels, aug, derive_seed(aug_seed, 1, i));
      if (inputs[i].skipped) return;
      const auto start = std::chrono::steady_clock::now();
      dets[i] = detector(i, inputs[i].image);
      ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    });
  }
  errors.rethrow();
  EvalResult out;
  double total_ms = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (inputs[i].skipped) {
      out.notices.push_back("scene " + std::to_string(i) + ": " + inputs[i].notice);
      continue;
    }
    out.detections.push_back(std::move(dets[i]));
    out.labels.push_back(std::move(inputs[i].labels));
    total_ms += ms[i];
  }
  out.metrics = score_detections(out.detections, out.labels, match);
  out.metrics.skipped_images = n - out.detections.size();
  if (!out.detections.empty()) out.metrics.mean_inference_ms = total_ms / out.detections.size();
  return out;
}

double scene_loss(const Model& model, const Scene& scene, LossBreakdown* breakdown) {
  Tape t(false);
  const HeadOutput out = model.forward(t, t.input(scene.image));
  return t.value(total_loss(t, model.cfg.head, out, scene.labels, breakdown))[0];
}

double train_step(Model& model, AdamW& opt, std::span<const Scene* const> batch) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  const ParameterList& params = opt.parameters();
  const std::size_t b = batch.size();
  std::vector<double> losses(b);
  std::vector<std::vector<std::vector<double>>> grads(b);
  ParallelErrors errors(b);
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < static_cast<long>(b); ++k) {
    const auto i = static_cast<std::size_t>(k);
    errors.run(i, [&] {
      Tape t;
      const HeadOutput out = model.forward(t, t.input(batch[i]->image));
      const Var loss = total_loss(t, model.cfg.head, out, batch[i]->labels);
      losses[i] = t.value(loss)[0];
      t.backward(loss);
      grads[i].resize(params.size());
      for (std::size_t p = 0; p < params.size(); ++p) {
        const Tensor* g = t.parameter_grad(*params[p].second);
        if (g) grads[i][p].assign(g->data().begin(), g->data().end());
        else grads[i][p].assign(params[p].second->size(), 0.0);
      }
    });
  }
  if (errors.any()) {
    // Non-finite weights surface as degenerate boxes deep in the loss.
    for (const auto& [name, t] : params) {
      if (!t->all_finite()) throw DivergenceError("parameter " + name + " is not finite");
    }
    errors.rethrow();
  }
  double mean = 0.0;
  for (double l : losses) mean += l;
  mean /= static_cast<double>(b);
  if (!std::isfinite(mean)) throw DivergenceError("training loss is not finite");
  std::vector<std::vector<double>> total = std::move(grads[0]);
  for (std::size_t i = 1; i < b; ++i) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (std::size_t e = 0; e < total[p].size(); ++e) total[p][e] += grads[i][p][e];
    }
  }
  for (auto& g : total) {
    for (double& v : g) v /= static_cast<double>(b);
  }
  opt.step(total);
  return mean;
}

TrainResult train(Variant variant, const ModelConfig& model_cfg, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw ConfigError("train: empty split");
  TrainResult res{RunRecord{}, build_model(variant, model_cfg, derive_seed(cfg.seed, 11, 0))};
  Model model = res.model;
  AdamW opt(model.parameters(), cfg.optim);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 12, 0));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  RunRecord& rec = res.record;
  rec.variant = variant;
  rec.seed = cfg.seed;
  double best_map = -1.0;
  std::size_t since_best = 0;
  const AugmentationSpec no_aug;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const Scene*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
        batch.push_back(&train_set[order[k]]);
      }
      try {
        loss_sum += train_step(model, opt, batch);
      } catch (const DivergenceError&) {
        throw DivergenceError("run " + to_string(variant) + " seed " + std::to_string(cfg.seed) +
                              " diverged at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(steps) + ": loss is not finite");
      }
      ++steps;
    }
    rec.train_loss.push_back(loss_sum / static_cast<double>(steps));
    const EvalResult ev =
        evaluate(model_detector(model, cfg.min_score, cfg.nms_iou), val_set, no_aug, 0, cfg.match);
    rec.per_epoch_metrics.push_back(ev.metrics);
    if (log) {
      *log << to_string(variant) << " seed " << cfg.seed << " epoch " << epoch + 1 << "/"
           << cfg.epochs << " loss " << rec.train_loss.back() << " map50 " << ev.metrics.map50
           << " precision " << ev.metrics.precision << std::endl;
    }
    if (ev.metrics.map50 > best_map) {
      best_map = ev.metrics.map50;
      rec.best_epoch = epoch;
      rec.final = ev.metrics;
      rec.confusion = confusion_matrix(ev.detections, ev.labels, cfg.match);
      res.model = model;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      rec.stopped_early = epoch + 1 < cfg.epochs;
      break;
    }
  }
  return res;
}

}  // namespace wd::harness
