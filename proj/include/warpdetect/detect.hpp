#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "warpdetect/autodiff.hpp"
#include "warpdetect/parameters.hpp"

namespace wd {

/// (cx, cy, w, h) in normalized image units.
struct Box {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
  friend bool operator==(const Box&, const Box&) = default;
};

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0.0;
  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruthBox {
  Box box;
  int class_id = 0;
  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct HeadConfig {
  std::size_t num_classes = 3;
  bool dfl = false;
  std::size_t dfl_bins = 8;
  double size_prior = 0.25;  // decoded w, h at zero raw size
  double cls_prior = 0.01;   // initial per-cell class probability
  double cls_weight = 1.0;
  double box_weight = 5.0;
  double dfl_weight = 1.0;

  std::size_t box_channels() const { return dfl ? 4 * dfl_bins : 4; }
};

/// Two 1x1 conv branches over backbone features.
struct HeadParams {
  HeadConfig cfg;
  Tensor cls_w, cls_b, box_w, box_b;

  static HeadParams create(std::size_t in_channels, const HeadConfig& cfg, std::mt19937_64& rng);
  static HeadParams zeros(std::size_t in_channels, const HeadConfig& cfg);
  void append_parameters(ParameterList& out, const std::string& prefix);
};

struct HeadOutput {
  Var cls_logits;  // [K, Hg, Wg]
  Var box_raw;     // [4 or 4B, Hg, Wg]
};

HeadOutput head_forward(Tape& tape, const HeadParams& params, Var features);

/// Plain mode: center = (cell + sigmoid(offset)) / grid, size = min(prior * exp(raw), 1).
/// DFL mode: side distances are softmax expectations over bins, in cells from the
/// cell center.
Box decode_box(const HeadConfig& cfg, const Tensor& box_raw, std::size_t i, std::size_t j);

/// Best class per cell, kept when its score >= score_threshold; boxes clipped to
/// the frame.
std::vector<Detection> decode_detections(const HeadConfig& cfg, const Tensor& cls_logits,
                                         const Tensor& box_raw, double score_threshold);

double iou(const Box& a, const Box& b);

/// 1 - IoU + rho^2/c^2 + alpha*v. Throws DomainError for a degenerate gt.
double ciou_loss(const Box& pred, const Box& gt);
/// Loss and its gradient with respect to (cx, cy, w, h) of pred.
double ciou_loss_grad(const Box& pred, const Box& gt, std::array<double, 4>& grad);

/// Cross-entropy against the two bins bracketing target, weighted by distance.
/// Throws DomainError unless 0 <= target <= B-1.
double dfl_loss(std::span<const double> logits, double target);

struct LossBreakdown {
  double total = 0.0;
  double cls = 0.0;
  double box = 0.0;
  double dfl = 0.0;
  std::size_t assigned = 0;
};

/// Grid cell (row, col) containing a box center.
std::pair<std::size_t, std::size_t> assign_cell(const Box& b, std::size_t grid_h,
                                                std::size_t grid_w);

/// (cls_weight * sum BCE + box_weight * sum CIoU [+ dfl_weight * sum DFL]) / max(1, assigned).
/// Each gt is assigned to the cell containing its center; the first gt wins a
/// contested cell's box target.
Var total_loss(Tape& tape, const HeadConfig& cfg, const HeadOutput& head,
               std::span<const GroundTruthBox> gts, LossBreakdown* breakdown = nullptr);

/// Greedy per-class suppression, order (score desc, class asc, box lexicographic).
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold,
                           double score_threshold);

/// One per line: class_id score cx cy w h.
void write_detections(std::ostream& out, std::span<const Detection> dets);
std::vector<Detection> read_detections(std::istream& in);

}  // namespace wd
