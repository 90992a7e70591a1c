#include "warpdetect/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <tuple>

#include "warpdetect/dual.hpp"
#include "warpdetect/errors.hpp"
#include "warpdetect/ops.hpp"

namespace wd {

HeadParams HeadParams::create(std::size_t in_channels, const HeadConfig& cfg,
                              std::mt19937_64& rng) {
  HeadParams p;
  p.cfg = cfg;
  p.cls_w = init_uniform({cfg.num_classes, in_channels, 1, 1}, in_channels, rng);
  p.cls_b = Tensor({cfg.num_classes}, std::log(cfg.cls_prior / (1.0 - cfg.cls_prior)));
  p.box_w = init_uniform({cfg.box_channels(), in_channels, 1, 1}, in_channels, rng);
  p.box_b = init_uniform({cfg.box_channels()}, in_channels, rng);
  return p;
}

HeadParams HeadParams::zeros(std::size_t in_channels, const HeadConfig& cfg) {
  HeadParams p;
  p.cfg = cfg;
  p.cls_w = Tensor({cfg.num_classes, in_channels, 1, 1});
  p.cls_b = Tensor({cfg.num_classes});
  p.box_w = Tensor({cfg.box_channels(), in_channels, 1, 1});
  p.box_b = Tensor({cfg.box_channels()});
  return p;
}

void HeadParams::append_parameters(ParameterList& out, const std::string& prefix) {
  out.emplace_back(prefix + "cls_w", &cls_w);
  out.emplace_back(prefix + "cls_b", &cls_b);
  out.emplace_back(prefix + "box_w", &box_w);
  out.emplace_back(prefix + "box_b", &box_b);
}

HeadOutput head_forward(Tape& tape, const HeadParams& params, Var features) {
  const Tensor& f = tape.value(features);
  if (f.rank() != 3 || f.dim(0) != params.cls_w.dim(1)) {
    throw DimensionError("head expects [" + std::to_string(params.cls_w.dim(1)) +
                         ",Hg,Wg] features, got " + shape_string(f.shape()));
  }
  return {conv2d(tape, features, tape.parameter(params.cls_w), tape.parameter(params.cls_b), 1, 0),
          conv2d(tape, features, tape.parameter(params.box_w), tape.parameter(params.box_b), 1, 0)};
}

namespace {

// Softmax over `bins` logits at stride `step`, written to p; returns the
// expected bin index.
double softmax_expectation(const double* logits, std::size_t bins, std::size_t step,
                           std::vector<double>& p) {
  p.resize(bins);
  double m = logits[0];
  for (std::size_t b = 1; b < bins; ++b) m = std::max(m, logits[b * step]);
  double z = 0.0;
  for (std::size_t b = 0; b < bins; ++b) z += (p[b] = std::exp(logits[b * step] - m));
  double e = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    p[b] /= z;
    e += p[b] * static_cast<double>(b);
  }
  return e;
}

struct Decoded {
  Box box;
  // Plain mode: d(cx,cy,w,h)/d(raw channel 0..3) is diagonal.
  std::array<double, 4> diag{};
  // DFL mode: side distances (l, t, r, b) in cells and bin probabilities.
  std::array<double, 4> dist{};
  std::array<std::vector<double>, 4> prob;
};

Decoded decode(const HeadConfig& cfg, const Tensor& raw, std::size_t i, std::size_t j) {
  const std::size_t gh = raw.dim(1), gw = raw.dim(2), plane = gh * gw;
  const double* base = raw.data().data() + i * gw + j;
  Decoded d;
  if (!cfg.dfl) {
    const double sx = sigmoid(base[0]);
    const double sy = sigmoid(base[plane]);
    d.box.cx = (static_cast<double>(j) + sx) / static_cast<double>(gw);
    d.box.cy = (static_cast<double>(i) + sy) / static_cast<double>(gh);
    d.diag[0] = sx * (1.0 - sx) / static_cast<double>(gw);
    d.diag[1] = sy * (1.0 - sy) / static_cast<double>(gh);
    const double w = cfg.size_prior * std::exp(base[2 * plane]);
    const double h = cfg.size_prior * std::exp(base[3 * plane]);
    d.box.w = std::min(w, 1.0);
    d.box.h = std::min(h, 1.0);
    d.diag[2] = w < 1.0 ? w : 0.0;
    d.diag[3] = h < 1.0 ? h : 0.0;
    return d;
  }
  const std::size_t bins = cfg.dfl_bins;
  for (std::size_t s = 0; s < 4; ++s) {
    d.dist[s] = softmax_expectation(base + s * bins * plane, bins, plane, d.prob[s]);
  }
  const double ax = (static_cast<double>(j) + 0.5) / static_cast<double>(gw);
  const double ay = (static_cast<double>(i) + 0.5) / static_cast<double>(gh);
  const double fw = static_cast<double>(gw), fh = static_cast<double>(gh);
  d.box.cx = ax + (d.dist[2] - d.dist[0]) / (2.0 * fw);
  d.box.cy = ay + (d.dist[3] - d.dist[1]) / (2.0 * fh);
  d.box.w = (d.dist[0] + d.dist[2]) / fw;
  d.box.h = (d.dist[1] + d.dist[3]) / fh;
  return d;
}

void require_head_shapes(const HeadConfig& cfg, const Tensor& cls, const Tensor& raw) {
  if (cls.rank() != 3 || raw.rank() != 3 || cls.dim(0) != cfg.num_classes ||
      raw.dim(0) != cfg.box_channels() || cls.dim(1) != raw.dim(1) || cls.dim(2) != raw.dim(2)) {
    throw DimensionError("head output shapes " + shape_string(cls.shape()) + " / " +
                         shape_string(raw.shape()) + " do not match the head config");
  }
}

Box clip_to_frame(const Box& b) {
  const double x1 = std::clamp(b.cx - 0.5 * b.w, 0.0, 1.0);
  const double x2 = std::clamp(b.cx + 0.5 * b.w, 0.0, 1.0);
  const double y1 = std::clamp(b.cy - 0.5 * b.h, 0.0, 1.0);
  const double y2 = std::clamp(b.cy + 0.5 * b.h, 0.0, 1.0);
  return {0.5 * (x1 + x2), 0.5 * (y1 + y2), std::max(x2 - x1, 1e-6), std::max(y2 - y1, 1e-6)};
}

template <class T>
T ciou_impl(const T& cx, const T& cy, const T& w, const T& h, const Box& g) {
  const T half(0.5);
  const T px1 = cx - half * w, px2 = cx + half * w;
  const T py1 = cy - half * h, py2 = cy + half * h;
  const double gx1 = g.cx - 0.5 * g.w, gx2 = g.cx + 0.5 * g.w;
  const double gy1 = g.cy - 0.5 * g.h, gy2 = g.cy + 0.5 * g.h;

  const T iw = max(T(0.0), min(px2, T(gx2)) - max(px1, T(gx1)));
  const T ih = max(T(0.0), min(py2, T(gy2)) - max(py1, T(gy1)));
  const T inter = iw * ih;
  const T uni = w * h + T(g.w * g.h) - inter;
  const T iou_v = inter / uni;

  const T dx = cx - T(g.cx), dy = cy - T(g.cy);
  const T rho2 = dx * dx + dy * dy;
  const T cw = max(px2, T(gx2)) - min(px1, T(gx1));
  const T ch = max(py2, T(gy2)) - min(py1, T(gy1));
  const T c2 = cw * cw + ch * ch;

  const T da = T(std::atan(g.w / g.h)) - atan(w / h);
  const T v = T(4.0 / (std::numbers::pi * std::numbers::pi)) * da * da;
  const T denom = (T(1.0) - iou_v) + v;
  const T alpha = value_of(denom) > 0.0 ? v / denom : T(0.0);
  return T(1.0) - iou_v + rho2 / c2 + alpha * v;
}

}  // namespace

Box decode_box(const HeadConfig& cfg, const Tensor& box_raw, std::size_t i, std::size_t j) {
  if (box_raw.rank() != 3 || box_raw.dim(0) != cfg.box_channels()) {
    throw DimensionError("decode_box: box tensor does not match the head config");
  }
  return decode(cfg, box_raw, i, j).box;
}

std::vector<Detection> decode_detections(const HeadConfig& cfg, const Tensor& cls_logits,
                                         const Tensor& box_raw, double score_threshold) {
  require_head_shapes(cfg, cls_logits, box_raw);
  const std::size_t gh = cls_logits.dim(1), gw = cls_logits.dim(2), plane = gh * gw;
  std::vector<Detection> out;
  for (std::size_t i = 0; i < gh; ++i) {
    for (std::size_t j = 0; j < gw; ++j) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < cfg.num_classes; ++k) {
        if (cls_logits[k * plane + i * gw + j] > cls_logits[best * plane + i * gw + j]) best = k;
      }
      const double score = sigmoid(cls_logits[best * plane + i * gw + j]);
      if (score < score_threshold) continue;
      Detection d;
      d.box = clip_to_frame(decode(cfg, box_raw, i, j).box);
      d.class_id = static_cast<int>(best);
      d.score = std::clamp(score, 1e-12, 1.0 - 1e-12);
      out.push_back(d);
    }
  }
  return out;
}

double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.cx + 0.5 * a.w, b.cx + 0.5 * b.w) -
                                      std::max(a.cx - 0.5 * a.w, b.cx - 0.5 * b.w));
  const double ih = std::max(0.0, std::min(a.cy + 0.5 * a.h, b.cy + 0.5 * b.h) -
                                      std::max(a.cy - 0.5 * a.h, b.cy - 0.5 * b.h));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double ciou_loss(const Box& pred, const Box& gt) {
  if (!(gt.w > 0.0) || !(gt.h > 0.0)) throw DomainError("ciou_loss: ground-truth box is degenerate");
  if (!(pred.w > 0.0) || !(pred.h > 0.0)) throw DomainError("ciou_loss: predicted box is degenerate");
  return ciou_impl<double>(pred.cx, pred.cy, pred.w, pred.h, gt);
}

double ciou_loss_grad(const Box& pred, const Box& gt, std::array<double, 4>& grad) {
  if (!(gt.w > 0.0) || !(gt.h > 0.0)) throw DomainError("ciou_loss: ground-truth box is degenerate");
  if (!(pred.w > 0.0) || !(pred.h > 0.0)) throw DomainError("ciou_loss: predicted box is degenerate");
  using D = Dual<4>;
  const D r = ciou_impl<D>(D::variable(pred.cx, 0), D::variable(pred.cy, 1),
                           D::variable(pred.w, 2), D::variable(pred.h, 3), gt);
  grad = r.d;
  return r.v;
}

namespace {

// Distance-weighted cross-entropy; adds d(loss)/d(logit_b) * scale into grad
// at stride `step` when grad is non-null.
double dfl_impl(const double* logits, std::size_t bins, std::size_t step, double target,
                double* grad, double scale) {
  if (!(target >= 0.0) || target > static_cast<double>(bins - 1)) {
    throw DomainError("dfl_loss: target " + std::to_string(target) + " outside [0, " +
                      std::to_string(bins - 1) + "]");
  }
  double m = logits[0];
  for (std::size_t b = 1; b < bins; ++b) m = std::max(m, logits[b * step]);
  double z = 0.0;
  for (std::size_t b = 0; b < bins; ++b) z += std::exp(logits[b * step] - m);
  const double log_z = m + std::log(z);
  const auto lo = static_cast<std::size_t>(std::floor(target));
  const double w_lo = static_cast<double>(lo + 1) - target;
  const double w_hi = target - static_cast<double>(lo);
  double loss = w_lo * (log_z - logits[lo * step]);
  if (w_hi > 0.0) loss += w_hi * (log_z - logits[(lo + 1) * step]);
  if (grad) {
    for (std::size_t b = 0; b < bins; ++b) {
      double g = std::exp(logits[b * step] - log_z) * (w_lo + w_hi);
      if (b == lo) g -= w_lo;
      if (b == lo + 1) g -= w_hi;
      grad[b * step] += scale * g;
    }
  }
  return loss;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double dfl_loss(std::span<const double> logits, double target) {
  if (logits.size() < 2) throw DomainError("dfl_loss needs at least 2 bins");
  return dfl_impl(logits.data(), logits.size(), 1, target, nullptr, 0.0);
}

std::pair<std::size_t, std::size_t> assign_cell(const Box& b, std::size_t grid_h,
                                                std::size_t grid_w) {
  const auto cell = [](double c, std::size_t n) {
    const double f = std::floor(c * static_cast<double>(n));
    return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(n - 1)));
  };
  return {cell(b.cy, grid_h), cell(b.cx, grid_w)};
}

Var total_loss(Tape& tape, const HeadConfig& cfg, const HeadOutput& head,
               std::span<const GroundTruthBox> gts, LossBreakdown* breakdown) {
  const Tensor& cls = tape.value(head.cls_logits);
  const Tensor& raw = tape.value(head.box_raw);
  require_head_shapes(cfg, cls, raw);
  const std::size_t gh = cls.dim(1), gw = cls.dim(2), plane = gh * gw;

  Tensor target(cls.shape(), 0.0);
  std::vector<int> owner(plane, -1);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const auto& gt = gts[g];
    if (gt.class_id < 0 || static_cast<std::size_t>(gt.class_id) >= cfg.num_classes) {
      throw DomainError("ground-truth class " + std::to_string(gt.class_id) + " out of range");
    }
    const auto [i, j] = assign_cell(gt.box, gh, gw);
    target[static_cast<std::size_t>(gt.class_id) * plane + i * gw + j] = 1.0;
    if (owner[i * gw + j] < 0) owner[i * gw + j] = static_cast<int>(g);
  }

  LossBreakdown lb;
  for (int o : owner) lb.assigned += o >= 0 ? 1 : 0;
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, lb.assigned));

  Tensor dcls(cls.shape(), 0.0);
  for (std::size_t k = 0; k < cls.size(); ++k) {
    lb.cls += softplus(cls[k]) - target[k] * cls[k];
    dcls[k] = cfg.cls_weight * norm * (sigmoid(cls[k]) - target[k]);
  }

  Tensor draw(raw.shape(), 0.0);
  for (std::size_t cell = 0; cell < plane; ++cell) {
    if (owner[cell] < 0) continue;
    const Box& gt = gts[static_cast<std::size_t>(owner[cell])].box;
    const std::size_t i = cell / gw, j = cell % gw;
    const Decoded d = decode(cfg, raw, i, j);
    std::array<double, 4> g{};
    lb.box += ciou_loss_grad(d.box, gt, g);
    const double sb = cfg.box_weight * norm;
    if (!cfg.dfl) {
      for (std::size_t c = 0; c < 4; ++c) draw[c * plane + cell] += sb * g[c] * d.diag[c];
      continue;
    }
    // (cx, cy, w, h) as functions of side distances (l, t, r, b).
    const double fw = static_cast<double>(gw), fh = static_cast<double>(gh);
    const std::array<double, 4> dd = {
        -g[0] / (2.0 * fw) + g[2] / fw,  // l
        -g[1] / (2.0 * fh) + g[3] / fh,  // t
        g[0] / (2.0 * fw) + g[2] / fw,   // r
        g[1] / (2.0 * fh) + g[3] / fh,   // b
    };
    const std::size_t bins = cfg.dfl_bins;
    const double ax = (static_cast<double>(j) + 0.5) / fw;
    const double ay = (static_cast<double>(i) + 0.5) / fh;
    const std::array<double, 4> side_target = {
        (ax - (gt.cx - 0.5 * gt.w)) * fw, (ay - (gt.cy - 0.5 * gt.h)) * fh,
        ((gt.cx + 0.5 * gt.w) - ax) * fw, ((gt.cy + 0.5 * gt.h) - ay) * fh};
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t base = s * bins * plane + cell;
      for (std::size_t b = 0; b < bins; ++b) {
        const double p = d.prob[s][b];
        draw[base + b * plane] += sb * dd[s] * p * (static_cast<double>(b) - d.dist[s]);
      }
      const double t = std::clamp(side_target[s], 0.0, static_cast<double>(bins - 1) - 1e-6);
      lb.dfl += dfl_impl(raw.data().data() + base, bins, plane, t, draw.data().data() + base,
                         cfg.dfl_weight * norm);
    }
  }

  lb.total = norm * (cfg.cls_weight * lb.cls + cfg.box_weight * lb.box +
                     (cfg.dfl ? cfg.dfl_weight * lb.dfl : 0.0));
  if (breakdown) *breakdown = lb;
  const Var cls_v = head.cls_logits, raw_v = head.box_raw;
  return tape.record(Tensor::scalar(lb.total), {cls_v, raw_v},
                     [cls_v, raw_v, dcls = std::move(dcls), draw = std::move(draw)](Tape& tp,
                                                                                    Var out) {
                       const double g = tp.grad_buffer(out)[0];
                       if (tp.requires_grad(cls_v)) {
                         auto d = tp.grad_buffer(cls_v);
                         for (std::size_t k = 0; k < d.size(); ++k) d[k] += g * dcls[k];
                       }
                       if (tp.requires_grad(raw_v)) {
                         auto d = tp.grad_buffer(raw_v);
                         for (std::size_t k = 0; k < d.size(); ++k) d[k] += g * draw[k];
                       }
                     });
}

namespace {

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  return std::tie(a.box.cx, a.box.cy, a.box.w, a.box.h) <
         std::tie(b.box.cx, b.box.cy, b.box.w, b.box.h);
}

}  // namespace

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold,
                           double score_threshold) {
  std::erase_if(dets, [&](const Detection& d) { return d.score < score_threshold; });
  std::sort(dets.begin(), dets.end(), ranks_before);
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

void write_detections(std::ostream& out, std::span<const Detection> dets) {
  char buf[256];
  for (const auto& d : dets) {
    std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g %.17g %.17g\n", d.class_id, d.score,
                  d.box.cx, d.box.cy, d.box.w, d.box.h);
    out << buf;
  }
}

std::vector<Detection> read_detections(std::istream& in) {
  std::vector<Detection> dets;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Detection d;
    if (!(ls >> d.class_id >> d.score >> d.box.cx >> d.box.cy >> d.box.w >> d.box.h)) {
      throw IoError("bad detection line: " + line);
    }
    dets.push_back(d);
  }
  return dets;
}

}  // namespace wd
