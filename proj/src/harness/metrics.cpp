#include "warpdetect/harness/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "warpdetect/errors.hpp"

namespace wd::harness {

namespace {

// Descending score; ties keep input order.
std::vector<std::size_t> score_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

std::vector<Detection> above(std::span<const Detection> dets, double threshold) {
  std::vector<Detection> out;
  for (const auto& d : dets) {
    if (d.score >= threshold) out.push_back(d);
  }
  return out;
}

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw DimensionError("detections and labels cover different image counts");
}

}  // namespace

std::vector<long> match_image(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                              double iou_match, bool class_agnostic) {
  std::vector<long> match(dets.size(), -1);
  std::vector<bool> used(gts.size(), false);
  for (std::size_t k : score_order(dets)) {
    long best = -1;
    double best_iou = iou_match;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || (!class_agnostic && gts[g].class_id != dets[k].class_id)) continue;
      const double v = iou(dets[k].box, gts[g].box);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<long>(g);
        best_iou = v;
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      match[k] = best;
    }
  }
  return match;
}

double compute_map(std::span<const ImageDetections> dets, std::span<const ImageLabels> gts,
                   std::size_t num_classes, double iou_match, std::vector<double>* per_class_ap) {
  check_sizes(dets.size(), gts.size());
  struct Ranked {
    double score;
    std::size_t image;
    bool tp;
  };
  std::vector<std::vector<Ranked>> ranked(num_classes);
  std::vector<std::size_t> npos(num_classes, 0);
  for (std::size_t im = 0; im < dets.size(); ++im) {
    for (const auto& g : gts[im]) {
      if (g.class_id < 0 || static_cast<std::size_t>(g.class_id) >= num_classes) {
        throw DomainError("ground-truth class out of range");
      }
      ++npos[static_cast<std::size_t>(g.class_id)];
    }
    const auto match = match_image(dets[im], gts[im], iou_match, false);
    for (std::size_t k = 0; k < dets[im].size(); ++k) {
      const auto c = dets[im][k].class_id;
      if (c < 0 || static_cast<std::size_t>(c) >= num_classes) continue;
      ranked[static_cast<std::size_t>(c)].push_back({dets[im][k].score, im, match[k] >= 0});
    }
  }
  if (per_class_ap) per_class_ap->assign(num_classes, 0.0);
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (npos[c] == 0) continue;
    ++present;
    auto& r = ranked[c];
    std::stable_sort(r.begin(), r.end(), [](const Ranked& a, const Ranked& b) {
      return a.score > b.score;
    });
    std::vector<double> precision(r.size()), recall(r.size());
    std::size_t tp = 0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (r[k].tp) ++tp;
      precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
      recall[k] = static_cast<double>(tp) / static_cast<double>(npos[c]);
    }
    for (std::size_t k = r.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (!r[k].tp) continue;
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
    if (per_class_ap) (*per_class_ap)[c] = ap;
    total += ap;
  }
  return present == 0 ? 0.0 : total / static_cast<double>(present);
}

MetricsReport score_detections(std::span<const ImageDetections> dets,
                               std::span<const ImageLabels> gts, const MatchOptions& opts) {
  check_sizes(dets.size(), gts.size());
  MetricsReport rep;
  rep.images = dets.size();
  std::size_t exact = 0;
  for (std::size_t im = 0; im < dets.size(); ++im) {
    const auto kept = above(dets[im], opts.score_threshold);
    const auto match = match_image(kept, gts[im], opts.iou_match, false);
    const auto tp = static_cast<std::size_t>(std::count_if(match.begin(), match.end(),
                                                           [](long m) { return m >= 0; }));
    const std::size_t fp = kept.size() - tp, fn = gts[im].size() - tp;
    rep.true_positive_count += tp;
    rep.false_positive_count += fp;
    rep.false_negative_count += fn;
    if (fp == 0 && fn == 0) ++exact;
  }
  const double tp = static_cast<double>(rep.true_positive_count);
  const double fp = static_cast<double>(rep.false_positive_count);
  const double fn = static_cast<double>(rep.false_negative_count);
  rep.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  rep.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  rep.f1 = rep.precision + rep.recall > 0
               ? 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall)
               : 0.0;
  rep.accuracy = rep.images > 0 ? static_cast<double>(exact) / static_cast<double>(rep.images) : 0.0;
  rep.map50 = compute_map(dets, gts, opts.num_classes, opts.iou_match, &rep.per_class_ap);
  return rep;
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const ImageDetections> dets,
                                                       std::span<const ImageLabels> gts,
                                                       const MatchOptions& opts) {
  check_sizes(dets.size(), gts.size());
  const std::size_t k = opts.num_classes;
  std::vector<std::vector<std::size_t>> m(k + 1, std::vector<std::size_t>(k + 1, 0));
  const auto index = [&](int c) {
    if (c < 0 || static_cast<std::size_t>(c) >= k) throw DomainError("class out of range");
    return static_cast<std::size_t>(c);
  };
  for (std::size_t im = 0; im < dets.size(); ++im) {
    const auto kept = above(dets[im], opts.score_threshold);
    const auto match = match_image(kept, gts[im], opts.iou_match, true);
    std::vector<bool> gt_used(gts[im].size(), false);
    for (std::size_t d = 0; d < kept.size(); ++d) {
      if (match[d] >= 0) {
        const auto g = static_cast<std::size_t>(match[d]);
        gt_used[g] = true;
        ++m[index(gts[im][g].class_id)][index(kept[d].class_id)];
      } else {
        ++m[k][index(kept[d].class_id)];
      }
    }
    for (std::size_t g = 0; g < gts[im].size(); ++g) {
      if (!gt_used[g]) ++m[index(gts[im][g].class_id)][k];
    }
  }
  return m;
}

}  // namespace wd::harness
