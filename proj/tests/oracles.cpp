#include "oracles.hpp"

#include <Eigen/Dense>
#include <numbers>

#include <algorithm>
#include <cmath>
#include <tuple>

namespace wd::oracle {

Tensor conv2d_loops(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride,
                    std::size_t padding) {
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
  Tensor y({cout, oh, ow});
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = bias[o];
        for (std::size_t c = 0; c < cin; ++c) {
          for (std::size_t a = 0; a < kh; ++a) {
            for (std::size_t b = 0; b < kw; ++b) {
              const long yi = static_cast<long>(i * stride + a) - static_cast<long>(padding);
              const long xj = static_cast<long>(j * stride + b) - static_cast<long>(padding);
              if (yi < 0 || xj < 0 || yi >= static_cast<long>(h) || xj >= static_cast<long>(w)) continue;
              acc += x.at({c, static_cast<std::size_t>(yi), static_cast<std::size_t>(xj)}) *
                     kernel.at({o, c, a, b});
            }
          }
        }
        y.at({o, i, j}) = acc;
      }
    }
  }
  return y;
}

Tensor avg_pool2_loops(const Tensor& x) {
  Tensor y({x.dim(0), x.dim(1) / 2, x.dim(2) / 2});
  for (std::size_t c = 0; c < y.dim(0); ++c)
    for (std::size_t i = 0; i < y.dim(1); ++i)
      for (std::size_t j = 0; j < y.dim(2); ++j)
        y.at({c, i, j}) = 0.25 * (x.at({c, 2 * i, 2 * j}) + x.at({c, 2 * i, 2 * j + 1}) +
                                  x.at({c, 2 * i + 1, 2 * j}) + x.at({c, 2 * i + 1, 2 * j + 1}));
  return y;
}

Tensor global_pool_loops(const Tensor& x, bool max) {
  Tensor y({x.dim(0)});
  for (std::size_t c = 0; c < x.dim(0); ++c) {
    double acc = max ? -INFINITY : 0.0;
    for (std::size_t i = 0; i < x.dim(1); ++i)
      for (std::size_t j = 0; j < x.dim(2); ++j)
        acc = max ? std::max(acc, x.at({c, i, j})) : acc + x.at({c, i, j});
    y[c] = max ? acc : acc / static_cast<double>(x.dim(1) * x.dim(2));
  }
  return y;
}

Tensor channel_pool_loops(const Tensor& x, bool max) {
  Tensor y({1, x.dim(1), x.dim(2)});
  for (std::size_t i = 0; i < x.dim(1); ++i) {
    for (std::size_t j = 0; j < x.dim(2); ++j) {
      double acc = max ? -INFINITY : 0.0;
      for (std::size_t c = 0; c < x.dim(0); ++c)
        acc = max ? std::max(acc, x.at({c, i, j})) : acc + x.at({c, i, j});
      y.at({0, i, j}) = max ? acc : acc / static_cast<double>(x.dim(0));
    }
  }
  return y;
}

namespace {

double u(double r) { return r == 0.0 ? 0.0 : r * r * std::log(r); }

}  // namespace

Tensor tps_dense_solve(const ControlPointSet& pts, double lambda) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 3, n + 3);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& si = pts.source[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& sj = pts.source[static_cast<std::size_t>(j)];
      a(i, j) = u(std::hypot(si.x - sj.x, si.y - sj.y));
    }
    a(i, i) += lambda;
    a(i, n) = a(n, i) = 1.0;
    a(i, n + 1) = a(n + 1, i) = si.x;
    a(i, n + 2) = a(n + 2, i) = si.y;
    rhs(i, 0) = pts.target[static_cast<std::size_t>(i)].x;
    rhs(i, 1) = pts.target[static_cast<std::size_t>(i)].y;
  }
  const Eigen::MatrixXd sol = a.fullPivLu().solve(rhs);
  Tensor out({static_cast<std::size_t>(n) + 3, 2});
  for (Eigen::Index i = 0; i < n + 3; ++i) {
    out.at({static_cast<std::size_t>(i), 0}) = sol(i, 0);
    out.at({static_cast<std::size_t>(i), 1}) = sol(i, 1);
  }
  return out;
}

Tensor affine_least_squares(const ControlPointSet& pts) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd p(n, 3), v(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = pts.source[static_cast<std::size_t>(i)];
    p.row(i) << 1.0, s.x, s.y;
    v(i, 0) = pts.target[static_cast<std::size_t>(i)].x;
    v(i, 1) = pts.target[static_cast<std::size_t>(i)].y;
  }
  const Eigen::MatrixXd sol = (p.transpose() * p).ldlt().solve(p.transpose() * v);
  Tensor out({3, 2});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 2; ++c) out.at({i, c}) = sol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
  return out;
}

Point2 tps_eval(const std::vector<Point2>& source, const double affine[2][3],
                const std::vector<std::array<double, 2>>& weights, Point2 p) {
  double out[2];
  for (int c = 0; c < 2; ++c) {
    double v = affine[c][0] + affine[c][1] * p.x + affine[c][2] * p.y;
    for (std::size_t i = 0; i < source.size(); ++i) {
      const double dx = p.x - source[i].x, dy = p.y - source[i].y;
      v += weights[i][c] * u(std::sqrt(dx * dx + dy * dy));
    }
    out[c] = v;
  }
  return {out[0], out[1]};
}

double bending_quadrature(const TpsParams& params, std::size_t n, double half) {
  const double step = 2.0 * half / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const double y = -half + (static_cast<double>(a) + 0.5) * step;
    for (std::size_t b = 0; b < n; ++b) {
      const double x = -half + (static_cast<double>(b) + 0.5) * step;
      for (int c = 0; c < 2; ++c) {
        double fxx = 0.0, fxy = 0.0, fyy = 0.0;
        for (std::size_t i = 0; i < params.source.size(); ++i) {
          const double dx = x - params.source[i].x, dy = y - params.source[i].y;
          const double r2 = dx * dx + dy * dy;
          if (r2 == 0.0) continue;
          const double l = std::log(r2) + 1.0;  // 2 ln r + 1
          const double w = params.weights[i][static_cast<std::size_t>(c)];
          fxx += w * (l + 2.0 * dx * dx / r2);
          fxy += w * (2.0 * dx * dy / r2);
          fyy += w * (l + 2.0 * dy * dy / r2);
        }
        total += fxx * fxx + 2.0 * fxy * fxy + fyy * fyy;
      }
    }
  }
  return total * step * step;
}

std::vector<ControlPointSet> bending_fixtures() {
  std::vector<ControlPointSet> out;
  for (std::uint64_t k = 0; k < 10; ++k) {
    std::mt19937_64 rng(100 + k);
    std::uniform_real_distribution<double> jitter(-0.25, 0.25), radius(0.1, 0.2), d(-0.04, 0.04);
    ControlPointSet pts;
    // Spread around a ring so no pair nearly coincides.
    for (int i = 0; i < 5; ++i) {
      const double a = (i + jitter(rng)) * 2.0 * std::numbers::pi / 5.0, r = radius(rng);
      const Point2 s{r * std::cos(a), r * std::sin(a)};
      pts.source.push_back(s);
      pts.target.push_back({s.x + d(rng), s.y + d(rng)});
    }
    out.push_back(std::move(pts));
  }
  return out;
}

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Tensor channel_attention_scalar(const CbamParams& p, const Tensor& x) {
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2), hidden = c / p.reduction;
  std::vector<double> avg(c, 0.0), mx(c, -INFINITY);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < hw; ++i) {
      avg[k] += x[k * hw + i];
      mx[k] = std::max(mx[k], x[k * hw + i]);
    }
    avg[k] /= static_cast<double>(hw);
  }
  const auto mlp = [&](const std::vector<double>& v) {
    std::vector<double> hid(hidden, 0.0), out(c, 0.0);
    for (std::size_t a = 0; a < hidden; ++a) {
      for (std::size_t k = 0; k < c; ++k) hid[a] += p.mlp_w0[a * c + k] * v[k];
      hid[a] = std::max(hid[a], 0.0);
    }
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t a = 0; a < hidden; ++a) out[k] += p.mlp_w1[k * hidden + a] * hid[a];
    return out;
  };
  const auto ya = mlp(avg), ym = mlp(mx);
  Tensor out({c});
  for (std::size_t k = 0; k < c; ++k) out[k] = sig(ya[k] + ym[k]);
  return out;
}

Tensor spatial_attention_scalar(const CbamParams& p, const Tensor& x) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<double> planes(2 * h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    double m = -INFINITY, s = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      m = std::max(m, x[k * h * w + i]);
      s += x[k * h * w + i];
    }
    planes[i] = m;
    planes[h * w + i] = s / static_cast<double>(c);
  }
  Tensor out({1, h, w});
  for (long i = 0; i < static_cast<long>(h); ++i) {
    for (long j = 0; j < static_cast<long>(w); ++j) {
      double acc = p.spatial_bias[0];
      for (std::size_t q = 0; q < 2; ++q) {
        for (long a = -3; a <= 3; ++a) {
          for (long b = -3; b <= 3; ++b) {
            const long yi = i + a, xj = j + b;
            if (yi < 0 || xj < 0 || yi >= static_cast<long>(h) || xj >= static_cast<long>(w)) continue;
            acc += p.spatial_kernel[((q * 7) + static_cast<std::size_t>(a + 3)) * 7 + static_cast<std::size_t>(b + 3)] *
                   planes[q * h * w + static_cast<std::size_t>(yi) * w + static_cast<std::size_t>(xj)];
          }
        }
      }
      out[static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)] = sig(acc);
    }
  }
  return out;
}

Tensor cbam_scalar(const CbamParams& p, const Tensor& x) {
  const Tensor mc = channel_attention_scalar(p, x);
  Tensor refined = x;
  const std::size_t hw = x.dim(1) * x.dim(2);
  for (std::size_t k = 0; k < x.dim(0); ++k)
    for (std::size_t i = 0; i < hw; ++i) refined[k * hw + i] *= mc[k];
  const Tensor ms = spatial_attention_scalar(p, refined);
  for (std::size_t k = 0; k < x.dim(0); ++k)
    for (std::size_t i = 0; i < hw; ++i) refined[k * hw + i] *= ms[i];
  return refined;
}

namespace {

bool before(const Detection& a, const Detection& b) {
  return std::make_tuple(-a.score, a.class_id, a.box.cx, a.box.cy, a.box.w, a.box.h) <
         std::make_tuple(-b.score, b.class_id, b.box.cx, b.box.cy, b.box.w, b.box.h);
}

}  // namespace

std::vector<Detection> nms_brute(const std::vector<Detection>& dets, double iou_threshold,
                                 double score_threshold) {
  std::vector<Detection> d;
  for (const auto& x : dets)
    if (x.score >= score_threshold) d.push_back(x);
  // Rank by pairwise comparison count rather than a sort.
  std::vector<Detection> ordered(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < d.size(); ++j)
      if (before(d[j], d[i]) || (j < i && !before(d[i], d[j]) && !before(d[j], d[i]))) ++rank;
    ordered[rank] = d[i];
  }
  std::vector<char> keep(ordered.size(), 1);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      bool k = true;
      for (std::size_t j = 0; j < i; ++j) {
        if (keep[j] && ordered[j].class_id == ordered[i].class_id &&
            iou(ordered[j].box, ordered[i].box) > iou_threshold) {
          k = false;
        }
      }
      if (static_cast<bool>(keep[i]) != k) {
        keep[i] = k;
        changed = true;
      }
    }
  }
  std::vector<Detection> out;
  for (std::size_t i = 0; i < ordered.size(); ++i)
    if (keep[i]) out.push_back(ordered[i]);
  return out;
}

double map_oracle(const std::vector<harness::ImageDetections>& dets,
                  const std::vector<harness::ImageLabels>& gts, std::size_t num_classes,
                  double iou_match) {
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t npos = 0;
    for (const auto& g : gts)
      for (const auto& b : g) npos += static_cast<std::size_t>(b.class_id) == c;
    if (npos == 0) continue;
    ++present;
    // (score, image, tp) for every detection of class c.
    std::vector<std::tuple<double, std::size_t, bool>> list;
    for (std::size_t im = 0; im < dets.size(); ++im) {
      std::vector<Detection> mine;
      for (const auto& d : dets[im])
        if (static_cast<std::size_t>(d.class_id) == c) mine.push_back(d);
      std::stable_sort(mine.begin(), mine.end(),
                       [](const Detection& a, const Detection& b) { return a.score > b.score; });
      std::vector<bool> used(gts[im].size(), false);
      for (const auto& d : mine) {
        long best = -1;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < gts[im].size(); ++g) {
          if (used[g] || static_cast<std::size_t>(gts[im][g].class_id) != c) continue;
          const double v = iou(d.box, gts[im][g].box);
          if (v >= iou_match && v > best_iou) {
            best = static_cast<long>(g);
            best_iou = v;
          }
        }
        if (best >= 0) used[static_cast<std::size_t>(best)] = true;
        list.emplace_back(d.score, im, best >= 0);
      }
    }
    std::stable_sort(list.begin(), list.end(),
                     [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
    std::vector<double> prec, rec;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < list.size(); ++k) {
      tp += std::get<2>(list[k]);
      prec.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
      rec.push_back(static_cast<double>(tp) / static_cast<double>(npos));
    }
    double ap = 0.0, last = 0.0;
    for (std::size_t k = 0; k < list.size(); ++k) {
      if (!std::get<2>(list[k])) continue;
      double env = 0.0;
      for (std::size_t j = k; j < list.size(); ++j) env = std::max(env, prec[j]);
      ap += (rec[k] - last) * env;
      last = rec[k];
    }
    total += ap;
  }
  return present == 0 ? 0.0 : total / static_cast<double>(present);
}

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(0.1, 0.9), s(0.05, 0.35);
  return {c(rng), c(rng), s(rng), s(rng)};
}

MapInstance random_map_instance(std::mt19937_64& rng, std::size_t max_dets, std::size_t num_classes) {
  MapInstance inst;
  std::uniform_int_distribution<std::size_t> nimg(1, 4), ngt(0, 3), ndet(0, max_dets);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(num_classes) - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0), jitter(-0.03, 0.03);
  const std::size_t images = nimg(rng);
  inst.dets.resize(images);
  inst.gts.resize(images);
  for (auto& g : inst.gts) {
    const std::size_t n = ngt(rng);
    for (std::size_t k = 0; k < n; ++k) g.push_back({random_box(rng), cls(rng)});
  }
  const std::size_t total = ndet(rng);
  for (std::size_t k = 0; k < total; ++k) {
    const std::size_t im = std::uniform_int_distribution<std::size_t>(0, images - 1)(rng);
    Detection d;
    d.score = unit(rng);
    if (!inst.gts[im].empty() && unit(rng) < 0.7) {
      const auto& g = inst.gts[im][std::uniform_int_distribution<std::size_t>(0, inst.gts[im].size() - 1)(rng)];
      d.box = {g.box.cx + jitter(rng), g.box.cy + jitter(rng), g.box.w * (1 + jitter(rng)),
               g.box.h * (1 + jitter(rng))};
      d.class_id = unit(rng) < 0.8 ? g.class_id : cls(rng);
    } else {
      d.box = random_box(rng);
      d.class_id = cls(rng);
    }
    inst.dets[im].push_back(d);
  }
  return inst;
}

std::vector<Detection> random_nms_instance(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> cls(0, 2), level(1, 9);
  std::vector<Detection> dets;
  for (std::size_t k = 0; k < n; ++k) {
    Box b = random_box(rng);
    // Cluster half the boxes so suppression actually triggers.
    if (k > 0 && k % 2 == 0) {
      b = dets[k - 1].box;
      b.cx += 0.02;
    }
    dets.push_back({b, cls(rng), level(rng) / 10.0});
  }
  return dets;
}

}  // namespace wd::oracle
