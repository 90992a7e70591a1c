#include "warpdetect/harness/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>

#include "warpdetect/errors.hpp"
#include "parallel_errors.hpp"

namespace wd::harness {

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::blob_leaf: return "blob_leaf";
    case ShapeFamily::elongated_stem: return "elongated_stem";
    case ShapeFamily::rosette: return "rosette";
  }
  return "unknown";
}

void SceneSpec::validate() const {
  const auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (image_size < 16) throw ConfigError("scene image_size must be >= 16");
  if (num_objects < 1 || num_objects > 4) throw ConfigError("scene num_objects must be 1..4");
  if (!prob(occlusion_prob) || !prob(bend_amplitude) || !prob(clutter_level)) {
    throw ConfigError("scene occlusion_prob, bend_amplitude, clutter_level must be in [0,1]");
  }
}

Point2 Stroke::at(double t) const {
  const double a = (1 - t) * (1 - t), b = 2 * (1 - t) * t, c = t * t;
  return {a * p0.x + b * p1.x + c * p2.x, a * p0.y + b * p1.y + c * p2.y};
}

double Stroke::width(double t) const {
  return taper ? max_width * (1.0 - 0.4 * t) : max_width * 4.0 * t * (1.0 - t);
}

namespace {

constexpr int kSpineSamples = 64;

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Point2 rotate(Point2 v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

Point2 offset(Point2 c, Point2 v) { return {c.x + v.x, c.y + v.y}; }

// Spine from -L/2 to +L/2 along `angle`, bowed sideways by `bow` * L.
Stroke spine(Point2 center, double length, double angle, double bow, double width, bool taper) {
  Stroke s;
  s.p0 = offset(center, rotate({-0.5 * length, 0.0}, angle));
  s.p2 = offset(center, rotate({0.5 * length, 0.0}, angle));
  // Quadratic control point; the curve midpoint sits at bow*L/2 off the chord.
  s.p1 = offset(center, rotate({0.0, bow * length}, angle));
  s.max_width = width;
  s.taper = taper;
  return s;
}

ObjectShape make_object(ShapeFamily family, double size, Rng& rng) {
  ObjectShape obj;
  obj.family = family;
  const double angle = uniform(rng, 0.0, std::numbers::pi);
  const Point2 origin{0.0, 0.0};
  switch (family) {
    case ShapeFamily::blob_leaf: {
      const double length = uniform(rng, 0.26, 0.38) * size;
      obj.strokes.push_back(spine(origin, length, angle, uniform(rng, -0.15, 0.15),
                                  length * uniform(rng, 0.22, 0.30), false));
      obj.color = {0.20, 0.62, 0.18};
      obj.frame_radius = 0.5 * length;
      break;
    }
    case ShapeFamily::elongated_stem: {
      const double length = uniform(rng, 0.40, 0.58) * size;
      obj.strokes.push_back(spine(origin, length, angle, uniform(rng, -0.25, 0.25),
                                  size * uniform(rng, 0.032, 0.045), true));
      obj.color = {0.58, 0.42, 0.16};
      obj.frame_radius = 0.5 * length;
      break;
    }
    case ShapeFamily::rosette: {
      const int petals = std::uniform_int_distribution<int>(4, 6)(rng);
      const double petal = uniform(rng, 0.11, 0.16) * size;
      for (int k = 0; k < petals; ++k) {
        const double a = angle + 2.0 * std::numbers::pi * (k + uniform(rng, -0.1, 0.1)) / petals;
        Stroke s = spine(rotate({0.5 * petal, 0.0}, a), petal, a, uniform(rng, -0.1, 0.1),
                         0.3 * petal, false);
        obj.strokes.push_back(s);
      }
      obj.color = {0.72, 0.74, 0.18};
      obj.frame_radius = petal;
      break;
    }
  }
  for (auto& c : obj.color) c = std::clamp(c + uniform(rng, -0.06, 0.06), 0.0, 1.0);
  obj.softness = 1.5;
  return obj;
}

void translate(ObjectShape& obj, Point2 to) {
  for (auto& s : obj.strokes) {
    s.p0 = offset(s.p0, to);
    s.p1 = offset(s.p1, to);
    s.p2 = offset(s.p2, to);
  }
  obj.frame_center = to;
}

void add_bend(ObjectShape& obj, double amplitude, Rng& rng) {
  if (amplitude <= 0.0) return;
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      const Point2 s{static_cast<double>(j), static_cast<double>(i)};
      obj.bend_source.push_back(s);
      obj.bend_target.push_back(
          {s.x + 0.22 * amplitude * uniform(rng, -1.0, 1.0),
           s.y + 0.22 * amplitude * uniform(rng, -1.0, 1.0)});
    }
  }
}

double stroke_distance(const Stroke& s, Point2 p) {
  double best = 1e300;
  for (int k = 0; k <= kSpineSamples; ++k) {
    const double t = static_cast<double>(k) / kSpineSamples;
    const Point2 q = s.at(t);
    best = std::min(best, std::hypot(p.x - q.x, p.y - q.y) - s.width(t));
  }
  return best;
}

// Low-frequency background: a few random plane waves per channel.
struct Clutter {
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::array<std::vector<Wave>, 3> waves;
  std::array<double, 3> base{};

  double at(std::size_t c, double x, double y) const {
    double v = base[c];
    for (const auto& w : waves[c]) v += w.amp * std::cos(w.kx * x + w.ky * y + w.phase);
    return v;
  }
};

Clutter make_clutter(double level, double size, Rng& rng) {
  Clutter cl;
  cl.base = {0.36 + uniform(rng, -0.04, 0.04), 0.27 + uniform(rng, -0.04, 0.04),
             0.17 + uniform(rng, -0.04, 0.04)};
  for (std::size_t c = 0; c < 3; ++c) {
    for (int k = 0; k < 4; ++k) {
      const double wavelength = uniform(rng, 0.25, 1.0) * size;
      const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double kk = 2.0 * std::numbers::pi / wavelength;
      cl.waves[c].push_back({kk * std::cos(dir), kk * std::sin(dir),
                             uniform(rng, 0.0, 2.0 * std::numbers::pi), 0.12 * level});
    }
  }
  return cl;
}

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

double object_alpha(const ObjectShape& obj, const TpsParams* bend, Point2 p) {
  Point2 q = p;
  if (bend) {
    const double r = obj.frame_radius;
    const Point2 local{(p.x - obj.frame_center.x) / r, (p.y - obj.frame_center.y) / r};
    const Point2 w = tps_transform(*bend, local);
    q = {obj.frame_center.x + r * w.x, obj.frame_center.y + r * w.y};
  }
  double s = 1e300;
  for (const auto& st : obj.strokes) s = std::min(s, stroke_distance(st, q));
  return std::clamp(0.5 - s / obj.softness, 0.0, 1.0);
}

Scene gen_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto n = spec.image_size;
  const double size = static_cast<double>(n);

  Scene scene;
  scene.image = Tensor({3, n, n});
  const Clutter clutter = make_clutter(spec.clutter_level, size, rng);

  for (std::size_t k = 0; k < spec.num_objects; ++k) {
    const auto family = static_cast<ShapeFamily>(
        std::uniform_int_distribution<int>(0, static_cast<int>(kNumFamilies) - 1)(rng));
    ObjectShape obj = make_object(family, size, rng);
    const double margin = 0.6 * obj.frame_radius;
    Point2 center{uniform(rng, margin, size - margin), uniform(rng, margin, size - margin)};
    const bool occlude = k > 0 && uniform(rng, 0.0, 1.0) < spec.occlusion_prob;
    if (occlude) {
      const auto& other = scene.objects[std::uniform_int_distribution<std::size_t>(
          0, scene.objects.size() - 1)(rng)];
      const double reach = 0.45 * std::min(other.frame_radius, obj.frame_radius);
      const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double d = uniform(rng, 0.2, 1.0) * reach;
      center = {std::clamp(other.frame_center.x + d * std::cos(a), margin, size - margin),
                std::clamp(other.frame_center.y + d * std::sin(a), margin, size - margin)};
    } else {
      for (int attempt = 0; attempt < 20; ++attempt) {
        const bool clear = std::all_of(scene.objects.begin(), scene.objects.end(), [&](const auto& o) {
          return distance(o.frame_center, center) > o.frame_radius + obj.frame_radius;
        });
        if (clear) break;
        center = {uniform(rng, margin, size - margin), uniform(rng, margin, size - margin)};
      }
    }
    translate(obj, center);
    add_bend(obj, spec.bend_amplitude, rng);
    scene.objects.push_back(std::move(obj));
  }

  // Background.
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        scene.image[(c * n + i) * n + j] = clutter.at(c, j + 0.5, i + 0.5);
      }
    }
  }

  std::vector<double> alpha(n * n);
  for (const auto& obj : scene.objects) {
    std::optional<TpsParams> bend;
    if (!obj.bend_source.empty()) bend = fit_tps({obj.bend_source, obj.bend_target}, 0.0);
    const double reach = 2.0 * obj.frame_radius + 4.0;
    const auto lo = [&](double c) {
      return static_cast<std::size_t>(std::clamp(std::floor(c - reach), 0.0, size));
    };
    const auto hi = [&](double c) {
      return static_cast<std::size_t>(std::clamp(std::ceil(c + reach), 0.0, size));
    };
    const std::size_t i0 = lo(obj.frame_center.y), i1 = hi(obj.frame_center.y);
    const std::size_t j0 = lo(obj.frame_center.x), j1 = hi(obj.frame_center.x);
    std::fill(alpha.begin(), alpha.end(), 0.0);
    double peak = 0.0;
    for (std::size_t i = i0; i < i1; ++i) {
      for (std::size_t j = j0; j < j1; ++j) {
        const double a = object_alpha(obj, bend ? &*bend : nullptr, {j + 0.5, i + 0.5});
        alpha[i * n + j] = a;
        peak = std::max(peak, a);
      }
    }
    if (peak <= 0.0) continue;
    std::size_t min_i = n, max_i = 0, min_j = n, max_j = 0;
    for (std::size_t i = i0; i < i1; ++i) {
      for (std::size_t j = j0; j < j1; ++j) {
        const double a = alpha[i * n + j];
        if (a > 0.1 * peak) {
          min_i = std::min(min_i, i);
          max_i = std::max(max_i, i);
          min_j = std::min(min_j, j);
          max_j = std::max(max_j, j);
        }
        if (a <= 0.0) continue;
        // Mild shading along the object keeps the fill from being flat.
        const double shade = 0.9 + 0.1 * std::cos(0.35 * (static_cast<double>(i) + j));
        for (std::size_t c = 0; c < 3; ++c) {
          double& px = scene.image[(c * n + i) * n + j];
          px = (1.0 - a) * px + a * obj.color[c] * shade;
        }
      }
    }
    GroundTruthBox gt;
    gt.class_id = static_cast<int>(obj.family);
    gt.box.w = static_cast<double>(max_j + 1 - min_j) / size;
    gt.box.h = static_cast<double>(max_i + 1 - min_i) / size;
    gt.box.cx = static_cast<double>(min_j + max_j + 1) / (2.0 * size);
    gt.box.cy = static_cast<double>(min_i + max_i + 1) / (2.0 * size);
    scene.labels.push_back(gt);
  }
  for (auto& v : scene.image.data()) v = std::clamp(v, 0.0, 1.0);
  return scene;
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index) {
  const auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(root) ^ stream) ^ index);
}

Dataset gen_dataset(const DatasetSpec& spec) {
  if (spec.min_objects < 1 || spec.max_objects > 4 || spec.min_objects > spec.max_objects) {
    throw ConfigError("dataset object counts must satisfy 1 <= min <= max <= 4");
  }
  Dataset out(spec.count);
  const auto n = static_cast<long>(spec.count);
  ParallelErrors errors(spec.count);
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < n; ++k) {
    errors.run(static_cast<std::size_t>(k), [&] {
      SceneSpec s = spec.scene;
      s.seed = derive_seed(spec.seed, spec.stream, static_cast<std::uint64_t>(k));
      std::mt19937_64 pick(s.seed ^ 0x5bd1e995ULL);
      s.num_objects = std::uniform_int_distribution<std::size_t>(spec.min_objects,
                                                                 spec.max_objects)(pick);
      out[static_cast<std::size_t>(k)] = gen_scene(s);
    });
  }
  errors.rethrow();
  return out;
}

}  // namespace wd::harness
