#include "warpdetect/harness/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "warpdetect/errors.hpp"
#include "warpdetect/sampler.hpp"

namespace wd::harness {

void AugmentationSpec::validate() const {
  if (rotation_deg < 0 || shear_deg < 0) throw ConfigError("augmentation ranges must be >= 0");
  if (shear_deg >= 90) throw ConfigError("shear_deg must be < 90");
  if (crop_fraction < 0 || crop_fraction >= 1) {
    throw ConfigError("crop_fraction must be in [0, 1)");
  }
}

AugmentationSpec named_augmentation(const std::string& name, const AugmentationSpec& ranges) {
  AugmentationSpec spec = ranges;
  spec.rotation = spec.shear = spec.crop = false;
  spec.fixed_rotation_deg.reset();
  if (name == "none") return spec;
  if (name == "all") {
    spec.rotation = spec.shear = spec.crop = true;
    return spec;
  }
  std::stringstream in(name);
  std::string part;
  while (std::getline(in, part, '+')) {
    if (part == "rotation") spec.rotation = true;
    else if (part == "shear") spec.shear = true;
    else if (part == "crop") spec.crop = true;
    else throw ConfigError("unknown augmentation '" + part + "'");
  }
  return spec;
}

std::string AugmentationSpec::name() const {
  if (!any()) return "none";
  if (rotation && shear && crop) return "all";
  std::string out;
  const auto add = [&](bool on, const char* n) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += n;
  };
  add(rotation, "rotation");
  add(shear, "shear");
  add(crop, "crop");
  return out;
}

namespace {

// Forward map p' = A p + b in pixel-area coordinates (x right, y down).
struct Affine {
  std::array<double, 4> a{1, 0, 0, 1};
  std::array<double, 2> b{0, 0};

  Point2 apply(Point2 p) const {
    return {a[0] * p.x + a[1] * p.y + b[0], a[2] * p.x + a[3] * p.y + b[1]};
  }
  // this after other
  Affine after(const Affine& o) const {
    Affine r;
    r.a = {a[0] * o.a[0] + a[1] * o.a[2], a[0] * o.a[1] + a[1] * o.a[3],
           a[2] * o.a[0] + a[3] * o.a[2], a[2] * o.a[1] + a[3] * o.a[3]};
    r.b = {a[0] * o.b[0] + a[1] * o.b[1] + b[0], a[2] * o.b[0] + a[3] * o.b[1] + b[1]};
    return r;
  }
  Affine inverse() const {
    const double det = a[0] * a[3] - a[1] * a[2];
    Affine r;
    r.a = {a[3] / det, -a[1] / det, -a[2] / det, a[0] / det};
    r.b = {-(r.a[0] * b[0] + r.a[1] * b[1]), -(r.a[2] * b[0] + r.a[3] * b[1])};
    return r;
  }
};

// Linear map m applied about center c.
Affine about(double cx, double cy, std::array<double, 4> m) {
  Affine r;
  r.a = m;
  r.b = {cx - (m[0] * cx + m[1] * cy), cy - (m[2] * cx + m[3] * cy)};
  return r;
}

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

Augmented augment(const Tensor& image, std::span<const GroundTruthBox> labels,
                  const AugmentationSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (image.rank() != 3) throw DimensionError("augment expects [C,H,W]");
  Augmented out;
  if (!spec.any()) {
    out.image = image;
    out.labels.assign(labels.begin(), labels.end());
    return out;
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  const double fw = static_cast<double>(w), fh = static_cast<double>(h);
  const double cx = 0.5 * fw, cy = 0.5 * fh;
  std::mt19937_64 rng(seed);
  const auto draw = [&](double range) {
    return std::uniform_real_distribution<double>(-range, range)(rng);
  };

  Affine map;
  if (spec.rotation) {
    const double deg = spec.fixed_rotation_deg ? *spec.fixed_rotation_deg : draw(spec.rotation_deg);
    const double c = std::cos(radians(deg)), s = std::sin(radians(deg));
    map = about(cx, cy, {c, -s, s, c}).after(map);
  }
  if (spec.shear) {
    const double sx = std::tan(radians(draw(spec.shear_deg)));
    const double sy = std::tan(radians(draw(spec.shear_deg)));
    map = about(cx, cy, {1.0, sx, sy, 1.0}).after(map);
  }
  if (spec.crop) {
    // Keep a (1 - f) window at a random offset and scale it back to full size.
    const double keep = 1.0 - spec.crop_fraction;
    const double ox = std::uniform_real_distribution<double>(0.0, spec.crop_fraction * fw)(rng);
    const double oy = std::uniform_real_distribution<double>(0.0, spec.crop_fraction * fh)(rng);
    Affine crop;
    crop.a = {1.0 / keep, 0.0, 0.0, 1.0 / keep};
    crop.b = {-ox / keep, -oy / keep};
    map = crop.after(map);
  }

  // Backward warp: output pixel center -> source position -> align-corners coords.
  const Affine inv = map.inverse();
  SamplingGrid grid;
  grid.height = h;
  grid.width = w;
  grid.coords = Tensor({h, w, 2});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const Point2 src = inv.apply({j + 0.5, i + 0.5});
      grid.coords[(i * w + j) * 2] = -1.0 + 2.0 * (src.x - 0.5) / (fw - 1.0);
      grid.coords[(i * w + j) * 2 + 1] = -1.0 + 2.0 * (src.y - 0.5) / (fh - 1.0);
    }
  }
  out.image = bilinear_sample(image, grid);

  for (const auto& gt : labels) {
    const double x0 = (gt.box.cx - 0.5 * gt.box.w) * fw, x1 = (gt.box.cx + 0.5 * gt.box.w) * fw;
    const double y0 = (gt.box.cy - 0.5 * gt.box.h) * fh, y1 = (gt.box.cy + 0.5 * gt.box.h) * fh;
    double lx = 1e300, ly = 1e300, hx = -1e300, hy = -1e300;
    for (const Point2 p : {Point2{x0, y0}, Point2{x1, y0}, Point2{x0, y1}, Point2{x1, y1}}) {
      const Point2 q = map.apply(p);
      lx = std::min(lx, q.x);
      hx = std::max(hx, q.x);
      ly = std::min(ly, q.y);
      hy = std::max(hy, q.y);
    }
    const double full = (hx - lx) * (hy - ly);
    const double clx = std::clamp(lx, 0.0, fw), chx = std::clamp(hx, 0.0, fw);
    const double cly = std::clamp(ly, 0.0, fh), chy = std::clamp(hy, 0.0, fh);
    const double kept = (chx - clx) * (chy - cly);
    if (!(full > 0.0) || kept < 0.2 * full) continue;
    GroundTruthBox t = gt;
    t.box = {0.5 * (clx + chx) / fw, 0.5 * (cly + chy) / fh, (chx - clx) / fw, (chy - cly) / fh};
    out.labels.push_back(t);
  }
  if (out.labels.empty() && !labels.empty()) {
    out.skipped = true;
    out.notice = "augmentation dropped every label; scene skipped";
  }
  return out;
}

}  // namespace wd::harness
