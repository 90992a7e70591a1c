#include "warpdetect/harness/model.hpp"

#include <random>

#include "warpdetect/errors.hpp"
#include "warpdetect/ops.hpp"

namespace wd::harness {

namespace {
constexpr double kInputMean = 0.5;
constexpr double kInputGain = 4.0;
}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::yolo: return "yolo";
    case Variant::stn: return "stn";
    case Variant::stn_tps: return "stn_tps";
    case Variant::cbam_stn: return "cbam_stn";
    case Variant::cbam_stn_tps: return "cbam_stn_tps";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : all_variants()) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name + "'");
}

std::vector<Variant> all_variants() {
  return {Variant::yolo, Variant::stn, Variant::stn_tps, Variant::cbam_stn, Variant::cbam_stn_tps};
}

bool has_stn(Variant v) { return v != Variant::yolo; }
bool has_cbam(Variant v) { return v == Variant::cbam_stn || v == Variant::cbam_stn_tps; }
bool has_tps(Variant v) { return v == Variant::stn_tps || v == Variant::cbam_stn_tps; }

void ModelConfig::validate() const {
  if (image_size < 16 || image_size % 8 != 0) {
    throw ConfigError("image_size must be a multiple of 8 and at least 16");
  }
  if (stem_channels == 0 || width == 0) throw ConfigError("channel counts must be positive");
  stn.validate();
  if (stem_channels % cbam_reduction != 0) {
    throw ConfigError("stem_channels must be a multiple of cbam_reduction");
  }
}

Model build_model(Variant variant, const ModelConfig& cfg_in, std::uint64_t seed) {
  ModelConfig cfg = cfg_in;
  cfg.stn.mode = has_tps(variant) ? WarpMode::tps : WarpMode::affine;
  cfg.validate();
  std::mt19937_64 rng(seed);
  Model m;
  m.variant = variant;
  m.cfg = cfg;
  const std::size_t s = cfg.image_size;
  if (has_stn(variant)) {
    m.loc = LocalizationNet::create(3, s, s, cfg.stn, rng);
    m.warp = std::make_shared<const StnWarp>(cfg.stn, s, s);
  }
  m.stem_w = init_uniform({cfg.stem_channels, 3, 3, 3}, 27, rng);
  m.stem_b = init_uniform({cfg.stem_channels}, 27, rng);
  if (has_cbam(variant)) m.cbam = CbamParams::create(cfg.stem_channels, cfg.cbam_reduction, rng);
  std::size_t in = cfg.stem_channels;
  for (std::size_t b = 0; b < 3; ++b) {
    m.block_w[b] = init_uniform({cfg.width, in, 3, 3}, in * 9, rng);
    m.block_b[b] = init_uniform({cfg.width}, in * 9, rng);
    in = cfg.width;
  }
  m.head = HeadParams::create(cfg.width, cfg.head, rng);
  return m;
}

ParameterList Model::parameters() {
  ParameterList out;
  if (loc) loc->append_parameters(out, "stn.");
  out.emplace_back("stem.w", &stem_w);
  out.emplace_back("stem.b", &stem_b);
  if (cbam) cbam->append_parameters(out, "cbam.");
  for (std::size_t b = 0; b < 3; ++b) {
    out.emplace_back("block" + std::to_string(b) + ".w", &block_w[b]);
    out.emplace_back("block" + std::to_string(b) + ".b", &block_b[b]);
  }
  head.append_parameters(out, "head.");
  return out;
}

std::size_t Model::parameter_count() const {
  return wd::parameter_count(const_cast<Model*>(this)->parameters());
}

HeadOutput Model::forward(Tape& t, Var image, std::vector<std::string>* trace) const {
  const auto mark = [&](const char* stage) {
    if (trace) trace->emplace_back(stage);
  };
  mark("input");
  Var x = image;
  if (loc) {
    Var disp = localize(t, *loc, warp->config(), x);
    mark("stn.localize");
    x = warp->warp(t, x, disp);
    mark(has_tps(variant) ? "stn.tps_sample" : "stn.affine_sample");
  }
  // Pixels in [0,1] -> roughly zero mean, unit spread. After the STN so its
  // identity pass-through is untouched.
  const Tensor& raw = t.value(x);
  x = scale(t, add_constant(t, x, Tensor(raw.shape(), -kInputMean)), kInputGain);
  x = relu(t, conv2d(t, avg_pool2(t, x), t.parameter(stem_w), t.parameter(stem_b), 1, 1));
  mark("stem");
  if (cbam) {
    x = cbam_forward(t, *cbam, x);
    mark("cbam");
  }
  for (std::size_t b = 0; b < 3; ++b) {
    if (b < 2) x = avg_pool2(t, x);
    x = relu(t, conv2d(t, x, t.parameter(block_w[b]), t.parameter(block_b[b]), 1, 1));
  }
  mark("backbone");
  HeadOutput out = head_forward(t, head, x);
  mark("head");
  return out;
}

std::vector<Detection> Model::predict(const Tensor& image, double score_threshold,
                                      double nms_iou) const {
  Tape t(false);
  const HeadOutput out = forward(t, t.input(image));
  auto dets = decode_detections(cfg.head, t.value(out.cls_logits), t.value(out.box_raw),
                                score_threshold);
  return nms(std::move(dets), nms_iou, score_threshold);
}

Tensor Model::rectify(const Tensor& image) const {
  if (!loc) return image;
  Tape t(false);
  Var x = t.input(image);
  return t.value(warp->forward(t, *loc, x));
}

}  // namespace wd::harness
