#include "warpdetect/stn.hpp"

#include "warpdetect/errors.hpp"
#include "warpdetect/ops.hpp"

namespace wd {

void StnConfig::validate() const {
  if (grid_size < 2 || grid_size * grid_size < 3) {
    throw ConfigError("STN grid_size must be >= 2");
  }
  if (!(displacement_scale > 0.0)) throw ConfigError("STN displacement_scale must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("STN lambda must be >= 0");
}

namespace {

constexpr std::size_t kConv1 = 8;
constexpr std::size_t kConv2 = 16;

std::size_t feature_side(std::size_t side, std::size_t downsample) {
  return side >> (downsample + 2);
}

void require_input(std::size_t h, std::size_t w, std::size_t downsample) {
  const std::size_t factor = std::size_t{1} << (downsample + 2);
  if (h < 8 || w < 8 || h % factor || w % factor) {
    throw ConfigError("localization network needs H, W >= 8 and divisible by " +
                      std::to_string(factor) + ", got " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
}

}  // namespace

LocalizationNet LocalizationNet::create(std::size_t in_channels, std::size_t height,
                                        std::size_t width, const StnConfig& cfg,
                                        std::mt19937_64& rng) {
  cfg.validate();
  require_input(height, width, cfg.input_downsample);
  LocalizationNet net;
  net.in_channels = in_channels;
  net.height = height;
  net.width = width;
  net.grid_size = cfg.grid_size;
  net.input_downsample = cfg.input_downsample;
  net.conv1_w = init_uniform({kConv1, in_channels, 3, 3}, in_channels * 9, rng);
  net.conv1_b = init_uniform({kConv1}, in_channels * 9, rng);
  net.conv2_w = init_uniform({kConv2, kConv1, 3, 3}, kConv1 * 9, rng);
  net.conv2_b = init_uniform({kConv2}, kConv1 * 9, rng);
  const std::size_t features = kConv2 * feature_side(height, cfg.input_downsample) *
                               feature_side(width, cfg.input_downsample);
  const std::size_t outputs = 2 * cfg.grid_size * cfg.grid_size;
  net.head_w = Tensor({outputs, features}, 0.0);
  net.head_b = Tensor({outputs}, 0.0);
  return net;
}

void LocalizationNet::append_parameters(ParameterList& out, const std::string& prefix) {
  out.emplace_back(prefix + "conv1_w", &conv1_w);
  out.emplace_back(prefix + "conv1_b", &conv1_b);
  out.emplace_back(prefix + "conv2_w", &conv2_w);
  out.emplace_back(prefix + "conv2_b", &conv2_b);
  out.emplace_back(prefix + "head_w", &head_w);
  out.emplace_back(prefix + "head_b", &head_b);
}

std::vector<Point2> control_lattice(std::size_t grid_size) {
  std::vector<Point2> pts;
  pts.reserve(grid_size * grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) {
    for (std::size_t j = 0; j < grid_size; ++j) {
      pts.push_back({lattice_coord(j, grid_size), lattice_coord(i, grid_size)});
    }
  }
  return pts;
}

Var localize(Tape& tape, const LocalizationNet& net, const StnConfig& cfg, Var image) {
  const Tensor& img = tape.value(image);
  if (img.rank() != 3 || img.dim(0) != net.in_channels) {
    throw DimensionError("localize: image must be [" + std::to_string(net.in_channels) +
                         ",H,W], got " + shape_string(img.shape()));
  }
  require_input(img.dim(1), img.dim(2), net.input_downsample);
  if (img.dim(1) != net.height || img.dim(2) != net.width) {
    throw DimensionError("localize: network built for " + std::to_string(net.height) + "x" +
                         std::to_string(net.width) + " images");
  }
  Var x = image;
  for (std::size_t i = 0; i < net.input_downsample; ++i) x = avg_pool2(tape, x);
  x = avg_pool2(tape, relu(tape, conv2d(tape, x, tape.parameter(net.conv1_w),
                                        tape.parameter(net.conv1_b), 1, 1)));
  x = avg_pool2(tape, relu(tape, conv2d(tape, x, tape.parameter(net.conv2_w),
                                        tape.parameter(net.conv2_b), 1, 1)));
  Var raw = linear(tape, x, tape.parameter(net.head_w), tape.parameter(net.head_b));
  raw = reshape(tape, raw, {net.grid_size * net.grid_size, 2});
  return scale(tape, tanh(tape, raw), cfg.displacement_scale);
}

Tensor localize(const LocalizationNet& net, const StnConfig& cfg, const Tensor& image) {
  Tape tape(false);
  return tape.value(localize(tape, net, cfg, tape.input(image)));
}

namespace {

Tensor lattice_tensor(const std::vector<Point2>& pts) {
  Tensor t({pts.size(), 2});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t[2 * i] = pts[i].x;
    t[2 * i + 1] = pts[i].y;
  }
  return t;
}

}  // namespace

StnWarp::StnWarp(const StnConfig& cfg, std::size_t height, std::size_t width)
    : cfg_((cfg.validate(), cfg)),
      height_(height),
      width_(width),
      lattice_(lattice_tensor(control_lattice(cfg.grid_size))),
      fitter_(control_lattice(cfg.grid_size), cfg.lambda,
              cfg.mode == WarpMode::tps ? WarpFitter::Kind::tps : WarpFitter::Kind::affine),
      basis_(fitter_.source(), height, width) {}

Var StnWarp::coefficients(Tape& tape, Var displacements) const {
  const Var targets = add_constant(tape, displacements, lattice_);
  return fitter_.fit(tape, targets);
}

Var StnWarp::warp(Tape& tape, Var image, Var displacements) const {
  const Tensor& img = tape.value(image);
  if (img.rank() != 3 || img.dim(1) != height_ || img.dim(2) != width_) {
    throw DimensionError("STN warp built for " + std::to_string(height_) + "x" +
                         std::to_string(width_) + ", got " + shape_string(img.shape()));
  }
  const Var grid = basis_.apply(tape, coefficients(tape, displacements));
  return bilinear_sample(tape, image, grid, PaddingPolicy{kernels::PaddingMode::zeros});
}

Var StnWarp::forward(Tape& tape, const LocalizationNet& net, Var image) const {
  return warp(tape, image, localize(tape, net, cfg_, image));
}

Tensor stn_tps_forward(const LocalizationNet& net, const StnConfig& cfg, const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("stn_tps_forward: image must be [C,H,W]");
  const StnWarp warp(cfg, image.dim(1), image.dim(2));
  Tape tape(false);
  return tape.value(warp.forward(tape, net, tape.input(image)));
}

}  // namespace wd
