#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "warpdetect/autodiff.hpp"
#include "warpdetect/parameters.hpp"
#include "warpdetect/sampler.hpp"
#include "warpdetect/tps.hpp"

namespace wd {

enum class WarpMode { affine, tps };

struct StnConfig {
  std::size_t grid_size = 4;  // control points per side
  double lambda = 0.01;
  double displacement_scale = 0.25;
  WarpMode mode = WarpMode::tps;
  /// 2x2 average pools applied to the image before the localization convs.
  std::size_t input_downsample = 1;

  /// Throws ConfigError when grid_size^2 < 3, displacement_scale <= 0 or lambda < 0.
  void validate() const;
};

/// Two 3x3 conv layers (8 then 16 channels, ReLU, 2x2 average pool each)
/// and a fully connected head to 2*G^2 raw displacements.
struct LocalizationNet {
  std::size_t in_channels = 3;
  std::size_t height = 0, width = 0;  // image size the head was built for
  std::size_t grid_size = 4;
  std::size_t input_downsample = 1;
  Tensor conv1_w, conv1_b, conv2_w, conv2_b, head_w, head_b;

  /// Conv layers uniform-initialized; head weights and bias exactly zero.
  static LocalizationNet create(std::size_t in_channels, std::size_t height, std::size_t width,
                                const StnConfig& cfg, std::mt19937_64& rng);
  void append_parameters(ParameterList& out, const std::string& prefix);
};

/// Regular G x G source lattice over [-1, 1]^2, row-major (y outer).
std::vector<Point2> control_lattice(std::size_t grid_size);

/// Displacements [G*G, 2] = displacement_scale * tanh(head output).
Var localize(Tape& tape, const LocalizationNet& net, const StnConfig& cfg, Var image);
Tensor localize(const LocalizationNet& net, const StnConfig& cfg, const Tensor& image);

/// Cached fit/grid operators for one image size: displacements -> warped image.
class StnWarp {
 public:
  StnWarp(const StnConfig& cfg, std::size_t height, std::size_t width);

  const StnConfig& config() const { return cfg_; }
  const std::vector<Point2>& sources() const { return fitter_.source(); }

  /// Warp coefficients [(N+3),2] for the given displacements [N,2].
  Var coefficients(Tape& tape, Var displacements) const;
  /// Backward-warps image [C,H,W] through the fitted transform (zeros padding).
  Var warp(Tape& tape, Var image, Var displacements) const;
  Var forward(Tape& tape, const LocalizationNet& net, Var image) const;

 private:
  StnConfig cfg_;
  std::size_t height_, width_;
  Tensor lattice_;  // [N,2]
  WarpFitter fitter_;
  GridBasis basis_;
};

Tensor stn_tps_forward(const LocalizationNet& net, const StnConfig& cfg, const Tensor& image);

}  // namespace wd
