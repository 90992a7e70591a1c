#include "warpdetect/cbam.hpp"

#include "warpdetect/errors.hpp"
#include "warpdetect/ops.hpp"

namespace wd {

namespace {

void check_layout(std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels == 0 || channels % reduction != 0) {
    throw ConfigError("CBAM channels (" + std::to_string(channels) +
                      ") must be a positive multiple of the reduction ratio (" +
                      std::to_string(reduction) + ")");
  }
}

void check_input(const CbamParams& p, const Tensor& x) {
  if (x.rank() != 3 || x.dim(0) != p.channels) {
    throw DimensionError("CBAM expects [" + std::to_string(p.channels) + ",H,W], got " +
                         shape_string(x.shape()));
  }
}

Var mlp(Tape& tape, const CbamParams& p, Var pooled, Var zero_hidden, Var zero_out) {
  const Var hidden =
      relu(tape, linear(tape, pooled, tape.parameter(p.mlp_w0), zero_hidden));
  return linear(tape, hidden, tape.parameter(p.mlp_w1), zero_out);
}

}  // namespace

CbamParams CbamParams::create(std::size_t channels, std::size_t reduction, std::mt19937_64& rng) {
  check_layout(channels, reduction);
  CbamParams p;
  p.channels = channels;
  p.reduction = reduction;
  const std::size_t hidden = channels / reduction;
  p.mlp_w0 = init_uniform({hidden, channels}, channels, rng);
  p.mlp_w1 = init_uniform({channels, hidden}, hidden, rng);
  p.spatial_kernel = init_uniform({1, 2, 7, 7}, 2 * 49, rng);
  p.spatial_bias = init_uniform({1}, 2 * 49, rng);
  return p;
}

CbamParams CbamParams::zeros(std::size_t channels, std::size_t reduction) {
  check_layout(channels, reduction);
  CbamParams p;
  p.channels = channels;
  p.reduction = reduction;
  p.mlp_w0 = Tensor({channels / reduction, channels});
  p.mlp_w1 = Tensor({channels, channels / reduction});
  p.spatial_kernel = Tensor({1, 2, 7, 7});
  p.spatial_bias = Tensor({1});
  return p;
}

void CbamParams::append_parameters(ParameterList& out, const std::string& prefix) {
  out.emplace_back(prefix + "mlp_w0", &mlp_w0);
  out.emplace_back(prefix + "mlp_w1", &mlp_w1);
  out.emplace_back(prefix + "spatial_kernel", &spatial_kernel);
  out.emplace_back(prefix + "spatial_bias", &spatial_bias);
}

Var channel_attention(Tape& tape, const CbamParams& params, Var input) {
  check_input(params, tape.value(input));
  const Var zero_hidden = tape.input(Tensor({params.channels / params.reduction}));
  const Var zero_out = tape.input(Tensor({params.channels}));
  const Var avg = mlp(tape, params, global_pool(tape, input, PoolMode::average), zero_hidden,
                      zero_out);
  const Var max = mlp(tape, params, global_pool(tape, input, PoolMode::max), zero_hidden,
                      zero_out);
  return sigmoid(tape, add(tape, avg, max));
}

Var spatial_attention(Tape& tape, const CbamParams& params, Var input) {
  if (tape.value(input).rank() != 3) throw DimensionError("spatial attention expects [C,H,W]");
  const Var pooled = concat_channels(tape, channel_pool(tape, input, PoolMode::max),
                                     channel_pool(tape, input, PoolMode::average));
  return sigmoid(tape, conv2d(tape, pooled, tape.parameter(params.spatial_kernel),
                              tape.parameter(params.spatial_bias), 1, 3));
}

Var cbam_forward(Tape& tape, const CbamParams& params, Var input) {
  const Var refined = gate_channels(tape, input, channel_attention(tape, params, input));
  return gate_spatial(tape, refined, spatial_attention(tape, params, refined));
}

Tensor channel_attention(const CbamParams& params, const Tensor& input) {
  Tape tape(false);
  return tape.value(channel_attention(tape, params, tape.input(input)));
}

Tensor spatial_attention(const CbamParams& params, const Tensor& input) {
  Tape tape(false);
  return tape.value(spatial_attention(tape, params, tape.input(input)));
}

Tensor cbam_forward(const CbamParams& params, const Tensor& input) {
  Tape tape(false);
  return tape.value(cbam_forward(tape, params, tape.input(input)));
}

}  // namespace wd
