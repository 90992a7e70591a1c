#include "warpdetect/sampler.hpp"

#include "warpdetect/errors.hpp"

namespace wd {

SamplingGrid identity_grid(std::size_t height, std::size_t width) {
  if (height < 2 || width < 2) throw ConfigError("identity grid needs height, width >= 2");
  SamplingGrid g{height, width, Tensor({height, width, 2})};
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      g.coords[(i * width + j) * 2] = lattice_coord(j, width);
      g.coords[(i * width + j) * 2 + 1] = lattice_coord(i, height);
    }
  }
  return g;
}

Var bilinear_sample(Tape& tape, Var input, Var grid, PaddingPolicy padding) {
  const Tensor& x = tape.value(input);
  const Tensor& gr = tape.value(grid);
  if (x.rank() != 3) throw DimensionError("bilinear_sample: input must be [C,H,W]");
  if (gr.rank() != 3 || gr.dim(2) != 2) {
    throw DimensionError("bilinear_sample: grid must be [H,W,2], got " + shape_string(gr.shape()));
  }
  if (x.dim(1) < 2 || x.dim(2) < 2) throw DimensionError("bilinear_sample: input below 2x2");
  kernels::SampleGeometry g{x.dim(0), x.dim(1), x.dim(2), gr.dim(0), gr.dim(1), padding.mode};
  Tensor y({g.channels, g.out_h, g.out_w});
  kernels::omp::bilinear_forward(g, x.data(), gr.data(), y.data());
  return tape.record(std::move(y), {input, grid}, [input, grid, g](Tape& tp, Var out) {
    kernels::omp::bilinear_backward(
        g, tp.value(input).data(), tp.value(grid).data(), tp.grad_buffer(out),
        tp.requires_grad(input) ? tp.grad_buffer(input) : std::span<double>{},
        tp.requires_grad(grid) ? tp.grad_buffer(grid) : std::span<double>{});
  });
}

Tensor bilinear_sample(const Tensor& input, const SamplingGrid& grid, PaddingPolicy padding) {
  Tape tape(false);
  const Var y = bilinear_sample(tape, tape.input(input), tape.input(grid.coords), padding);
  return tape.value(y);
}

}  // namespace wd
