#include "warpdetect/gradsuite.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <random>

#include "warpdetect/cbam.hpp"
#include "warpdetect/detect.hpp"
#include "warpdetect/errors.hpp"
#include "warpdetect/harness/model.hpp"
#include "warpdetect/ops.hpp"
#include "warpdetect/sampler.hpp"
#include "warpdetect/stn.hpp"

namespace wd {

namespace {

using Rng = std::mt19937_64;

Tensor random(Shape shape, double lo, double hi, Rng& rng) { return Tensor::uniform(std::move(shape), lo, hi, rng); }

// sum(x * w) for a fixed random weighting, so every output element matters.
Var weighted_sum(Tape& t, Var x, const Tensor& w) { return sum(t, mul(t, x, t.input(w))); }

GradCheckReport merge(const std::string& name, const std::vector<GradCheckReport>& parts) {
  GradCheckReport r;
  r.op_name = name;
  r.pass = true;
  for (const auto& p : parts) {
    r.max_relative_error = std::max(r.max_relative_error, p.max_relative_error);
    r.pass = r.pass && p.pass;
    r.inconclusive = r.inconclusive || p.inconclusive;
    r.per_input_errors.insert(r.per_input_errors.end(), p.per_input_errors.begin(), p.per_input_errors.end());
    r.coordinates_checked += p.coordinates_checked;
    r.coordinates_skipped += p.coordinates_skipped;
    r.coordinates_unresolved += p.coordinates_unresolved;
  }
  return r;
}

std::vector<Tensor*> tensors(const ParameterList& params) {
  std::vector<Tensor*> out;
  for (const auto& [name, p] : params) out.push_back(p);
  return out;
}

std::vector<Point2> jittered_lattice(std::size_t g, double amount, Rng& rng) {
  std::uniform_real_distribution<double> u(-amount, amount);
  auto pts = control_lattice(g);
  for (auto& p : pts) {
    p.x += u(rng);
    p.y += u(rng);
  }
  return pts;
}

Tensor points_tensor(const std::vector<Point2>& pts) {
  Tensor t({pts.size(), 2});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t[2 * i] = pts[i].x;
    t[2 * i + 1] = pts[i].y;
  }
  return t;
}

GradCheckReport check_warp_grid(const std::string& name, WarpFitter::Kind kind, std::uint64_t seed,
                                const GradCheckOptions& opts) {
  Rng rng(seed);
  auto fitter = std::make_shared<WarpFitter>(control_lattice(3), 0.01, kind);
  auto basis = std::make_shared<GridBasis>(fitter->source(), 5, 6);
  const Tensor w = random({5, 6, 2}, 0.5, 1.5, rng);
  const ScalarFunction fn = [=](Tape& t, std::span<const Var> in) {
    return weighted_sum(t, basis->apply(t, fitter->fit(t, in[0])), w);
  };
  return gradcheck(name, fn, {points_tensor(jittered_lattice(3, 0.15, rng))}, opts);
}

GradCheckReport check_sampler(const std::string& name, kernels::PaddingMode mode, std::uint64_t seed,
                              const GradCheckOptions& opts) {
  Rng rng(seed);
  const Tensor image = random({2, 5, 6}, -1.0, 1.0, rng);
  const Tensor grid = random({4, 5, 2}, -1.15, 1.15, rng);
  const Tensor w = random({2, 4, 5}, 0.5, 1.5, rng);
  const ScalarFunction fn = [=](Tape& t, std::span<const Var> in) {
    return weighted_sum(t, bilinear_sample(t, in[0], in[1], PaddingPolicy{mode}), w);
  };
  return gradcheck(name, fn, {image, grid}, opts);
}

GradCheckReport check_cbam_part(const std::string& name, int part, std::uint64_t seed,
                                const GradCheckOptions& opts) {
  Rng rng(seed);
  auto params = std::make_shared<CbamParams>(CbamParams::create(8, 4, rng));
  const Tensor input = random({8, 5, 5}, -1.0, 1.0, rng);
  const Shape out_shape = part == 0 ? Shape{8} : part == 1 ? Shape{1, 5, 5} : Shape{8, 5, 5};
  const Tensor w = random(out_shape, 0.5, 1.5, rng);
  const auto apply = [params, part](Tape& t, Var x) {
    if (part == 0) return channel_attention(t, *params, x);
    if (part == 1) return spatial_attention(t, *params, x);
    return cbam_forward(t, *params, x);
  };
  const ScalarFunction fn = [=](Tape& t, std::span<const Var> in) {
    return weighted_sum(t, apply(t, in[0]), w);
  };
  auto r_in = gradcheck(name, fn, {input}, opts);
  ParameterList plist;
  params->append_parameters(plist, "");
  if (part == 0) plist = {plist[0], plist[1]};
  if (part == 1) plist = {plist[2], plist[3]};
  const ParameterFunction pfn = [=](Tape& t) { return weighted_sum(t, apply(t, t.input(input)), w); };
  auto r_p = gradcheck_parameters(name, pfn, tensors(plist), opts);
  return merge(name, {r_in, r_p});
}

Box random_box(Rng& rng) {
  std::uniform_real_distribution<double> c(0.2, 0.8), s(0.1, 0.4);
  return {c(rng), c(rng), s(rng), s(rng)};
}

GradCheckReport check_ciou(std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  const Box gt = random_box(rng);
  const Box pred = random_box(rng);
  const ScalarFunction fn = [gt](Tape& t, std::span<const Var> in) {
    const Tensor& p = t.value(in[0]);
    const Box b{p[0], p[1], p[2], p[3]};
    std::array<double, 4> g{};
    const double loss = ciou_loss_grad(b, gt, g);
    return t.record(Tensor({1}, loss), {in[0]}, [g, x = in[0]](Tape& tp, Var out) {
      const double up = tp.grad(out)[0];
      const std::array<double, 4> d = {up * g[0], up * g[1], up * g[2], up * g[3]};
      tp.accumulate(x, d);
    });
  };
  return gradcheck("ciou", fn, {Tensor({4}, {pred.cx, pred.cy, pred.w, pred.h})}, opts);
}

GradCheckReport check_head(const std::string& name, bool dfl, std::uint64_t seed,
                           const GradCheckOptions& opts) {
  Rng rng(seed);
  HeadConfig cfg;
  cfg.dfl = dfl;
  cfg.dfl_bins = 6;
  auto head = std::make_shared<HeadParams>(HeadParams::create(6, cfg, rng));
  for (auto& v : head->cls_b.data()) v = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  const Tensor features = random({6, 4, 4}, -1.0, 1.0, rng);
  std::vector<GroundTruthBox> gts;
  for (int k = 0; k < 2; ++k) gts.push_back({random_box(rng), k});
  const auto loss = [head, gts](Tape& t, Var x) {
    return total_loss(t, head->cfg, head_forward(t, *head, x), gts);
  };
  const ScalarFunction fn = [=](Tape& t, std::span<const Var> in) { return loss(t, in[0]); };
  auto r_in = gradcheck(name, fn, {features}, opts);
  ParameterList plist;
  head->append_parameters(plist, "");
  const ParameterFunction pfn = [=](Tape& t) { return loss(t, t.input(features)); };
  return merge(name, {r_in, gradcheck_parameters(name, pfn, tensors(plist), opts)});
}

GradCheckReport check_stn(std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  StnConfig cfg;
  cfg.grid_size = 3;
  auto net = std::make_shared<LocalizationNet>(LocalizationNet::create(2, 16, 16, cfg, rng));
  // A nonzero head so the warp actually depends on the image.
  net->head_w = random(net->head_w.shape(), -0.05, 0.05, rng);
  net->head_b = random(net->head_b.shape(), -0.5, 0.5, rng);
  auto warp = std::make_shared<StnWarp>(cfg, 16, 16);
  const Tensor image = random({2, 16, 16}, 0.0, 1.0, rng);
  const Tensor w = random({2, 16, 16}, 0.5, 1.5, rng);
  GradCheckOptions capped = opts;
  if (!capped.max_coordinates) capped.max_coordinates = 24;
  const ScalarFunction fn = [=](Tape& t, std::span<const Var> in) {
    return weighted_sum(t, warp->forward(t, *net, in[0]), w);
  };
  auto r_in = gradcheck("stn", fn, {image}, capped);
  ParameterList plist;
  net->append_parameters(plist, "");
  const ParameterFunction pfn = [=](Tape& t) {
    return weighted_sum(t, warp->forward(t, *net, t.input(image)), w);
  };
  return merge("stn", {r_in, gradcheck_parameters("stn", pfn, tensors(plist), capped)});
}

GradCheckReport check_model(std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  harness::ModelConfig cfg;
  cfg.image_size = 16;
  auto model = std::make_shared<harness::Model>(
      harness::build_model(harness::Variant::cbam_stn_tps, cfg, seed));
  model->loc->head_w = random(model->loc->head_w.shape(), -0.05, 0.05, rng);
  model->loc->head_b = random(model->loc->head_b.shape(), -0.5, 0.5, rng);
  const Tensor image = random({3, 16, 16}, 0.0, 1.0, rng);
  std::vector<GroundTruthBox> gts = {{random_box(rng), 0}, {random_box(rng), 2}};
  const auto loss = [model, gts](Tape& t, Var x) {
    return total_loss(t, model->cfg.head, model->forward(t, x), gts);
  };
  GradCheckOptions capped = opts;
  if (!capped.max_coordinates) capped.max_coordinates = 8;
  const ScalarFunction fn = [=](Tape& t, std::span<const Var> in) { return loss(t, in[0]); };
  auto r_in = gradcheck("model", fn, {image}, capped);
  const ParameterFunction pfn = [=](Tape& t) { return loss(t, t.input(image)); };
  return merge("model", {r_in, gradcheck_parameters("model", pfn, tensors(model->parameters()), capped)});
}

using Check = std::function<GradCheckReport(std::uint64_t, const GradCheckOptions&)>;

const std::vector<std::pair<std::string, Check>>& registry() {
  static const std::vector<std::pair<std::string, Check>> checks = {
      {"tps_grid", [](auto s, const auto& o) { return check_warp_grid("tps_grid", WarpFitter::Kind::tps, s, o); }},
      {"affine_grid", [](auto s, const auto& o) { return check_warp_grid("affine_grid", WarpFitter::Kind::affine, s, o); }},
      {"sampler_zeros", [](auto s, const auto& o) { return check_sampler("sampler_zeros", kernels::PaddingMode::zeros, s, o); }},
      {"sampler_clamp", [](auto s, const auto& o) { return check_sampler("sampler_clamp", kernels::PaddingMode::clamp, s, o); }},
      {"cam", [](auto s, const auto& o) { return check_cbam_part("cam", 0, s, o); }},
      {"sam", [](auto s, const auto& o) { return check_cbam_part("sam", 1, s, o); }},
      {"cbam", [](auto s, const auto& o) { return check_cbam_part("cbam", 2, s, o); }},
      {"ciou", [](auto s, const auto& o) { return check_ciou(s, o); }},
      {"head", [](auto s, const auto& o) { return check_head("head", false, s, o); }},
      {"head_dfl", [](auto s, const auto& o) { return check_head("head_dfl", true, s, o); }},
      {"stn", [](auto s, const auto& o) { return check_stn(s, o); }},
      {"model", [](auto s, const auto& o) { return check_model(s, o); }},
  };
  return checks;
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

GradCheckReport run_gradcheck(const std::string& op, std::uint64_t seed, const GradCheckOptions& opts) {
  for (const auto& [name, fn] : registry()) {
    if (name == op) {
      GradCheckOptions o = opts;
      o.seed = seed;
      return fn(seed, o);
    }
  }
  throw ConfigError("unknown gradcheck op '" + op + "'");
}

}  // namespace wd
