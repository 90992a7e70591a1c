#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "warpdetect/errors.hpp"
#include "warpdetect/gradsuite.hpp"
#include "warpdetect/harness/archive.hpp"
#include "warpdetect/harness/dataset.hpp"
#include "warpdetect/harness/experiment.hpp"
#include "warpdetect/harness/image_io.hpp"
#include "warpdetect/harness/plot.hpp"
#include "warpdetect/kernels.hpp"
#include "warpdetect/sampler.hpp"
#include "warpdetect/tps.hpp"

namespace wd::cli {

namespace fs = std::filesystem;
using namespace wd::harness;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string part; std::getline(in, part, sep);) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) {
    KvDocument d;
    d.set("value", part);
    out.push_back(d.get_double("value"));
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

double max_residual(const TpsParams& p, const std::vector<Point2>& target) {
  double worst = 0.0;
  for (std::size_t i = 0; i < p.source.size(); ++i) {
    const Point2 q = tps_transform(p, p.source[i]);
    worst = std::max(worst, std::hypot(q.x - target[i].x, q.y - target[i].y));
  }
  return worst;
}

// ---- fit-tps ----

struct FitArgs {
  std::string source, target, out, name = "tps.txt", sweep;
  double lambda = 0.0;
};

int cmd_fit_tps(const FitArgs& a, std::ostream& out) {
  const ControlPointSet pts{load_points(a.source), load_points(a.target)};
  pts.validate();
  fs::create_directories(a.out);
  if (a.sweep.empty()) {
    const TpsParams p = fit_tps(pts, a.lambda);
    save_tps((fs::path(a.out) / a.name).string(), p);
    out << "bending_energy = " << fmt("%.10f", bending_energy(p)) << '\n';
    out << "max_residual = " << fmt("%.6e", max_residual(p, pts.target)) << '\n';
    return 0;
  }
  std::ostringstream table;
  table << "lambda energy max_residual\n";
  for (double lambda : parse_doubles(a.sweep)) {
    const TpsParams p = fit_tps(pts, lambda);
    table << format_double(lambda) << ' ' << format_double(bending_energy(p)) << ' '
          << format_double(max_residual(p, pts.target)) << '\n';
  }
  write_text(fs::path(a.out) / "sweep.txt", table.str());
  out << table.str();
  return 0;
}

// ---- warp ----

struct WarpArgs {
  std::string image, params, out, output = "warped.png", padding = "zeros";
  bool overlay = false;
  std::size_t lines = 8;
};

int cmd_warp(const WarpArgs& a, std::ostream& out) {
  const Tensor image = read_png(a.image);
  const TpsParams params = load_tps(a.params);
  PaddingPolicy pad;
  if (a.padding == "clamp") pad.mode = kernels::PaddingMode::clamp;
  else if (a.padding != "zeros") throw ConfigError("padding must be zeros or clamp");
  const std::size_t h = image.dim(1), w = image.dim(2);
  const SamplingGrid grid = make_grid(params, h, w);
  Tensor warped = bilinear_sample(image, grid, pad);
  if (a.overlay) {
    if (a.lines < 2) throw ConfigError("--lines must be at least 2");
    // Pixels whose source position lies on a regular source lattice line.
    const double sx = (w - 1.0) / static_cast<double>(a.lines - 1);
    const double sy = (h - 1.0) / static_cast<double>(a.lines - 1);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const Point2 src = grid.at(i, j);
        const double px = kernels::unnormalize(src.x, w), py = kernels::unnormalize(src.y, h);
        if (px < -0.5 || py < -0.5 || px > w - 0.5 || py > h - 0.5) continue;
        const double dx = std::abs(px / sx - std::round(px / sx)) * sx;
        const double dy = std::abs(py / sy - std::round(py / sy)) * sy;
        if (dx < 0.5 || dy < 0.5) {
          warped[(0 * h + i) * w + j] = 1.0;
          warped[(1 * h + i) * w + j] = 0.1;
          warped[(2 * h + i) * w + j] = 0.1;
        }
      }
    }
  }
  fs::create_directories(a.out);
  const fs::path dest = fs::path(a.out) / a.output;
  write_png(dest, warped);
  out << "wrote " << dest.string() << '\n';
  return 0;
}

// ---- gen-data ----

struct GenArgs {
  std::string out;
  std::size_t train = 600, val = 150, test = 150, image_size = 64, min_objects = 1, max_objects = 4;
  std::uint64_t seed = 2024;
  double occlusion = 0.5, bend = 0.6, clutter = 0.3;
};

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  DatasetSpec ds;
  ds.seed = a.seed;
  ds.min_objects = a.min_objects;
  ds.max_objects = a.max_objects;
  ds.scene.image_size = a.image_size;
  ds.scene.occlusion_prob = a.occlusion;
  ds.scene.bend_amplitude = a.bend;
  ds.scene.clutter_level = a.clutter;
  SceneSpec check = ds.scene;
  check.num_objects = a.min_objects;
  check.validate();
  KvDocument doc;
  doc.set("seed", std::to_string(a.seed));
  doc.set("scene.image_size", a.image_size);
  doc.set("scene.occlusion_prob", a.occlusion);
  doc.set("scene.bend_amplitude", a.bend);
  doc.set("scene.clutter_level", a.clutter);
  doc.set("scene.min_objects", a.min_objects);
  doc.set("scene.max_objects", a.max_objects);
  const std::pair<const char*, std::size_t> splits[] = {{"train", a.train}, {"val", a.val}, {"test", a.test}};
  fs::create_directories(a.out);
  for (std::size_t k = 0; k < 3; ++k) {
    if (splits[k].second == 0) continue;
    ds.count = splits[k].second;
    ds.stream = k;
    save_split(fs::path(a.out) / splits[k].first, gen_dataset(ds));
    doc.set(std::string(splits[k].first) + ".count", splits[k].second);
    out << splits[k].first << ": " << splits[k].second << " scenes\n";
  }
  doc.save(fs::path(a.out) / "dataset.txt");
  return 0;
}

// ---- gradcheck ----

struct GradArgs {
  std::string op = "all", out;
  std::size_t seeds = 10;
  double step = 1e-5, tolerance = 1e-4;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  std::vector<std::string> ops = a.op == "all" ? gradcheck_ops() : split(a.op, ',');
  GradCheckOptions opts;
  opts.step = a.step;
  opts.tolerance = a.tolerance;
  std::ostringstream report;
  bool ok = true;
  for (const auto& op : ops) {
    double worst = 0.0;
    std::size_t checked = 0, kinks = 0, unresolved = 0, failed = 0;
    for (std::size_t s = 0; s < a.seeds; ++s) {
      const auto r = run_gradcheck(op, s, opts);
      worst = std::max(worst, r.max_relative_error);
      checked += r.coordinates_checked;
      kinks += r.coordinates_skipped;
      unresolved += r.coordinates_unresolved;
      failed += r.pass ? 0 : 1;
    }
    ok = ok && failed == 0;
    report << (failed == 0 ? "PASS " : "FAIL ") << op << " max_rel_err " << fmt("%.3e", worst)
           << " checked " << checked << " kinks " << kinks << " unresolved " << unresolved
           << " failed_seeds " << failed << '\n';
  }
  out << report.str();
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "gradcheck.txt", report.str());
  }
  return ok ? 0 : 1;
}

// ---- experiment ----

struct ExpArgs {
  std::string config, out, variants, seeds, compare;
  std::size_t epochs = 0, train_count = 0, val_count = 0, test_count = 0, patience = 0;
  bool patience_set = false;
  bool dry_run = false, quiet = false;
};

RunConfig resolve_config(const std::string& path) {
  return path.empty() ? RunConfig{} : run_config_from(KvDocument::load(path));
}

int cmd_experiment(ExpArgs& a, CLI::App& sub, std::ostream& out) {
  RunConfig cfg = resolve_config(a.config);
  if (!a.variants.empty()) {
    cfg.variants.clear();
    for (const auto& v : split(a.variants, ',')) cfg.variants.push_back(parse_variant(v));
  }
  if (!a.seeds.empty()) {
    cfg.seeds.clear();
    for (const auto& s : split(a.seeds, ',')) cfg.seeds.push_back(std::stoull(s));
  }
  if (!a.compare.empty()) {
    cfg.compare.clear();
    for (const auto& p : split(a.compare, ',')) {
      const auto colon = p.find(':');
      if (colon == std::string::npos) throw ConfigError("--compare takes a:b pairs");
      cfg.compare.emplace_back(parse_variant(p.substr(0, colon)), parse_variant(p.substr(colon + 1)));
    }
  }
  if (sub.count("--epochs")) cfg.train.epochs = a.epochs;
  if (sub.count("--patience")) cfg.train.patience = a.patience;
  if (sub.count("--train-count")) cfg.train_count = a.train_count;
  if (sub.count("--val-count")) cfg.val_count = a.val_count;
  if (sub.count("--test-count")) cfg.test_count = a.test_count;
  if (!a.out.empty()) cfg.out = a.out;
  cfg.validate();
  if (a.dry_run) {
    to_document(cfg).write(out);
    return 0;
  }
  const ExperimentResult res = run_experiment(cfg, a.quiet ? nullptr : &out);
  out << res.table_text << '\n' << res.ttest_text;
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string config, variant, weights, augment = "none", data, out;
  std::uint64_t aug_seed = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(a.config);
  cfg.validate();
  Model model = build_model(parse_variant(a.variant), cfg.model, 0);
  load_parameters(a.weights, model.parameters());
  Dataset data;
  if (!a.data.empty()) {
    data = load_split(a.data);
  } else {
    DatasetSpec ds;
    ds.min_objects = cfg.min_objects;
    ds.max_objects = cfg.max_objects;
    ds.scene = cfg.scene;
    ds.seed = cfg.data_seed;
    ds.count = cfg.test_count;
    ds.stream = 2;
    data = gen_dataset(ds);
  }
  const AugmentationSpec aug = named_augmentation(a.augment, cfg.augmentation);
  const EvalResult ev = evaluate(model_detector(model, cfg.train.min_score, cfg.train.nms_iou),
                                 data, aug, a.aug_seed, cfg.train.match);
  for (const auto& n : ev.notices) out << "notice: " << n << '\n';
  fs::create_directories(fs::path(a.out) / "detections");
  KvDocument metrics;
  metrics.set("accuracy_definition", std::string("exact-scene"));
  metrics.set("augmentation", aug.name());
  write_metrics(metrics, "", ev.metrics);
  metrics.save(fs::path(a.out) / "metrics.txt");
  confusion_document(confusion_matrix(ev.detections, ev.labels, cfg.train.match))
      .save(fs::path(a.out) / "confusion.txt");
  for (std::size_t k = 0; k < ev.detections.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.txt", k);
    std::ofstream f(fs::path(a.out) / "detections" / name);
    write_detections(f, ev.detections[k]);
  }
  metrics.write(out);
  return 0;
}

// ---- stats ----

struct StatsArgs {
  std::string a, b, out;
};

int cmd_stats(const StatsArgs& s, std::ostream& out) {
  const auto xa = parse_doubles(s.a), xb = parse_doubles(s.b);
  const TTestResult r = paired_t_test(xa, xb);
  KvDocument doc;
  doc.set("n", r.n);
  doc.set("mean_difference", r.mean_difference);
  doc.set("t", r.t);
  doc.set("p", r.p);
  doc.set("significant_at_05", r.significant_at_05);
  doc.set("degenerate", r.degenerate);
  doc.write(out);
  if (!s.out.empty()) {
    fs::create_directories(s.out);
    doc.save(fs::path(s.out) / "stats.txt");
  }
  return 0;
}

// ---- plot ----

struct PlotArgs {
  std::vector<std::string> records;
  std::string confusion, out;
};

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  if (a.records.empty() && a.confusion.empty()) throw ConfigError("nothing to plot");
  std::vector<RunRecord> records;
  for (const auto& path : a.records) {
    if (!fs::exists(path)) throw IoError("missing report " + path);
    records.push_back(load_run_record(path));
  }
  std::vector<std::vector<std::size_t>> confusion;
  if (!a.confusion.empty()) {
    if (!fs::exists(a.confusion)) throw IoError("missing report " + a.confusion);
    const KvDocument doc = KvDocument::load(a.confusion);
    confusion = doc.has("model_variant") ? run_record_from(doc).confusion : confusion_from(doc);
    if (confusion.empty()) throw IoError(a.confusion + " has no confusion matrix");
  }
  fs::create_directories(a.out);
  if (!records.empty()) {
    std::vector<Series> loss, map;
    for (const auto& r : records) {
      const std::string label = to_string(r.variant) + " s" + std::to_string(r.seed);
      loss.push_back({label, {}, r.train_loss});
      std::vector<double> m;
      for (const auto& e : r.per_epoch_metrics) m.push_back(e.map50);
      map.push_back({label, {}, m});
    }
    line_chart("TRAINING LOSS", "EPOCH", loss).save(fs::path(a.out) / "loss.png");
    line_chart("VALIDATION MAP50", "EPOCH", map, true).save(fs::path(a.out) / "map50.png");
    out << "wrote loss.png, map50.png\n";
  }
  if (!confusion.empty()) {
    std::vector<std::string> labels;
    for (std::size_t k = 0; k + 1 < confusion.size(); ++k) {
      labels.push_back(k < kNumFamilies ? to_string(static_cast<ShapeFamily>(k)) : std::to_string(k));
    }
    labels.push_back("background");
    confusion_heatmap(confusion, labels).save(fs::path(a.out) / "confusion.png");
    out << "wrote confusion.png\n";
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  kernels::apply_thread_limit();
  CLI::App app{"Deformation-aware detection toolkit"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit-tps", "Fit a thin-plate spline to point correspondences");
  fit_cmd->add_option("--source", fit.source, "Source points, one 'x y' per line")->required();
  fit_cmd->add_option("--target", fit.target, "Target points")->required();
  fit_cmd->add_option("--lambda", fit.lambda, "Smoothing regularization");
  fit_cmd->add_option("--lambda-sweep", fit.sweep, "Comma-separated lambdas; prints an energy table");
  fit_cmd->add_option("--out", fit.out, "Output directory")->required();
  fit_cmd->add_option("--name", fit.name, "Parameter file name");

  WarpArgs warp;
  auto* warp_cmd = app.add_subcommand("warp", "Backward-warp a PNG through TPS parameters");
  warp_cmd->add_option("--image", warp.image)->required();
  warp_cmd->add_option("--params", warp.params)->required();
  warp_cmd->add_option("--out", warp.out, "Output directory")->required();
  warp_cmd->add_option("--output", warp.output, "Output file name");
  warp_cmd->add_option("--padding", warp.padding, "zeros or clamp");
  warp_cmd->add_flag("--grid-overlay", warp.overlay, "Draw the deformed lattice");
  warp_cmd->add_option("--lines", warp.lines, "Lattice lines per axis for the overlay");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write synthetic train/val/test splits");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--train", gen.train);
  gen_cmd->add_option("--val", gen.val);
  gen_cmd->add_option("--test", gen.test);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--image-size", gen.image_size);
  gen_cmd->add_option("--min-objects", gen.min_objects);
  gen_cmd->add_option("--max-objects", gen.max_objects);
  gen_cmd->add_option("--occlusion", gen.occlusion);
  gen_cmd->add_option("--bend", gen.bend);
  gen_cmd->add_option("--clutter", gen.clutter);

  GradArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad_cmd->add_option("--op", grad.op, "Operation name, comma list, or 'all'");
  grad_cmd->add_option("--seeds", grad.seeds);
  grad_cmd->add_option("--step", grad.step);
  grad_cmd->add_option("--tolerance", grad.tolerance);
  grad_cmd->add_option("--out", grad.out, "Optional output directory for the report");

  ExpArgs exp;
  auto* exp_cmd = app.add_subcommand("experiment", "Train and compare model variants");
  exp_cmd->add_option("--config", exp.config, "Run configuration file");
  exp_cmd->add_option("--variants", exp.variants, "Comma-separated variants");
  exp_cmd->add_option("--seeds", exp.seeds, "Comma-separated seeds");
  exp_cmd->add_option("--compare", exp.compare, "Comma-separated a:b pairs for t-tests");
  exp_cmd->add_option("--epochs", exp.epochs);
  exp_cmd->add_option("--patience", exp.patience);
  exp_cmd->add_option("--train-count", exp.train_count);
  exp_cmd->add_option("--val-count", exp.val_count);
  exp_cmd->add_option("--test-count", exp.test_count);
  exp_cmd->add_option("--out", exp.out, "Output directory");
  exp_cmd->add_flag("--dry-run", exp.dry_run, "Print the resolved configuration and exit");
  exp_cmd->add_flag("--quiet", exp.quiet, "Suppress per-epoch progress");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate saved weights on a test split");
  eval_cmd->add_option("--config", ev.config);
  eval_cmd->add_option("--variant", ev.variant)->required();
  eval_cmd->add_option("--weights", ev.weights)->required();
  eval_cmd->add_option("--augment", ev.augment, "none, rotation, shear, crop, all or a+b");
  eval_cmd->add_option("--aug-seed", ev.aug_seed);
  eval_cmd->add_option("--data", ev.data, "Split directory; default regenerates the test split");
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();

  StatsArgs st;
  auto* stats_cmd = app.add_subcommand("stats", "Paired t-test on two series");
  stats_cmd->add_option("--a", st.a, "Comma-separated values")->required();
  stats_cmd->add_option("--b", st.b, "Comma-separated values")->required();
  stats_cmd->add_option("--out", st.out);

  PlotArgs pl;
  auto* plot_cmd = app.add_subcommand("plot", "Render curves and confusion matrices as PNG");
  plot_cmd->add_option("--record", pl.records, "Run record files");
  plot_cmd->add_option("--confusion", pl.confusion, "Confusion document or run record");
  plot_cmd->add_option("--out", pl.out, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*fit_cmd) return cmd_fit_tps(fit, out);
    if (*warp_cmd) return cmd_warp(warp, out);
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*grad_cmd) return cmd_gradcheck(grad, out);
    if (*exp_cmd) return cmd_experiment(exp, *exp_cmd, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*stats_cmd) return cmd_stats(st, out);
    if (*plot_cmd) return cmd_plot(pl, out);
  } catch (const FitError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace wd::cli
