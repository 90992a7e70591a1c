#include "warpdetect/harness/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "warpdetect/errors.hpp"
#include "warpdetect/harness/archive.hpp"

namespace wd::harness {

void RunConfig::validate() const {
  SceneSpec s = scene;
  s.num_objects = 1;
  s.validate();
  if (min_objects < 1 || max_objects > 4 || min_objects > max_objects) {
    throw ConfigError("object counts must satisfy 1 <= min <= max <= 4");
  }
  if (train_count == 0 || val_count == 0 || test_count == 0) {
    throw ConfigError("split sizes must be positive");
  }
  if (variants.empty()) throw ConfigError("no variants requested");
  if (seeds.empty()) throw ConfigError("no seeds requested");
  if (model.image_size != scene.image_size) {
    throw ConfigError("model image size must match the scene image size");
  }
  if (model.head.num_classes != kNumFamilies) {
    throw ConfigError("the scene generator produces exactly 3 classes");
  }
  for (Variant v : variants) {
    ModelConfig m = model;
    m.stn.mode = has_tps(v) ? WarpMode::tps : WarpMode::affine;
    m.validate();
  }
  train.validate();
  augmentation.validate();
  for (const auto& name : test_augmentations) named_augmentation(name, augmentation);
  if (out.empty()) throw ConfigError("output directory must be set");
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "scene.image_size", "scene.occlusion_prob", "scene.bend_amplitude", "scene.clutter_level",
      "scene.min_objects", "scene.max_objects", "data.train_count", "data.val_count",
      "data.test_count", "data.seed", "variants", "seeds", "model.stem_channels", "model.width",
      "stn.grid_size", "stn.lambda", "stn.displacement_scale", "stn.input_downsample",
      "cbam.reduction", "head.dfl", "head.dfl_bins", "head.size_prior", "head.cls_prior",
      "loss.cls_weight", "loss.box_weight", "loss.dfl_weight", "optim.lr", "optim.beta1",
      "optim.beta2", "optim.eps", "optim.weight_decay", "train.epochs", "train.batch_size",
      "train.patience", "eval.iou_match", "eval.score_threshold", "eval.nms_iou",
      "eval.min_score", "aug.rotation_deg", "aug.shear_deg", "aug.crop_fraction", "aug.test_sets",
      "compare", "out"};
  return keys;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used == text.size() && text[0] != '-') return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + text + "'");
}

}  // namespace

KvDocument to_document(const RunConfig& c) {
  KvDocument d;
  d.set("scene.image_size", c.scene.image_size);
  d.set("scene.occlusion_prob", c.scene.occlusion_prob);
  d.set("scene.bend_amplitude", c.scene.bend_amplitude);
  d.set("scene.clutter_level", c.scene.clutter_level);
  d.set("scene.min_objects", c.min_objects);
  d.set("scene.max_objects", c.max_objects);
  d.set("data.train_count", c.train_count);
  d.set("data.val_count", c.val_count);
  d.set("data.test_count", c.test_count);
  d.set("data.seed", std::to_string(c.data_seed));
  std::vector<std::string> names;
  for (Variant v : c.variants) names.push_back(to_string(v));
  d.set_list("variants", names);
  std::vector<std::string> seeds;
  for (auto s : c.seeds) seeds.push_back(std::to_string(s));
  d.set_list("seeds", seeds);
  d.set("model.stem_channels", c.model.stem_channels);
  d.set("model.width", c.model.width);
  d.set("stn.grid_size", c.model.stn.grid_size);
  d.set("stn.lambda", c.model.stn.lambda);
  d.set("stn.displacement_scale", c.model.stn.displacement_scale);
  d.set("stn.input_downsample", c.model.stn.input_downsample);
  d.set("cbam.reduction", c.model.cbam_reduction);
  d.set("head.dfl", c.model.head.dfl);
  d.set("head.dfl_bins", c.model.head.dfl_bins);
  d.set("head.size_prior", c.model.head.size_prior);
  d.set("head.cls_prior", c.model.head.cls_prior);
  d.set("loss.cls_weight", c.model.head.cls_weight);
  d.set("loss.box_weight", c.model.head.box_weight);
  d.set("loss.dfl_weight", c.model.head.dfl_weight);
  d.set("optim.lr", c.train.optim.lr);
  d.set("optim.beta1", c.train.optim.beta1);
  d.set("optim.beta2", c.train.optim.beta2);
  d.set("optim.eps", c.train.optim.eps);
  d.set("optim.weight_decay", c.train.optim.weight_decay);
  d.set("train.epochs", c.train.epochs);
  d.set("train.batch_size", c.train.batch_size);
  d.set("train.patience", c.train.patience);
  d.set("eval.iou_match", c.train.match.iou_match);
  d.set("eval.score_threshold", c.train.match.score_threshold);
  d.set("eval.nms_iou", c.train.nms_iou);
  d.set("eval.min_score", c.train.min_score);
  d.set("aug.rotation_deg", c.augmentation.rotation_deg);
  d.set("aug.shear_deg", c.augmentation.shear_deg);
  d.set("aug.crop_fraction", c.augmentation.crop_fraction);
  d.set_list("aug.test_sets", c.test_augmentations);
  std::vector<std::string> pairs;
  for (const auto& [a, b] : c.compare) pairs.push_back(to_string(a) + ":" + to_string(b));
  d.set_list("compare", pairs);
  d.set("out", c.out.string());
  return d;
}

RunConfig run_config_from(const KvDocument& d) {
  d.reject_unknown(known_keys());
  RunConfig c;
  const auto opt_size = [&](const char* key, std::size_t& v) {
    if (d.has(key)) v = d.get_size(key);
  };
  const auto opt_double = [&](const char* key, double& v) {
    if (d.has(key)) v = d.get_double(key);
  };
  const auto opt_bool = [&](const char* key, bool& v) {
    if (d.has(key)) v = d.get_bool(key);
  };
  opt_size("scene.image_size", c.scene.image_size);
  opt_double("scene.occlusion_prob", c.scene.occlusion_prob);
  opt_double("scene.bend_amplitude", c.scene.bend_amplitude);
  opt_double("scene.clutter_level", c.scene.clutter_level);
  opt_size("scene.min_objects", c.min_objects);
  opt_size("scene.max_objects", c.max_objects);
  opt_size("data.train_count", c.train_count);
  opt_size("data.val_count", c.val_count);
  opt_size("data.test_count", c.test_count);
  if (d.has("data.seed")) c.data_seed = parse_u64("data.seed", d.get("data.seed"));
  if (d.has("variants")) {
    c.variants.clear();
    for (const auto& v : d.get_list("variants")) c.variants.push_back(parse_variant(v));
  }
  if (d.has("seeds")) {
    c.seeds.clear();
    for (const auto& s : d.get_list("seeds")) c.seeds.push_back(parse_u64("seeds", s));
  }
  opt_size("model.stem_channels", c.model.stem_channels);
  opt_size("model.width", c.model.width);
  opt_size("stn.grid_size", c.model.stn.grid_size);
  opt_double("stn.lambda", c.model.stn.lambda);
  opt_double("stn.displacement_scale", c.model.stn.displacement_scale);
  opt_size("stn.input_downsample", c.model.stn.input_downsample);
  opt_size("cbam.reduction", c.model.cbam_reduction);
  opt_bool("head.dfl", c.model.head.dfl);
  opt_size("head.dfl_bins", c.model.head.dfl_bins);
  opt_double("head.size_prior", c.model.head.size_prior);
  opt_double("head.cls_prior", c.model.head.cls_prior);
  opt_double("loss.cls_weight", c.model.head.cls_weight);
  opt_double("loss.box_weight", c.model.head.box_weight);
  opt_double("loss.dfl_weight", c.model.head.dfl_weight);
  opt_double("optim.lr", c.train.optim.lr);
  opt_double("optim.beta1", c.train.optim.beta1);
  opt_double("optim.beta2", c.train.optim.beta2);
  opt_double("optim.eps", c.train.optim.eps);
  opt_double("optim.weight_decay", c.train.optim.weight_decay);
  opt_size("train.epochs", c.train.epochs);
  opt_size("train.batch_size", c.train.batch_size);
  opt_size("train.patience", c.train.patience);
  opt_double("eval.iou_match", c.train.match.iou_match);
  opt_double("eval.score_threshold", c.train.match.score_threshold);
  opt_double("eval.nms_iou", c.train.nms_iou);
  opt_double("eval.min_score", c.train.min_score);
  opt_double("aug.rotation_deg", c.augmentation.rotation_deg);
  opt_double("aug.shear_deg", c.augmentation.shear_deg);
  opt_double("aug.crop_fraction", c.augmentation.crop_fraction);
  if (d.has("aug.test_sets")) c.test_augmentations = d.get_list("aug.test_sets");
  if (d.has("compare")) {
    c.compare.clear();
    for (const auto& p : d.get_list("compare")) {
      const auto colon = p.find(':');
      if (colon == std::string::npos) throw ConfigError("compare entries look like a:b, got '" + p + "'");
      c.compare.emplace_back(parse_variant(p.substr(0, colon)), parse_variant(p.substr(colon + 1)));
    }
  }
  if (d.has("out")) c.out = d.get("out");
  c.model.image_size = c.scene.image_size;
  c.train.match.num_classes = c.model.head.num_classes;
  return c;
}

double metric_value(const MetricsReport& m, const std::string& name) {
  if (name == "accuracy") return m.accuracy;
  if (name == "precision") return m.precision;
  if (name == "recall") return m.recall;
  if (name == "map50") return m.map50;
  if (name == "f1") return m.f1;
  if (name == "false_positive_count") return static_cast<double>(m.false_positive_count);
  if (name == "mean_inference_ms") return m.mean_inference_ms;
  throw ConfigError("unknown metric '" + name + "'");
}

namespace {

const MetricsReport& pick(const RunRecord& r, const std::string& augmentation) {
  if (augmentation.empty() || augmentation == "none") return r.final;
  const auto it = r.augmented.find(augmentation);
  if (it == r.augmented.end()) throw ConfigError("record has no '" + augmentation + "' metrics");
  return it->second;
}

std::vector<ComparisonRow> summarize_for(const std::vector<RunRecord>& records,
                                         const std::vector<Variant>& variants,
                                         const std::string& augmentation) {
  std::vector<ComparisonRow> rows;
  for (Variant v : variants) {
    ComparisonRow row{v, {}, {}};
    for (const auto& metric : kTableMetrics) {
      std::vector<double> xs;
      for (const auto& r : records) {
        if (r.variant == v) xs.push_back(metric_value(pick(r, augmentation), metric));
      }
      double mean = 0.0;
      for (double x : xs) mean += x;
      mean = xs.empty() ? 0.0 : mean / static_cast<double>(xs.size());
      double ss = 0.0;
      for (double x : xs) ss += (x - mean) * (x - mean);
      row.mean.push_back(mean);
      row.stddev.push_back(xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0);
    }
    rows.push_back(row);
  }
  return rows;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::vector<ComparisonRow> summarize(const std::vector<RunRecord>& records,
                                     const std::vector<Variant>& variants) {
  return summarize_for(records, variants, "");
}

std::string format_table(const std::vector<ComparisonRow>& rows) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"variant"};
  for (const auto& m : kTableMetrics) header.push_back(m == "false_positive_count" ? "FP" : m);
  header.push_back("FP/yolo");
  cells.push_back(header);
  const auto yolo = std::find_if(rows.begin(), rows.end(),
                                 [](const ComparisonRow& r) { return r.variant == Variant::yolo; });
  for (const auto& row : rows) {
    std::vector<std::string> line = {to_string(row.variant)};
    for (std::size_t k = 0; k < kTableMetrics.size(); ++k) {
      const bool count = kTableMetrics[k] == "false_positive_count";
      // Lower is better for false positives, higher for the rest.
      bool best = true;
      for (const auto& other : rows) {
        if (count ? other.mean[k] < row.mean[k] : other.mean[k] > row.mean[k]) best = false;
      }
      const double scale = count ? 1.0 : 100.0;
      std::string text = fixed(scale * row.mean[k], count ? 1 : 2) + " ± " +
                         fixed(scale * row.stddev[k], count ? 1 : 2);
      line.push_back(best ? "**" + text + "**" : text);
    }
    const std::size_t fp = kTableMetrics.size() - 1;
    line.push_back(yolo != rows.end() && yolo->mean[fp] > 0
                       ? fixed(row.mean[fp] / yolo->mean[fp], 3)
                       : "n/a");
    cells.push_back(line);
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& line : cells) {
    for (std::size_t k = 0; k < line.size(); ++k) width[k] = std::max(width[k], line[k].size());
  }
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t k = 0; k < line.size(); ++k) {
      out << (k ? " | " : "") << (k + 1 < line.size() ? pad(line[k], width[k]) : line[k]);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<TTestEntry> run_ttests(const std::vector<RunRecord>& records,
                                   const std::vector<std::pair<Variant, Variant>>& pairs) {
  std::vector<TTestEntry> out;
  for (const auto& [a, b] : pairs) {
    for (const auto& metric : kTableMetrics) {
      std::vector<double> xa, xb;
      for (const auto& ra : records) {
        if (ra.variant != a) continue;
        for (const auto& rb : records) {
          if (rb.variant == b && rb.seed == ra.seed) {
            xa.push_back(metric_value(ra.final, metric));
            xb.push_back(metric_value(rb.final, metric));
          }
        }
      }
      if (xa.size() < 2) continue;
      out.push_back({a, b, metric, paired_t_test(xa, xb)});
    }
  }
  return out;
}

std::string format_ttests(const std::vector<TTestEntry>& tests) {
  std::ostringstream out;
  out << "# paired over seeds; two-sided; significant when p < 0.05\n";
  for (const auto& e : tests) {
    out << to_string(e.a) << " vs " << to_string(e.b) << " " << e.metric << ": n "
        << e.result.n << " mean_diff " << format_double(e.result.mean_difference) << " t "
        << format_double(e.result.t) << " p " << format_double(e.result.p)
        << (e.result.significant_at_05 ? " significant" : " not_significant")
        << (e.result.degenerate ? " degenerate" : "") << '\n';
  }
  if (tests.empty()) out << "no comparisons (need two or more shared seeds)\n";
  return out.str();
}

ExperimentResult run_experiment(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out / "records");
  fs::create_directories(cfg.out / "weights");
  to_document(cfg).save(cfg.out / "config.txt");

  DatasetSpec ds;
  ds.min_objects = cfg.min_objects;
  ds.max_objects = cfg.max_objects;
  ds.scene = cfg.scene;
  ds.seed = cfg.data_seed;
  ds.count = cfg.train_count;
  ds.stream = 0;
  const Dataset train_set = gen_dataset(ds);
  ds.count = cfg.val_count;
  ds.stream = 1;
  const Dataset val_set = gen_dataset(ds);
  ds.count = cfg.test_count;
  ds.stream = 2;
  const Dataset test_set = gen_dataset(ds);

  ExperimentResult res;
  for (Variant v : cfg.variants) {
    for (auto seed : cfg.seeds) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      TrainResult tr = train(v, cfg.model, train_set, val_set, tc, log);
      RunRecord rec = std::move(tr.record);
      const Detector det = model_detector(tr.model, tc.min_score, tc.nms_iou);
      const EvalResult clean = evaluate(det, test_set, AugmentationSpec{}, 0, tc.match);
      rec.final = clean.metrics;
      rec.confusion = confusion_matrix(clean.detections, clean.labels, tc.match);
      for (std::size_t k = 0; k < cfg.test_augmentations.size(); ++k) {
        const auto& name = cfg.test_augmentations[k];
        const EvalResult ev = evaluate(det, test_set, named_augmentation(name, cfg.augmentation),
                                       derive_seed(cfg.data_seed, 21, k), tc.match);
        if (log) {
          for (const auto& n : ev.notices) *log << name << ": " << n << '\n';
        }
        rec.augmented[name] = ev.metrics;
      }
      const std::string stem = to_string(v) + "_seed" + std::to_string(seed);
      save_run_record(cfg.out / "records" / (stem + ".txt"), rec);
      save_parameters(cfg.out / "weights" / (stem + ".wda"), tr.model.parameters());
      if (log) {
        *log << stem << ": test map50 " << rec.final.map50 << " precision " << rec.final.precision
             << " FP " << rec.final.false_positive_count << " (best epoch "
             << rec.best_epoch + 1 << ")" << std::endl;
      }
      res.records.push_back(std::move(rec));
    }
  }

  res.table = summarize(res.records, cfg.variants);
  std::ostringstream table;
  table << "# test split, metrics in percent (mean ± std over seeds), FP as raw counts\n"
        << "# accuracy is exact-scene accuracy: images with zero FP and zero FN\n"
        << "[clean]\n"
        << format_table(res.table);
  for (const auto& name : cfg.test_augmentations) {
    table << "\n[" << name << "]\n" << format_table(summarize_for(res.records, cfg.variants, name));
  }
  res.table_text = table.str();
  res.ttests = run_ttests(res.records, cfg.compare);
  res.ttest_text = format_ttests(res.ttests);

  std::ostringstream timing;
  timing << "# mean forward time per test image, milliseconds (wall clock)\n";
  for (Variant v : cfg.variants) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& r : res.records) {
      if (r.variant != v) continue;
      total += r.final.mean_inference_ms;
      ++n;
    }
    timing << to_string(v) << " " << fixed(n ? total / static_cast<double>(n) : 0.0, 3) << '\n';
  }
  res.timing_text = timing.str();

  const auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(cfg.out / name);
    if (!out) throw IoError("cannot write " + (cfg.out / name).string());
    out << text;
  };
  write("table.txt", res.table_text);
  write("ttests.txt", res.ttest_text);
  write("timing.txt", res.timing_text);
  return res;
}

}  // namespace wd::harness
