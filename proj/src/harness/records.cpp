#include "warpdetect/harness/records.hpp"

#include "warpdetect/errors.hpp"

namespace wd::harness {

void write_metrics(KvDocument& doc, const std::string& prefix, const MetricsReport& m) {
  doc.set(prefix + "accuracy", m.accuracy);
  doc.set(prefix + "precision", m.precision);
  doc.set(prefix + "recall", m.recall);
  doc.set(prefix + "map50", m.map50);
  doc.set(prefix + "f1", m.f1);
  doc.set(prefix + "mean_inference_ms", m.mean_inference_ms);
  doc.set(prefix + "per_class_ap", m.per_class_ap);
  doc.set(prefix + "false_positive_count", m.false_positive_count);
  doc.set(prefix + "true_positive_count", m.true_positive_count);
  doc.set(prefix + "false_negative_count", m.false_negative_count);
  doc.set(prefix + "images", m.images);
  doc.set(prefix + "skipped_images", m.skipped_images);
}

MetricsReport read_metrics(const KvDocument& doc, const std::string& prefix) {
  MetricsReport m;
  m.accuracy = doc.get_double(prefix + "accuracy");
  m.precision = doc.get_double(prefix + "precision");
  m.recall = doc.get_double(prefix + "recall");
  m.map50 = doc.get_double(prefix + "map50");
  m.f1 = doc.get_double(prefix + "f1");
  m.mean_inference_ms = doc.get_double(prefix + "mean_inference_ms");
  m.per_class_ap = doc.get_doubles(prefix + "per_class_ap");
  m.false_positive_count = doc.get_size(prefix + "false_positive_count");
  m.true_positive_count = doc.get_size(prefix + "true_positive_count");
  m.false_negative_count = doc.get_size(prefix + "false_negative_count");
  m.images = doc.get_size(prefix + "images");
  m.skipped_images = doc.get_size(prefix + "skipped_images");
  return m;
}

namespace {

void write_confusion(KvDocument& doc, const std::string& prefix,
                     const std::vector<std::vector<std::size_t>>& m) {
  doc.set(prefix + "classes", m.empty() ? std::size_t{0} : m.size() - 1);
  for (std::size_t r = 0; r < m.size(); ++r) {
    std::vector<std::string> row;
    for (auto v : m[r]) row.push_back(std::to_string(v));
    doc.set_list(prefix + "row." + std::to_string(r), row);
  }
}

std::vector<std::vector<std::size_t>> read_confusion(const KvDocument& doc,
                                                     const std::string& prefix) {
  const std::size_t k = doc.get_size(prefix + "classes");
  std::vector<std::vector<std::size_t>> m;
  for (std::size_t r = 0; r <= k; ++r) {
    const auto values = doc.get_list(prefix + "row." + std::to_string(r));
    if (values.size() != k + 1) throw ConfigError("confusion row " + std::to_string(r) + " has wrong length");
    std::vector<std::size_t> row;
    for (const auto& v : values) {
      KvDocument tmp;
      tmp.set("v", v);
      row.push_back(tmp.get_size("v"));
    }
    m.push_back(row);
  }
  return m;
}

}  // namespace

KvDocument to_document(const RunRecord& r) {
  KvDocument doc;
  doc.set("model_variant", to_string(r.variant));
  doc.set("seed", std::to_string(r.seed));
  doc.set("epochs", r.per_epoch_metrics.size());
  doc.set("best_epoch", r.best_epoch);
  doc.set("stopped_early", r.stopped_early);
  doc.set("train_loss", r.train_loss);
  for (std::size_t e = 0; e < r.per_epoch_metrics.size(); ++e) {
    write_metrics(doc, "epoch." + std::to_string(e) + ".", r.per_epoch_metrics[e]);
  }
  write_metrics(doc, "final.", r.final);
  std::vector<std::string> names;
  for (const auto& [name, m] : r.augmented) names.push_back(name);
  doc.set_list("augmented", names);
  for (const auto& [name, m] : r.augmented) write_metrics(doc, "augmented." + name + ".", m);
  if (!r.confusion.empty()) write_confusion(doc, "confusion.", r.confusion);
  return doc;
}

RunRecord run_record_from(const KvDocument& doc) {
  RunRecord r;
  r.variant = parse_variant(doc.get("model_variant"));
  r.seed = std::stoull(doc.get("seed"));
  const std::size_t epochs = doc.get_size("epochs");
  if (epochs < 1) throw ConfigError("run record must have at least one epoch");
  r.best_epoch = doc.get_size("best_epoch");
  r.stopped_early = doc.get_bool("stopped_early");
  r.train_loss = doc.get_doubles("train_loss");
  for (std::size_t e = 0; e < epochs; ++e) {
    r.per_epoch_metrics.push_back(read_metrics(doc, "epoch." + std::to_string(e) + "."));
  }
  r.final = read_metrics(doc, "final.");
  for (const auto& name : doc.get_list("augmented")) {
    r.augmented[name] = read_metrics(doc, "augmented." + name + ".");
  }
  if (doc.has("confusion.classes")) r.confusion = read_confusion(doc, "confusion.");
  return r;
}

void save_run_record(const std::filesystem::path& path, const RunRecord& r) {
  to_document(r).save(path);
}

RunRecord load_run_record(const std::filesystem::path& path) {
  return run_record_from(KvDocument::load(path));
}

KvDocument confusion_document(const std::vector<std::vector<std::size_t>>& m) {
  KvDocument doc;
  write_confusion(doc, "", m);
  return doc;
}

std::vector<std::vector<std::size_t>> confusion_from(const KvDocument& doc) {
  return read_confusion(doc, "");
}

}  // namespace wd::harness
