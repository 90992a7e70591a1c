#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "warpdetect/harness/keyvalue.hpp"
#include "warpdetect/harness/metrics.hpp"
#include "warpdetect/harness/model.hpp"

namespace wd::harness {

struct RunRecord {
  Variant variant = Variant::yolo;
  std::uint64_t seed = 0;
  std::vector<double> train_loss;  // mean training loss per epoch
  std::vector<MetricsReport> per_epoch_metrics;
  std::size_t best_epoch = 0;
  MetricsReport final;
  /// Test-time augmentation name -> metrics of the final model.
  std::map<std::string, MetricsReport> augmented;
  std::vector<std::vector<std::size_t>> confusion;
  bool stopped_early = false;
};

void write_metrics(KvDocument& doc, const std::string& prefix, const MetricsReport& m);
MetricsReport read_metrics(const KvDocument& doc, const std::string& prefix);

KvDocument to_document(const RunRecord& r);
/// Throws ConfigError when the document has no epochs or is malformed.
RunRecord run_record_from(const KvDocument& doc);

void save_run_record(const std::filesystem::path& path, const RunRecord& r);
RunRecord load_run_record(const std::filesystem::path& path);

KvDocument confusion_document(const std::vector<std::vector<std::size_t>>& m);
std::vector<std::vector<std::size_t>> confusion_from(const KvDocument& doc);

}  // namespace wd::harness
