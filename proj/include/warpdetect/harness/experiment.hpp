#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "warpdetect/harness/augment.hpp"
#include "warpdetect/harness/keyvalue.hpp"
#include "warpdetect/harness/model.hpp"
#include "warpdetect/harness/records.hpp"
#include "warpdetect/harness/scene.hpp"
#include "warpdetect/harness/stats.hpp"
#include "warpdetect/harness/train.hpp"

namespace wd::harness {

struct RunConfig {
  SceneSpec scene;  // num_objects and seed are drawn per scene
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  std::size_t train_count = 600;
  std::size_t val_count = 150;
  std::size_t test_count = 150;
  std::uint64_t data_seed = 2024;
  std::vector<Variant> variants = all_variants();
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  ModelConfig model;
  TrainConfig train;
  AugmentationSpec augmentation;  // ranges for the test-time sets
  std::vector<std::string> test_augmentations = {"rotation", "shear", "crop"};
  /// Variant pairs for paired t-tests.
  std::vector<std::pair<Variant, Variant>> compare = {{Variant::cbam_stn_tps, Variant::stn},
                                                      {Variant::cbam_stn_tps, Variant::yolo}};
  std::filesystem::path out = "out";

  /// Throws ConfigError on any invalid field.
  void validate() const;
};

KvDocument to_document(const RunConfig& cfg);
/// Keys missing from the document keep their defaults; unknown keys are rejected.
RunConfig run_config_from(const KvDocument& doc);

/// Metric columns of the comparison table.
inline const std::vector<std::string> kTableMetrics = {"accuracy", "precision", "recall",
                                                       "map50", "f1", "false_positive_count"};
double metric_value(const MetricsReport& m, const std::string& name);

struct ComparisonRow {
  Variant variant;
  std::vector<double> mean, stddev;  // per kTableMetrics entry
};

struct TTestEntry {
  Variant a, b;
  std::string metric;
  TTestResult result;
};

struct ExperimentResult {
  std::vector<RunRecord> records;  // variant-major, seed-minor
  std::vector<ComparisonRow> table;
  std::vector<TTestEntry> ttests;
  std::string table_text;
  std::string ttest_text;
  std::string timing_text;
};

std::vector<ComparisonRow> summarize(const std::vector<RunRecord>& records,
                                     const std::vector<Variant>& variants);
/// Metrics in percent as mean ± std, best per column wrapped in ** **; false
/// positives as raw counts with their ratio to the yolo row when present.
std::string format_table(const std::vector<ComparisonRow>& rows);
std::vector<TTestEntry> run_ttests(const std::vector<RunRecord>& records,
                                   const std::vector<std::pair<Variant, Variant>>& pairs);
std::string format_ttests(const std::vector<TTestEntry>& tests);

/// Trains every variant x seed, evaluates on the clean and augmented test
/// sets and writes records, table, t-tests and timing under cfg.out.
ExperimentResult run_experiment(const RunConfig& cfg, std::ostream* log = nullptr);

}  // namespace wd::harness
