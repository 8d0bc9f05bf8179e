#pragma once

// Config-driven experiments: build data, train or load the original model,
// run one unlearning method per repeat, evaluate, and persist everything a
// later comparison or plot needs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pte/editing.hpp"
#include "pte/evaluation.hpp"
#include "pte/generators.hpp"
#include "pte/probing.hpp"
#include "pte/training.hpp"

namespace pte {

inline constexpr const char* kToolVersion = "0.1.0";

struct DatasetSpec {
  std::string kind = "blobs";  // blobs | signals | signal_files
  int class_count = 6;

  // generators
  int samples_per_class = 200;
  int dim = 2;
  double separation = 6.0;
  int channels = 2;
  int length = 1024;
  SignalParams signal;

  // signal_files
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  int window_length = 1024;
  int stride = 1024;
  std::map<std::string, int> label_map;
};

/// Methods run_experiment knows how to dispatch.
inline const std::vector<std::string> kMethods = {"pte", "retrain", "finetune", "random_label",
                                                  "gradient_ascent"};

/// Whether `method` is allowed to read retain data.
bool method_uses_retain_data(const std::string& method);

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSpec dataset;
  std::string architecture = "mlp(2,64,64)";
  std::vector<int> forget_classes{0};
  std::string method = "pte";
  TrainConfig train;        // original model
  ProbeConfig probe;
  PTEConfig edit;
  TrainConfig baseline;     // retrain / finetune / random_label / gradient_ascent
  int repeats = 1;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/experiment";
  std::optional<std::filesystem::path> original_checkpoint;
  bool track_epochs = true;  // evaluate Acc_ft / Acc_rt after each editing epoch
  bool projection_plot = false;

  void validate() const;
  /// Sorted-key JSON with every field present.
  std::string canonical_json() const;
  /// FNV-1a of canonical_json(), 16 hex digits.
  std::string hash() const;
};

/// Published schema, also compiled into the library.
const std::string& experiment_schema();

/// Checks `json_text` against the schema and fills an ExperimentConfig.
/// Relative dataset paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

/// A bench file is an experiment config plus a `variants` array of
/// {label, patch} objects merged into the base. Without variants the base is
/// the only entry.
struct BenchEntry {
  std::string label;
  ExperimentConfig config;
};
std::vector<BenchEntry> load_bench_config(const std::filesystem::path& file);
std::vector<BenchEntry> parse_bench_config(const std::string& json_text,
                                           const std::filesystem::path& base_dir = {});

struct StageError {
  int repeat = -1;
  std::string stage;
  std::string message;
};

struct RepeatArtifacts {
  std::uint64_t seed = 0;
  std::filesystem::path report;
  std::filesystem::path trace;
  std::filesystem::path checkpoint;
  std::filesystem::path original_checkpoint;
  std::filesystem::path edit_set;
  std::optional<bool> retain_free;  // PTE only: audit verdict
};

struct RunManifest {
  std::string name;
  std::string method;
  std::string config_hash;
  std::string dataset_hash;
  std::string tool_version = kToolVersion;
  std::string started;
  std::string finished;
  std::filesystem::path config_file;
  std::filesystem::path aggregate;
  std::vector<RepeatArtifacts> repeats;
  std::vector<StageError> errors;

  bool ok() const { return errors.empty(); }
  void write(const std::filesystem::path& file) const;
  static RunManifest read(const std::filesystem::path& file);
};

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kConfigName = "config.json";
inline constexpr const char* kAggregateName = "aggregate.csv";

/// Builds the train/test pair of one repeat. Tags are "train" and "test".
TrainTestPair build_dataset(const DatasetSpec& spec, std::uint64_t seed);

/// Runs every repeat under cfg.output_dir. Stage failures are recorded in the
/// returned manifest (and on disk) instead of thrown. Paths in the returned
/// manifest are resolved against the output directory.
RunManifest run_experiment(const ExperimentConfig& cfg);

/// Reports listed in a manifest, in repeat order. Missing files are skipped.
std::vector<EvaluationReport> load_reports(const RunManifest& manifest);

struct MethodResults {
  std::string label;
  std::string dataset_hash;
  std::vector<EvaluationReport> reports;
};

/// `method,<metric>_mean,<metric>_std,...` over kTableMetrics, std blank below
/// two repeats. Throws ConfigError when the dataset hashes differ.
std::string compare_methods(const std::vector<MethodResults>& methods);

/// Runs every bench entry under `out_dir/<label>` and writes comparison.csv
/// plus bench.json listing the per-entry manifests.
struct BenchResult {
  std::vector<std::pair<std::string, RunManifest>> runs;
  std::filesystem::path table;
  bool ok() const;
};
BenchResult run_bench(const std::vector<BenchEntry>& entries, const std::filesystem::path& out_dir);

/// Fingerprint of the data-defining part of a config.
std::string dataset_hash(const ExperimentConfig& cfg);

}  // namespace pte
