#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pte/classifier.hpp"
#include "pte/dataset.hpp"

namespace pte {

/// 100 * fraction of argmax predictions equal to the label.
double accuracy(const Classifier& model, const LabeledDataset& data);

struct PartitionAccuracy {
  double acc_f = 0, acc_r = 0, acc_ft = 0, acc_rt = 0;
};

PartitionAccuracy evaluate_partition(const Classifier& model, const ForgetPartition& partition);

/// Harmonic mean 2ab / (a + b) of two percentages; 0 when both are 0.
double h_mean(double acc_rt, double drop_ft);

/// acc_ft(original) - acc_ft(unlearned), floored at 0.
double forget_test_drop(double original_acc_ft, double unlearned_acc_ft);

struct MiaResult {
  double score = 50.0;             // % of targets classified as members
  double threshold = 0.0;          // member iff loss <= threshold
  double balanced_accuracy = 0.5;  // on the calibration sets
  double false_positive_rate = 0;  // % of non-members classified as members
  bool degenerate = false;
};

/// Loss-threshold attack. The threshold is the observed calibration loss that
/// maximizes balanced accuracy between members and non-members (smallest such
/// value on ties). Only comparisons are used, so the result is invariant to
/// strictly increasing transforms of the losses.
MiaResult mia_from_losses(std::span<const double> member, std::span<const double> nonmember,
                          std::span<const double> target);

inline constexpr const char* kMiaVariant = "loss_threshold";

/// Members: D_r. Non-members: D_rt. Targets: D_f.
MiaResult mia_score(const Classifier& model, const ForgetPartition& partition);

/// Mean KL(softmax(original) || softmax(unlearned)) in nats over `data`.
double retain_kl_consistency(const Classifier& original, const Classifier& unlearned,
                             const LabeledDataset& data);

/// |mean over D_f of max retained-class renormalized probability - 1 / (K - |C_f|)|.
double forget_confidence_uniformity(const Classifier& model, const LabeledDataset& forget_set,
                                    std::span<const int> forget_classes);

struct EvaluationReport {
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
  double acc_f = 0, acc_r = 0, acc_ft = 0, acc_rt = 0;
  double drop_ft = 0;
  double h_mean = 0;
  double mia = 0;
  bool mia_degenerate = false;
  double retain_kl = 0;
  double forget_conf_gap = 0;
  bool uses_retain_data = false;

  /// Flat `key=value` lines in a fixed order.
  std::string serialize() const;
  static EvaluationReport parse(const std::string& text);
  void write(const std::filesystem::path& file) const;
  static EvaluationReport read(const std::filesystem::path& file);
};

/// Full report for one unlearned model against its original.
EvaluationReport evaluate_unlearning(const Classifier& original, const Classifier& unlearned,
                                     const ForgetPartition& partition, const std::string& method,
                                     std::uint64_t seed, const std::string& config_hash);

/// Column order of comparison tables.
inline const std::vector<std::string> kTableMetrics = {"acc_f", "acc_r", "acc_ft", "acc_rt",
                                                       "h_mean", "mia"};

/// Every numeric field of a report, in serialization order.
inline const std::vector<std::string> kReportMetrics = {"acc_f",   "acc_r", "acc_ft",
                                                        "acc_rt",  "drop_ft", "h_mean",
                                                        "mia",     "retain_kl", "forget_conf_gap"};

double metric_value(const EvaluationReport& r, const std::string& metric);

struct MetricSummary {
  double mean = 0;
  double std = 0;  // sample standard deviation
  std::size_t n = 0;
};

/// Per-metric mean and sample std over repeats of one method.
std::map<std::string, MetricSummary> summarize(const std::vector<EvaluationReport>& reports);

}  // namespace pte
