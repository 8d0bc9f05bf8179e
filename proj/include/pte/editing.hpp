#pragma once

// Push/pull knowledge editing. Push fits the edit instructions with
// cross-entropy; pull distills the frozen teacher's forget-masked, softened
// distribution into the student on forget-set inputs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pte/classifier.hpp"
#include "pte/dataset.hpp"
#include "pte/probing.hpp"

namespace pte {

enum class Schedule { kAlternate, kPushOnly, kPullOnly, kPushThenPull, kPullThenPush };

/// kTargetToStudent is KL(p_target || q_student), the trained objective.
/// kStudentToTarget is the reversed argument order, kept as an experiment.
enum class KlDirection { kTargetToStudent, kStudentToTarget };

Schedule parse_schedule(const std::string& s);
std::string to_string(Schedule s);
KlDirection parse_kl_direction(const std::string& s);
std::string to_string(KlDirection d);

struct PTEConfig {
  int epochs = 20;
  double eta_push = 0.1;
  double eta_pull = 0.01;
  double temperature = 4.0;
  Schedule schedule = Schedule::kAlternate;
  int batch_size = 32;
  std::uint64_t seed = 0;
  KlDirection kl_direction = KlDirection::kTargetToStudent;

  void validate() const;
};

enum class Branch { kPush, kPull };

struct EditTrace {
  struct Record {
    int epoch = 0;
    Branch branch = Branch::kPush;
    double loss = 0.0;
    std::optional<double> forget_acc;
    std::optional<double> retain_acc;
  };
  std::vector<Record> records;
  std::uint64_t final_checksum = 0;

  /// `epoch,branch,loss,forget_acc,retain_acc`, blank cells where absent.
  void write_csv(const std::filesystem::path& file) const;
  static EditTrace read_csv(const std::filesystem::path& file);
};

/// B x K masked targets Normalize(Mask(Softmax(teacher(x) / T))).
Matrix build_pull_target(const Classifier& teacher, const Matrix& x, std::span<const int> masked,
                         double temperature);

struct PullLoss {
  double loss = 0.0;       // T^2 * mean KL
  Matrix grad_logits;      // d loss / d student logits
};

/// Temperature-scaled KL between target rows and softmax(student / T), with
/// the student probability floored at kProbFloor inside the log.
PullLoss pull_loss(const Matrix& student_logits, const Matrix& target, double temperature,
                   KlDirection direction = KlDirection::kTargetToStudent);

/// One SGD step on mean CE of (x_probe, y_edit). Returns the pre-step loss.
double push_step(Classifier& model, const Matrix& x_probe, std::span<const int> y_edit,
                 double eta_push);

/// One SGD step with eta_pull on the pull loss. Returns the pre-step loss.
double pull_step(Classifier& model, const Matrix& x, const Classifier& teacher,
                 std::span<const int> masked, const PTEConfig& cfg);

/// Invoked after each editing epoch with the model at that point.
using EpochObserver = std::function<void(int epoch, const Classifier& model)>;

struct UnlearnOutcome {
  Classifier model;
  EditTrace trace;
  EditSet edits;
};

/// Retain-free unlearning from the original model and the forget set alone.
/// The forget classes are the distinct labels of `forget_set`.
UnlearnOutcome pte_unlearn(const Classifier& original, const LabeledDataset& forget_set,
                           const ProbeConfig& probe_cfg, const PTEConfig& cfg,
                           const EpochObserver& on_epoch = {});

}  // namespace pte
