#pragma once

// Boundary probing: projected gradient ascent on the cross-entropy of a frozen
// teacher inside an L-infinity ball, followed by relabeling each probed input
// with the teacher's own prediction.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pte/classifier.hpp"
#include "pte/dataset.hpp"

namespace pte {

enum class NoiseMode { kPerSample, kPerClass };
enum class FlipFallback { kDrop, kRunnerUp };

struct ProbeConfig {
  double epsilon = 4.0;    // L-infinity radius
  int steps = 40;          // ascent iterations
  double step_size = 0.5;  // ascent step
  NoiseMode noise_mode = NoiseMode::kPerSample;
  FlipFallback fallback = FlipFallback::kDrop;
  std::uint64_t seed = 0;
  int batch_size = 64;

  void validate() const;
};

NoiseMode parse_noise_mode(const std::string& s);
FlipFallback parse_fallback(const std::string& s);
std::string to_string(NoiseMode m);
std::string to_string(FlipFallback f);

/// Called after every ascent step with the current perturbation.
using ProbeObserver = std::function<void(int step, const Matrix& delta)>;

/// Per-sample perturbations for a batch. Row i starts from a standard normal
/// draw seeded by (cfg.seed, sample_ids[i]) clipped to the ball, then takes
/// cfg.steps steps delta <- clip(delta + step_size * grad_x CE). `sample_ids`
/// defaults to 0..B-1.
Matrix pga_probe(const Classifier& teacher, const Matrix& x, std::span<const int> labels,
                 const ProbeConfig& cfg, std::span<const Eigen::Index> sample_ids = {},
                 const ProbeObserver& observer = {});

/// One perturbation shared by every row of `x`, ascending the summed loss.
/// The initial draw is seeded by (cfg.seed, stream_id).
RowVector pga_probe_shared(const Classifier& teacher, const Matrix& x, std::span<const int> labels,
                           const ProbeConfig& cfg, Eigen::Index stream_id,
                           const ProbeObserver& observer = {});

struct EditInstruction {
  RowVector x_probe;
  int y_edit = 0;
  int y_orig = 0;
};

struct EditSet {
  Matrix x_probe;                // one instruction per row
  std::vector<int> y_edit;
  std::vector<int> y_orig;
  std::vector<Eigen::Index> source_index;  // row of D_f each instruction came from

  struct ClassStats {
    Eigen::Index sources = 0;
    Eigen::Index flipped = 0;
    Eigen::Index kept = 0;
  };
  std::map<int, ClassStats> per_class;
  Eigen::Index source_count = 0;
  Eigen::Index flip_count = 0;
  double flip_rate = 0.0;
  int noise_matrices = 0;
  std::vector<std::string> warnings;

  Eigen::Index size() const { return x_probe.rows(); }
  EditInstruction instruction(Eigen::Index i) const;
};

/// Builds D_E from D_f in one pass with the teacher frozen. Throws
/// ProbingFailed when nothing flips in drop mode.
EditSet synthesize_edit_instructions(const Classifier& teacher, const LabeledDataset& forget_set,
                                     const ProbeConfig& cfg);

/// `<stem>.bin` array archive plus `<stem>.txt` summary.
void export_edit_set(const EditSet& edits, const std::filesystem::path& stem);
EditSet import_edit_set(const std::filesystem::path& archive);

}  // namespace pte
