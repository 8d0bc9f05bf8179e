#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pte/harness.hpp"

namespace pte {

struct PlotOutput {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

using LabeledRun = std::pair<std::string, RunManifest>;

/// boxplot.png over kTableMetrics (one box per run), one accuracy-vs-epoch
/// chart per recorded trace, and, when the run's config asks for it, a 2D PCA
/// scatter of penultimate-layer features colored by predicted class.
PlotOutput emit_plots(const std::vector<LabeledRun>& runs, const std::filesystem::path& out_dir);

/// Loads `bench.json` or `manifest.json` from `run_dir`.
std::vector<LabeledRun> load_runs(const std::filesystem::path& run_dir);

/// Linearly interpolated quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Rows projected on the two leading principal components of `x`.
Matrix pca_2d(const Matrix& x);

}  // namespace pte
