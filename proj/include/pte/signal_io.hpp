#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pte/dataset.hpp"

namespace pte {

/// Slices a C x N recording (row = channel) into C x length windows starting
/// at 0, stride, 2*stride, ... without padding.
std::vector<Matrix> window_signal(const Matrix& raw, int length, int stride);

/// How to turn a directory of raw recordings into a windowed dataset.
struct SignalLayout {
  int channels = 2;
  int window_length = 1024;
  int stride = 1024;
  int class_count = 10;
  /// Manifest label text -> class index. Empty means labels are integers.
  std::map<std::string, int> label_map;
  Split split = Split::kTrain;
  std::string tag = "train";
};

/// One manifest line: `path, channels, samples, label`.
struct SignalRecord {
  std::string path;
  int channels = 0;
  long long samples = 0;
  std::string label;
};

inline constexpr const char* kSignalManifestName = "manifest.csv";

std::vector<SignalRecord> read_signal_manifest(const std::filesystem::path& manifest);

/// Reads one recording: little-endian float32, channel-major.
Matrix read_recording(const std::filesystem::path& file, int channels, long long samples);
void write_recording(const std::filesystem::path& file, const Matrix& raw);

/// `path` is either a manifest file or a directory holding manifest.csv.
/// Recording paths are resolved relative to the manifest's directory.
LabeledDataset load_signal_dataset(const std::filesystem::path& path, const SignalLayout& layout);

/// Writes each C x L sample as its own recording plus manifest.csv in `dir`.
void export_signal_dataset(const LabeledDataset& data, const std::filesystem::path& dir);

}  // namespace pte
