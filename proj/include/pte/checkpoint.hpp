#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pte/classifier.hpp"

namespace pte {

struct NamedArray {
  std::string name;
  Matrix values;
};

/// Binary container: magic, a JSON manifest record, then named float64
/// arrays (little-endian). Reading back what was written is bit-exact.
struct ArrayArchive {
  std::string manifest_json;
  std::vector<NamedArray> arrays;

  const Matrix& at(const std::string& name) const;
};

void write_archive(const std::filesystem::path& file, const ArrayArchive& archive);
ArrayArchive read_archive(const std::filesystem::path& file);

/// Manifest record: architecture, K, seed, train-config hash, frozen flag.
void save_checkpoint(const Classifier& model, const std::filesystem::path& file);
Classifier load_checkpoint(const std::filesystem::path& file);

}  // namespace pte
