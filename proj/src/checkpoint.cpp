#include "pte/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pte/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pte {
namespace {

constexpr char kMagic[8] = {'P', 'T', 'E', 'A', 'R', 'C', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in, const fs::path& file) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated archive " + file.string());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string get_string(std::istream& in, const fs::path& file) {
  const auto n = get_u64(in, file);
  if (n > (1ULL << 30)) throw DataError("corrupt string length in " + file.string());
  std::string s(static_cast<std::size_t>(n), '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("truncated archive " + file.string());
  return s;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

const Matrix& ArrayArchive::at(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a.values;
  throw DataError("archive has no array named '" + name + "'");
}

void write_archive(const fs::path& file, const ArrayArchive& archive) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write archive " + file.string());
  out.write(kMagic, sizeof kMagic);
  put_string(out, archive.manifest_json);
  put_u64(out, archive.arrays.size());
  for (const auto& a : archive.arrays) {
    put_string(out, a.name);
    put_u64(out, static_cast<std::uint64_t>(a.values.rows()));
    put_u64(out, static_cast<std::uint64_t>(a.values.cols()));
    for (Eigen::Index i = 0; i < a.values.size(); ++i)
      put_u64(out, std::bit_cast<std::uint64_t>(a.values.data()[i]));
  }
  if (!out) throw DataError("write failed for archive " + file.string());
}

ArrayArchive read_archive(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open archive " + file.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError(file.string() + " is not an array archive");
  ArrayArchive archive;
  archive.manifest_json = get_string(in, file);
  const auto count = get_u64(in, file);
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedArray a;
    a.name = get_string(in, file);
    const auto rows = get_u64(in, file), cols = get_u64(in, file);
    if (rows * cols > (1ULL << 32)) throw DataError("corrupt array shape in " + file.string());
    a.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < a.values.size(); ++i)
      a.values.data()[i] = std::bit_cast<double>(get_u64(in, file));
    archive.arrays.push_back(std::move(a));
  }
  return archive;
}

void save_checkpoint(const Classifier& model, const fs::path& file) {
  ArrayArchive archive;
  const json manifest = {
      {"kind", "classifier"},
      {"architecture", model.architecture().to_string()},
      {"class_count", model.class_count()},
      {"seed", model.seed()},
      {"train_config_hash", model.train_config_hash()},
      {"frozen", model.frozen()},
  };
  archive.manifest_json = manifest.dump();
  const auto names = model.network().parameter_names();
  const auto params = model.network().parameters();
  for (std::size_t i = 0; i < params.size(); ++i) archive.arrays.push_back({names[i], *params[i]});
  write_archive(file, archive);
}

Classifier load_checkpoint(const fs::path& file) {
  const ArrayArchive archive = read_archive(file);
  json manifest;
  try {
    manifest = json::parse(archive.manifest_json);
  } catch (const json::exception& e) {
    throw DataError("bad checkpoint manifest in " + file.string() + ": " + e.what());
  }
  if (manifest.value("kind", "") != "classifier")
    throw DataError(file.string() + " is not a classifier checkpoint");
  const Architecture arch = Architecture::parse(manifest.at("architecture").get<std::string>());
  Classifier model = build_reference_model(arch, manifest.at("class_count").get<int>(),
                                           manifest.at("seed").get<std::uint64_t>());
  auto params = model.mutable_network().parameters();
  const auto names = model.network().parameter_names();
  if (archive.arrays.size() != params.size())
    throw DataError("checkpoint " + file.string() + " has the wrong number of arrays");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& v = archive.at(names[i]);
    if (v.rows() != params[i]->rows() || v.cols() != params[i]->cols())
      throw DataError("checkpoint array '" + names[i] + "' has the wrong shape");
    *params[i] = v;
  }
  model.set_train_config_hash(manifest.value("train_config_hash", ""));
  model.set_frozen(manifest.value("frozen", false));
  return model;
}

}  // namespace pte
