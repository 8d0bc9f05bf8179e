#include "pte/signal_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pte/errors.hpp"

namespace fs = std::filesystem;

namespace pte {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& tok, const std::string& where) {
  T v{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw DataError(where + ": expected an integer, got '" + tok + "'");
  return v;
}

std::uint32_t load_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<Matrix> window_signal(const Matrix& raw, int length, int stride) {
  if (length < 1) throw DomainError("window length must be positive");
  if (stride < 1) throw DomainError("window stride must be positive");
  if (raw.cols() < length) {
    std::ostringstream os;
    os << "recording has " << raw.cols() << " samples, shorter than the window length " << length;
    throw DataError(os.str());
  }
  const Eigen::Index count = (raw.cols() - length) / stride + 1;
  std::vector<Matrix> windows;
  windows.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index w = 0; w < count; ++w)
    windows.emplace_back(raw.middleCols(w * stride, length));
  return windows;
}

std::vector<SignalRecord> read_signal_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open signal manifest " + manifest.string());
  std::vector<SignalRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) fields.push_back(trim(tok));
    const std::string where = manifest.string() + ":" + std::to_string(lineno);
    if (fields.size() != 4) throw DataError(where + ": expected 'path, channels, samples, label'");
    SignalRecord r;
    r.path = fields[0];
    r.channels = parse_number<int>(fields[1], where);
    r.samples = parse_number<long long>(fields[2], where);
    r.label = fields[3];
    if (r.channels < 1 || r.samples < 1) throw DataError(where + ": non-positive shape");
    records.push_back(std::move(r));
  }
  return records;
}

Matrix read_recording(const fs::path& file, int channels, long long samples) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("missing recording " + file.string());
  const std::uintmax_t expected = static_cast<std::uintmax_t>(channels) * samples * 4;
  std::error_code ec;
  const auto actual = fs::file_size(file, ec);
  if (ec || actual != expected) {
    std::ostringstream os;
    os << "recording " << file.string() << " has " << (ec ? 0 : actual) << " bytes, expected "
       << expected << " for " << channels << " x " << samples << " float32";
    throw DataError(os.str());
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(expected));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw DataError("short read on recording " + file.string());
  Matrix raw(channels, samples);
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    raw.data()[i] = std::bit_cast<float>(load_le32(&bytes[static_cast<std::size_t>(i) * 4]));
  return raw;
}

void write_recording(const fs::path& file, const Matrix& raw) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write recording " + file.string());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(raw.data()[i]));
    const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16),
                                static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
}

LabeledDataset load_signal_dataset(const fs::path& path, const SignalLayout& layout) {
  if (layout.channels < 1 || layout.window_length < 1 || layout.stride < 1)
    throw ConfigError("signal layout needs positive channels, window length and stride");
  if (!fs::exists(path)) throw DataError("signal dataset path does not exist: " + path.string());
  const fs::path manifest = fs::is_directory(path) ? path / kSignalManifestName : path;
  if (!fs::exists(manifest)) throw DataError("no " + std::string(kSignalManifestName) + " in " + path.string());
  const auto records = read_signal_manifest(manifest);
  if (records.empty()) throw DataError("signal manifest " + manifest.string() + " lists no recordings");

  const fs::path base = manifest.parent_path();
  std::vector<Matrix> windows;
  std::vector<int> labels;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string where = manifest.string() + " record " + std::to_string(r) + " (" + rec.path + ")";
    if (rec.channels != layout.channels) {
      std::ostringstream os;
      os << where << ": " << rec.channels << " channels, layout expects " << layout.channels;
      throw DataError(os.str());
    }
    int label = -1;
    if (layout.label_map.empty()) {
      try {
        label = parse_number<int>(rec.label, where);
      } catch (const DataError&) {
        throw DataError(where + ": unknown label '" + rec.label + "'");
      }
    } else {
      auto it = layout.label_map.find(rec.label);
      if (it == layout.label_map.end()) throw DataError(where + ": unknown label '" + rec.label + "'");
      label = it->second;
    }
    if (label < 0 || label >= layout.class_count)
      throw DataError(where + ": label " + std::to_string(label) + " outside [0, K)");

    const Matrix raw = read_recording(base / rec.path, rec.channels, rec.samples);
    std::vector<Matrix> w;
    try {
      w = window_signal(raw, layout.window_length, layout.stride);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!w[i].allFinite()) {
        std::ostringstream os;
        os << where << ": non-finite value in window " << i << " (dataset sample index "
           << windows.size() << ")";
        throw DataError(os.str());
      }
      windows.push_back(std::move(w[i]));
      labels.push_back(label);
    }
  }

  Matrix x(static_cast<Eigen::Index>(windows.size()), layout.channels * layout.window_length);
  for (std::size_t i = 0; i < windows.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const RowVector>(windows[i].data(), x.cols());
  return LabeledDataset({layout.channels, layout.window_length}, std::move(x), std::move(labels),
                        layout.class_count, layout.split, layout.tag);
}

void export_signal_dataset(const LabeledDataset& data, const fs::path& dir) {
  if (data.shape().size() != 2) throw DataError("only C x L datasets can be exported as signals");
  fs::create_directories(dir);
  const int c = data.shape()[0], l = data.shape()[1];
  std::ofstream manifest(dir / kSignalManifestName);
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  manifest << "# path, channels, samples, label\n";
  const Matrix& x = data.inputs();
  const auto& y = data.labels();
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    std::ostringstream name;
    name << "rec_" << std::setw(6) << std::setfill('0') << i << ".f32";
    write_recording(dir / name.str(), Eigen::Map<const Matrix>(x.row(i).data(), c, l));
    manifest << name.str() << ", " << c << ", " << l << ", " << y[static_cast<std::size_t>(i)] << "\n";
  }
}

}  // namespace pte
