#include "pte/architecture.hpp"

#include <cctype>
#include <charconv>
#include <numeric>
#include <sstream>

#include "pte/errors.hpp"

namespace pte {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Architecture Architecture::parse(std::string_view text) {
  text = trim(text);
  const auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')')
    throw ConfigError("architecture must look like name(a,b,...): '" + std::string(text) + "'");
  const std::string_view name = trim(text.substr(0, open));
  std::string_view args = text.substr(open + 1, text.size() - open - 2);

  Architecture arch;
  if (name == "mlp") arch.kind = Kind::kMlp;
  else if (name == "cnn1d") arch.kind = Kind::kCnn1d;
  else if (name == "cnn2d") arch.kind = Kind::kCnn2d;
  else throw ConfigError("unknown architecture '" + std::string(name) + "'");

  while (!args.empty()) {
    const auto comma = args.find(',');
    const std::string_view tok = trim(args.substr(0, comma));
    int v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || v <= 0)
      throw ConfigError("bad architecture dimension '" + std::string(tok) + "'");
    arch.dims.push_back(v);
    if (comma == std::string_view::npos) break;
    args.remove_prefix(comma + 1);
  }

  switch (arch.kind) {
    case Kind::kMlp:
      if (arch.dims.empty()) throw ConfigError("mlp needs at least an input width");
      break;
    case Kind::kCnn1d:
      if (arch.dims.size() != 2) throw ConfigError("cnn1d expects (channels, length)");
      if (arch.dims[1] < 64) throw ConfigError("cnn1d needs length >= 64");
      break;
    case Kind::kCnn2d:
      if (arch.dims.size() != 3) throw ConfigError("cnn2d expects (height, width, channels)");
      if (arch.dims[0] < 12 || arch.dims[1] < 12) throw ConfigError("cnn2d needs images >= 12x12");
      break;
  }
  return arch;
}

std::string Architecture::to_string() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::kMlp: os << "mlp("; break;
    case Kind::kCnn1d: os << "cnn1d("; break;
    case Kind::kCnn2d: os << "cnn2d("; break;
  }
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ')';
  return os.str();
}

std::vector<int> Architecture::input_shape() const {
  switch (kind) {
    case Kind::kMlp: return {dims.at(0)};
    case Kind::kCnn1d: return {dims.at(0), dims.at(1)};
    case Kind::kCnn2d: return {dims.at(0), dims.at(1), dims.at(2)};
  }
  return {};
}

int Architecture::input_size() const {
  const auto s = input_shape();
  return std::accumulate(s.begin(), s.end(), 1, std::multiplies<>());
}

}  // namespace pte
