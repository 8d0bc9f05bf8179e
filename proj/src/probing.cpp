#include "pte/probing.hpp"

#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pte/checkpoint.hpp"
#include "pte/errors.hpp"
#include "pte/rng.hpp"

namespace pte {
namespace {

RowVector initial_noise(std::uint64_t seed, Eigen::Index stream, Eigen::Index width, double eps) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(stream)));
  std::normal_distribution<double> normal(0.0, 1.0);
  RowVector d(width);
  for (Eigen::Index j = 0; j < width; ++j) d(j) = normal(rng);
  return project_linf(d, eps);
}

void require_frozen(const Classifier& teacher) {
  if (!teacher.frozen()) throw ContractViolation("probing requires a frozen teacher");
}

Matrix ascent_gradient(const Classifier& teacher, const Matrix& x, std::span<const int> labels,
                       Vector& losses, int step) {
  Matrix g;
  try {
    g = input_gradient(teacher, x, labels, &losses);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + " at ascent step " + std::to_string(step));
  }
  return g;
}

void check_losses(const Vector& losses, int step) {
  if (!losses.allFinite()) {
    Eigen::Index bad = 0;
    while (bad < losses.size() && std::isfinite(losses(bad))) ++bad;
    std::ostringstream os;
    os << "non-finite probing loss at ascent step " << step << " (sample " << bad << ")";
    throw NumericalError(os.str());
  }
}

// Runner-up: highest-probability class outside the forget set, lowest index on ties.
int runner_up(const RowVector& logits, const std::set<int>& forget) {
  int best = -1;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (forget.count(static_cast<int>(k))) continue;
    if (best < 0 || logits(k) > logits(best)) best = static_cast<int>(k);
  }
  return best;
}

}  // namespace

void ProbeConfig::validate() const {
  if (!(epsilon > 0.0)) throw DomainError("probe epsilon must be positive");
  if (steps < 1) throw DomainError("probe steps must be >= 1");
  if (!(step_size > 0.0)) throw DomainError("probe step size must be positive");
  if (batch_size < 1) throw DomainError("probe batch size must be positive");
}

NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "per_sample") return NoiseMode::kPerSample;
  if (s == "per_class") return NoiseMode::kPerClass;
  throw ConfigError("unknown noise mode '" + s + "'");
}

FlipFallback parse_fallback(const std::string& s) {
  if (s == "drop") return FlipFallback::kDrop;
  if (s == "runner_up") return FlipFallback::kRunnerUp;
  throw ConfigError("unknown flip fallback '" + s + "'");
}

std::string to_string(NoiseMode m) { return m == NoiseMode::kPerSample ? "per_sample" : "per_class"; }
std::string to_string(FlipFallback f) { return f == FlipFallback::kDrop ? "drop" : "runner_up"; }

Matrix pga_probe(const Classifier& teacher, const Matrix& x, std::span<const int> labels,
                 const ProbeConfig& cfg, std::span<const Eigen::Index> sample_ids,
                 const ProbeObserver& observer) {
  cfg.validate();
  require_frozen(teacher);
  if (!sample_ids.empty() && static_cast<Eigen::Index>(sample_ids.size()) != x.rows())
    throw DomainError("sample id count does not match batch size");

  Matrix delta(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    delta.row(i) = initial_noise(cfg.seed, sample_ids.empty() ? i : sample_ids[static_cast<std::size_t>(i)],
                                 x.cols(), cfg.epsilon);

  Vector losses;
  for (int step = 0; step < cfg.steps; ++step) {
    const Matrix g = ascent_gradient(teacher, x + delta, labels, losses, step);
    check_losses(losses, step);
    delta = project_linf(delta + cfg.step_size * g, cfg.epsilon);
    if (observer) observer(step, delta);
  }
  return delta;
}

RowVector pga_probe_shared(const Classifier& teacher, const Matrix& x, std::span<const int> labels,
                           const ProbeConfig& cfg, Eigen::Index stream_id,
                           const ProbeObserver& observer) {
  cfg.validate();
  require_frozen(teacher);
  if (x.rows() == 0) throw DomainError("shared probe needs at least one sample");

  RowVector delta = initial_noise(cfg.seed, stream_id, x.cols(), cfg.epsilon);
  Vector losses;
  for (int step = 0; step < cfg.steps; ++step) {
    const Matrix shifted = x.rowwise() + delta;
    const Matrix g = ascent_gradient(teacher, shifted, labels, losses, step);
    check_losses(losses, step);
    delta = project_linf(delta + cfg.step_size * g.colwise().sum(), cfg.epsilon);
    if (observer) observer(step, delta);
  }
  return delta;
}

EditInstruction EditSet::instruction(Eigen::Index i) const {
  return {x_probe.row(i), y_edit[static_cast<std::size_t>(i)], y_orig[static_cast<std::size_t>(i)]};
}

EditSet synthesize_edit_instructions(const Classifier& teacher, const LabeledDataset& forget_set,
                                     const ProbeConfig& cfg) {
  cfg.validate();
  require_frozen(teacher);
  if (forget_set.empty()) throw DomainError("forget set is empty; nothing to probe");

  const Matrix& x = forget_set.inputs();
  const std::vector<int>& y = forget_set.labels();
  const Eigen::Index n = x.rows();
  if (static_cast<int>(distinct_labels(forget_set).size()) >= teacher.class_count())
    throw DomainError("forget set covers every class; no retained class to edit toward");

  // probed inputs for every source row, in D_f order
  Matrix probed(n, x.cols());
  EditSet out;
  if (cfg.noise_mode == NoiseMode::kPerSample) {
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - start);
      std::vector<Eigen::Index> ids(static_cast<std::size_t>(len));
      std::iota(ids.begin(), ids.end(), start);
      const Matrix xb = x.middleRows(start, len);
      const std::span<const int> yb(y.data() + start, static_cast<std::size_t>(len));
      probed.middleRows(start, len) = xb + pga_probe(teacher, xb, yb, cfg, ids);
    }
    out.noise_matrices = static_cast<int>(n);
  } else {
    std::map<int, std::vector<Eigen::Index>> rows_by_class;
    for (Eigen::Index i = 0; i < n; ++i) rows_by_class[y[static_cast<std::size_t>(i)]].push_back(i);
    for (const auto& [cls, rows] : rows_by_class) {
      const Matrix xc = x(rows, Eigen::all);
      const std::vector<int> yc(rows.size(), cls);
      // stream keyed by the class's first row so a single-sample D_f matches per_sample mode
      const RowVector delta = pga_probe_shared(teacher, xc, yc, cfg, rows.front());
      for (auto r : rows) probed.row(r) = x.row(r) + delta;
    }
    out.noise_matrices = static_cast<int>(rows_by_class.size());
  }

  // a probe that lands in another forget class is no better than one that did not move
  const std::set<int> forget(y.begin(), y.end());
  const Matrix logits = teacher.logits(probed);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int yo = y[static_cast<std::size_t>(i)];
    int ye = argmax_lowest(logits.row(i));
    auto& stats = out.per_class[yo];
    ++stats.sources;
    if (!forget.count(ye)) {
      ++stats.flipped;
      ++out.flip_count;
    } else if (cfg.fallback == FlipFallback::kRunnerUp) {
      ye = runner_up(logits.row(i), forget);
    } else {
      continue;
    }
    ++stats.kept;
    keep.push_back(i);
    out.y_edit.push_back(ye);
    out.y_orig.push_back(yo);
  }
  out.source_count = n;
  out.flip_rate = static_cast<double>(out.flip_count) / static_cast<double>(n);
  out.x_probe = probed(keep, Eigen::all);
  out.source_index = keep;

  if (out.flip_count == 0 && cfg.fallback == FlipFallback::kDrop) {
    std::ostringstream os;
    os << "probing failed: no prediction flipped for any of " << n
       << " forget samples (epsilon " << cfg.epsilon << ")";
    throw ProbingFailed(os.str());
  }
  if (out.flip_count < n && cfg.fallback == FlipFallback::kDrop) {
    std::ostringstream os;
    os << "dropped " << (n - out.flip_count) << " of " << n
       << " probed samples whose prediction did not flip";
    out.warnings.push_back(os.str());
  }
  return out;
}

void export_edit_set(const EditSet& edits, const std::filesystem::path& stem) {
  auto column = [](const auto& v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<double>(v[i]);
    return m;
  };
  nlohmann::json summary = {
      {"kind", "edit_set"},
      {"instructions", edits.size()},
      {"source_count", edits.source_count},
      {"flip_count", edits.flip_count},
      {"flip_rate", edits.flip_rate},
      {"noise_matrices", edits.noise_matrices},
  };
  for (const auto& [cls, s] : edits.per_class)
    summary["per_class"][std::to_string(cls)] = {{"sources", s.sources}, {"flipped", s.flipped}, {"kept", s.kept}};

  ArrayArchive archive;
  archive.manifest_json = summary.dump();
  archive.arrays = {{"x_probe", edits.x_probe},
                    {"y_edit", column(edits.y_edit)},
                    {"y_orig", column(edits.y_orig)},
                    {"source_index", column(edits.source_index)}};
  auto bin = stem;
  bin += ".bin";
  write_archive(bin, archive);

  auto txt = stem;
  txt += ".txt";
  std::ofstream out(txt);
  out << std::setprecision(6) << "flip_rate=" << edits.flip_rate << "\n"
      << "instructions=" << edits.size() << "\n"
      << "source_count=" << edits.source_count << "\n"
      << "noise_matrices=" << edits.noise_matrices << "\n";
  for (const auto& [cls, s] : edits.per_class)
    out << "class." << cls << ".sources=" << s.sources << "\nclass." << cls << ".flipped=" << s.flipped
        << "\nclass." << cls << ".kept=" << s.kept << "\n";
  for (const auto& w : edits.warnings) out << "warning=" << w << "\n";
}

EditSet import_edit_set(const std::filesystem::path& file) {
  const ArrayArchive archive = read_archive(file);
  const auto summary = nlohmann::json::parse(archive.manifest_json);
  if (summary.value("kind", "") != "edit_set") throw DataError(file.string() + " is not an edit set");
  EditSet e;
  e.x_probe = archive.at("x_probe");
  const Matrix& ye = archive.at("y_edit");
  const Matrix& yo = archive.at("y_orig");
  const Matrix& src = archive.at("source_index");
  for (Eigen::Index i = 0; i < ye.rows(); ++i) {
    e.y_edit.push_back(static_cast<int>(ye(i, 0)));
    e.y_orig.push_back(static_cast<int>(yo(i, 0)));
    e.source_index.push_back(static_cast<Eigen::Index>(src(i, 0)));
  }
  e.source_count = summary.at("source_count").get<Eigen::Index>();
  e.flip_count = summary.at("flip_count").get<Eigen::Index>();
  e.flip_rate = summary.at("flip_rate").get<double>();
  e.noise_matrices = summary.at("noise_matrices").get<int>();
  if (summary.contains("per_class"))
    for (const auto& [cls, s] : summary["per_class"].items())
      e.per_class[std::stoi(cls)] = {s.at("sources").get<Eigen::Index>(), s.at("flipped").get<Eigen::Index>(),
                                     s.at("kept").get<Eigen::Index>()};
  return e;
}

}  // namespace pte
