#include "pte/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pte/checkpoint.hpp"
#include "pte/errors.hpp"

namespace fs = std::filesystem;

namespace pte {
namespace {

// tab10
const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44},  {40, 39, 214},
                               {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127},
                               {34, 189, 188}, {207, 190, 23}};
const cv::Scalar kBlack{0, 0, 0};
const cv::Scalar kGrid{225, 225, 225};
const cv::Scalar kWhite{255, 255, 255};

cv::Scalar color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.45,
          const cv::Scalar& c = kBlack, bool centered = false) {
  if (centered) {
    int base = 0;
    const cv::Size sz = cv::getTextSize(s, cv::FONT_HERSHEY_SIMPLEX, scale, 1, &base);
    at.x -= sz.width / 2;
  }
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, c, 1, cv::LINE_AA);
}

std::string fmt(double v, int precision = 0) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

// Plot area with a linear y range, drawn inside `frame` of an image.
struct Axes {
  cv::Rect frame;
  double x0, x1, y0, y1;

  int px(double x) const {
    return frame.x + static_cast<int>(std::lround((x - x0) / (x1 - x0) * frame.width));
  }
  int py(double y) const {
    return frame.y + frame.height - static_cast<int>(std::lround((y - y0) / (y1 - y0) * frame.height));
  }
  cv::Point at(double x, double y) const { return {px(x), py(y)}; }

  void draw_y_grid(cv::Mat& img, double step) const {
    for (double y = y0; y <= y1 + 1e-9; y += step) {
      cv::line(img, at(x0, y), at(x1, y), kGrid, 1);
      text(img, fmt(y), {frame.x - 30, py(y) + 4}, 0.35);
    }
    cv::rectangle(img, frame, kBlack, 1);
  }
};

bool write_png(const fs::path& file, const cv::Mat& img) {
  return cv::imwrite(file.string(), img);
}

fs::path boxplot(const std::vector<LabeledRun>& runs,
                 const std::vector<std::vector<EvaluationReport>>& reports, const fs::path& out_dir) {
  const int cols = 3, rows = 2, pw = 360, ph = 260;
  cv::Mat img(rows * ph, cols * pw, CV_8UC3, kWhite);
  const std::size_t n = runs.size();
  for (std::size_t m = 0; m < kTableMetrics.size(); ++m) {
    const int cx = static_cast<int>(m % cols) * pw, cy = static_cast<int>(m / cols) * ph;
    Axes ax{{cx + 45, cy + 30, pw - 65, ph - 80}, 0.0, static_cast<double>(n), 0.0, 100.0};
    ax.draw_y_grid(img, 20.0);
    text(img, kTableMetrics[m], {cx + pw / 2, cy + 20}, 0.5, kBlack, true);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> v;
      for (const auto& r : reports[i]) v.push_back(metric_value(r, kTableMetrics[m]));
      const double mid = static_cast<double>(i) + 0.5;
      // alternate label rows so long method names do not collide
      const int row = n > 3 ? static_cast<int>(i % 2) * 14 : 0;
      text(img, runs[i].first, {ax.px(mid), ax.frame.y + ax.frame.height + 16 + row}, 0.35, kBlack, true);
      if (v.empty()) continue;
      const double q1 = quantile(v, 0.25), q2 = quantile(v, 0.5), q3 = quantile(v, 0.75);
      const double lo = *std::min_element(v.begin(), v.end());
      const double hi = *std::max_element(v.begin(), v.end());
      const cv::Scalar c = color(i);
      cv::line(img, ax.at(mid, lo), ax.at(mid, q1), c, 1);
      cv::line(img, ax.at(mid, q3), ax.at(mid, hi), c, 1);
      cv::line(img, ax.at(mid - 0.15, lo), ax.at(mid + 0.15, lo), c, 1);
      cv::line(img, ax.at(mid - 0.15, hi), ax.at(mid + 0.15, hi), c, 1);
      cv::rectangle(img, ax.at(mid - 0.3, q3), ax.at(mid + 0.3, q1), c, 2);
      cv::line(img, ax.at(mid - 0.3, q2), ax.at(mid + 0.3, q2), kBlack, 2);
      for (std::size_t k = 0; k < v.size(); ++k) {
        // spread points horizontally so equal values stay visible
        const double jitter = v.size() > 1 ? -0.2 + 0.4 * static_cast<double>(k) / (v.size() - 1) : 0.0;
        cv::circle(img, ax.at(mid + jitter, v[k]), 3, c, cv::FILLED, cv::LINE_AA);
      }
    }
  }
  const fs::path file = out_dir / "boxplot.png";
  if (!write_png(file, img)) throw DataError("cannot write " + file.string());
  return file;
}

struct EpochPoint {
  int epoch;
  double forget_acc, retain_acc;
};

std::vector<EpochPoint> epoch_points(const EditTrace& trace) {
  std::map<int, EpochPoint> by_epoch;
  for (const auto& r : trace.records)
    if (r.forget_acc && r.retain_acc) by_epoch[r.epoch] = {r.epoch, *r.forget_acc, *r.retain_acc};
  std::vector<EpochPoint> out;
  for (const auto& [e, p] : by_epoch) out.push_back(p);
  return out;
}

fs::path trace_plot(const std::string& label, int repeat, const std::vector<EpochPoint>& pts,
                    const fs::path& out_dir) {
  cv::Mat img(360, 640, CV_8UC3, kWhite);
  const double last = std::max(1.0, static_cast<double>(pts.back().epoch + 1));
  Axes ax{{55, 40, 470, 270}, 0.0, last, 0.0, 100.0};
  ax.draw_y_grid(img, 20.0);
  for (int e = 0; e <= static_cast<int>(last); e += std::max(1, static_cast<int>(last) / 10))
    text(img, std::to_string(e), {ax.px(e), ax.frame.y + ax.frame.height + 16}, 0.35, kBlack, true);
  text(img, "epoch", {ax.px(last / 2), 350}, 0.4, kBlack, true);
  text(img, label + " repeat " + std::to_string(repeat) + ": test accuracy per epoch", {280, 25}, 0.5,
       kBlack, true);
  const cv::Scalar forget_c = color(3), retain_c = color(0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double x = pts[i].epoch + 1;
    cv::circle(img, ax.at(x, pts[i].forget_acc), 3, forget_c, cv::FILLED, cv::LINE_AA);
    cv::circle(img, ax.at(x, pts[i].retain_acc), 3, retain_c, cv::FILLED, cv::LINE_AA);
    if (i > 0) {
      const double xp = pts[i - 1].epoch + 1;
      cv::line(img, ax.at(xp, pts[i - 1].forget_acc), ax.at(x, pts[i].forget_acc), forget_c, 2, cv::LINE_AA);
      cv::line(img, ax.at(xp, pts[i - 1].retain_acc), ax.at(x, pts[i].retain_acc), retain_c, 2, cv::LINE_AA);
    }
  }
  cv::line(img, {540, 60}, {560, 60}, forget_c, 2);
  text(img, "Acc_ft", {565, 64}, 0.4);
  cv::line(img, {540, 80}, {560, 80}, retain_c, 2);
  text(img, "Acc_rt", {565, 84}, 0.4);
  const fs::path file = out_dir / ("trace_" + label + "_r" + std::to_string(repeat) + ".png");
  if (!write_png(file, img)) throw DataError("cannot write " + file.string());
  return file;
}

void scatter_panel(cv::Mat& img, const cv::Rect& frame, const Matrix& xy, const std::vector<int>& cls,
                   const std::string& title) {
  const double xmin = xy.col(0).minCoeff(), xmax = xy.col(0).maxCoeff();
  const double ymin = xy.col(1).minCoeff(), ymax = xy.col(1).maxCoeff();
  const double padx = 0.05 * std::max(xmax - xmin, 1e-9), pady = 0.05 * std::max(ymax - ymin, 1e-9);
  Axes ax{frame, xmin - padx, xmax + padx, ymin - pady, ymax + pady};
  cv::rectangle(img, frame, kBlack, 1);
  text(img, title, {frame.x + frame.width / 2, frame.y - 8}, 0.5, kBlack, true);
  for (Eigen::Index i = 0; i < xy.rows(); ++i)
    cv::circle(img, ax.at(xy(i, 0), xy(i, 1)), 2, color(static_cast<std::size_t>(cls[static_cast<std::size_t>(i)])),
               cv::FILLED, cv::LINE_AA);
}

fs::path projection_plot(const std::string& label, const RunManifest& m, const fs::path& out_dir) {
  const ExperimentConfig cfg = load_experiment_config(m.config_file);
  const RepeatArtifacts& rep = m.repeats.front();
  const Classifier original = load_checkpoint(rep.original_checkpoint);
  const Classifier unlearned = load_checkpoint(rep.checkpoint);
  const auto data = build_dataset(cfg.dataset, rep.seed);
  const Matrix& x = data.second.inputs();

  cv::Mat img(420, 820, CV_8UC3, kWhite);
  const std::pair<const Classifier*, const char*> panels[] = {{&original, "original"},
                                                                {&unlearned, "unlearned"}};
  for (int p = 0; p < 2; ++p) {
    const Network& net = panels[p].first->network();
    const Matrix features = net.forward_prefix(x, net.layers().size() - 1);
    scatter_panel(img, {20 + p * 400, 40, 380, 360}, pca_2d(features), predict(*panels[p].first, x),
                  std::string(panels[p].second) + " (color = predicted class)");
  }
  const fs::path file = out_dir / ("projection_" + label + ".png");
  if (!write_png(file, img)) throw DataError("cannot write " + file.string());
  return file;
}

}  // namespace

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Matrix pca_2d(const Matrix& x) {
  if (x.rows() == 0) throw DomainError("PCA of an empty matrix");
  const Matrix centered = x.rowwise() - x.colwise().mean();
  const Matrix cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(x.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  // eigenvalues come back ascending
  Matrix basis = Matrix::Zero(x.cols(), 2);
  const Eigen::Index d = x.cols();
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, d); ++k) {
    Vector v = solver.eigenvectors().col(d - 1 - k);
    // fix the sign so the projection is reproducible
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0) v = -v;
    basis.col(k) = v;
  }
  return centered * basis;
}

std::vector<LabeledRun> load_runs(const fs::path& run_dir) {
  std::vector<LabeledRun> runs;
  if (fs::exists(run_dir / "bench.json")) {
    std::ifstream in(run_dir / "bench.json");
    const auto listing = nlohmann::json::parse(in);
    for (const auto& e : listing)
      runs.emplace_back(e.at("label").get<std::string>(),
                        RunManifest::read(run_dir / e.at("manifest").get<std::string>()));
  } else if (fs::exists(run_dir / kManifestName)) {
    RunManifest m = RunManifest::read(run_dir / kManifestName);
    std::string label = m.name.empty() ? m.method : m.name;
    runs.emplace_back(std::move(label), std::move(m));
  } else {
    throw DataError("no bench.json or " + std::string(kManifestName) + " in " + run_dir.string());
  }
  return runs;
}

PlotOutput emit_plots(const std::vector<LabeledRun>& runs, const fs::path& out_dir) {
  PlotOutput out;
  std::vector<std::vector<EvaluationReport>> reports;
  std::size_t total = 0;
  for (const auto& [label, m] : runs) {
    reports.push_back(load_reports(m));
    total += reports.back().size();
  }
  if (runs.empty() || total == 0) {
    out.warnings.push_back("manifest lists no reports; nothing to plot");
    return out;
  }
  fs::create_directories(out_dir);
  out.files.push_back(boxplot(runs, reports, out_dir));

  for (const auto& [label, m] : runs) {
    for (std::size_t r = 0; r < m.repeats.size(); ++r) {
      const fs::path& trace = m.repeats[r].trace;
      if (trace.empty()) continue;
      if (!fs::exists(trace)) {
        out.warnings.push_back("trace " + trace.string() + " for " + label + " is missing; skipped");
        continue;
      }
      const auto pts = epoch_points(EditTrace::read_csv(trace));
      if (pts.empty()) {
        out.warnings.push_back("trace " + trace.string() + " has no per-epoch accuracies; skipped");
        continue;
      }
      out.files.push_back(trace_plot(label, static_cast<int>(r), pts, out_dir));
    }
    if (m.repeats.empty() || m.config_file.empty() || !fs::exists(m.config_file)) continue;
    if (!load_experiment_config(m.config_file).projection_plot) continue;
    const RepeatArtifacts& rep = m.repeats.front();
    if (!fs::exists(rep.checkpoint) || !fs::exists(rep.original_checkpoint)) {
      out.warnings.push_back("checkpoints for " + label + " are missing; projection skipped");
      continue;
    }
    out.files.push_back(projection_plot(label, m, out_dir));
  }
  return out;
}

}  // namespace pte
