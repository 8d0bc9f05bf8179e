#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pte/checkpoint.hpp"
#include "pte/errors.hpp"
#include "pte/harness.hpp"
#include "pte/plots.hpp"
#include "pte/training.hpp"

namespace fs = std::filesystem;
using namespace pte;

namespace {

enum Exit { kOk = 0, kRunFailed = 1, kBadConfig = 2 };

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string method;
  std::optional<int> repeats;
  std::vector<int> forget_classes;

  void apply(ExperimentConfig& cfg) const {
    if (!out.empty()) cfg.output_dir = out;
    if (seed) cfg.seed = *seed;
    if (!method.empty()) cfg.method = method;
    if (repeats) cfg.repeats = *repeats;
    if (!forget_classes.empty()) cfg.forget_classes = forget_classes;
    cfg.validate();
  }
};

void add_common(CLI::App* cmd, Overrides& o, bool with_method) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "base seed; repeat r uses seed + r");
  cmd->add_option("--repeats", o.repeats, "number of repeats")->check(CLI::PositiveNumber);
  cmd->add_option("--forget-classes", o.forget_classes, "comma-separated class indices")->delimiter(',');
  if (with_method)
    cmd->add_option("--method", o.method, "unlearning method")->check(CLI::IsMember(kMethods));
}

int fail(const std::string& stage, const std::string& message, int code) {
  std::cerr << "pte: " << stage << ": " << message << "\n";
  return code;
}

int report_manifest(const RunManifest& m, const fs::path& out) {
  for (const auto& e : m.errors)
    std::cerr << "pte: " << e.stage << " stage failed (repeat " << e.repeat << "): " << e.message << "\n";
  const auto reports = load_reports(m);
  for (const auto& r : reports)
    std::printf("seed %llu  acc_f %.2f  acc_r %.2f  acc_ft %.2f  acc_rt %.2f  h_mean %.2f  mia %.2f\n",
                static_cast<unsigned long long>(r.seed), r.acc_f, r.acc_r, r.acc_ft, r.acc_rt,
                r.h_mean, r.mia);
  std::printf("manifest: %s\n", (out / kManifestName).string().c_str());
  return m.ok() ? kOk : kRunFailed;
}

int cmd_train(const Overrides& o) {
  ExperimentConfig cfg = load_experiment_config(o.config);
  o.apply(cfg);
  fs::create_directories(cfg.output_dir);
  auto [train, test] = build_dataset(cfg.dataset, cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  TrainHistory history;
  const Classifier model = train_supervised(
      build_reference_model(Architecture::parse(cfg.architecture), cfg.dataset.class_count, cfg.seed),
      train, tc, &history);
  const fs::path file = cfg.output_dir / "original.ckpt";
  save_checkpoint(model, file);
  std::printf("train loss %.4f -> %.4f  test accuracy %.2f\n", history.initial_loss,
              history.epoch_loss.empty() ? history.initial_loss : history.epoch_loss.back(),
              accuracy(model, test));
  std::printf("checkpoint: %s\n", file.string().c_str());
  return kOk;
}

int cmd_unlearn(const Overrides& o) {
  ExperimentConfig cfg = load_experiment_config(o.config);
  o.apply(cfg);
  return report_manifest(run_experiment(cfg), cfg.output_dir);
}

int cmd_evaluate(const Overrides& o, const std::string& original_path, const std::string& unlearned_path,
                 const std::string& report_path) {
  ExperimentConfig cfg = load_experiment_config(o.config);
  o.apply(cfg);
  auto [train, test] = build_dataset(cfg.dataset, cfg.seed);
  const ForgetPartition part = partition_by_class(train, test, cfg.forget_classes);
  const Classifier original = load_checkpoint(original_path);
  const Classifier unlearned = load_checkpoint(unlearned_path);
  EvaluationReport r = evaluate_unlearning(original, unlearned, part, cfg.method, cfg.seed, cfg.hash());
  r.uses_retain_data = method_uses_retain_data(cfg.method);
  if (!report_path.empty()) r.write(report_path);
  std::cout << r.serialize();
  return kOk;
}

int cmd_bench(const Overrides& o) {
  auto entries = load_bench_config(o.config);
  fs::path out = o.out.empty() ? fs::path("runs") / fs::path(o.config).stem() : fs::path(o.out);
  for (auto& e : entries) {
    Overrides per = o;
    per.out.clear();
    per.method.clear();
    per.apply(e.config);
  }
  const BenchResult result = run_bench(entries, out);
  for (const auto& [label, m] : result.runs)
    for (const auto& e : m.errors)
      std::cerr << "pte: " << label << ": " << e.stage << " stage failed (repeat " << e.repeat
                << "): " << e.message << "\n";
  std::ifstream table(result.table);
  std::cout << table.rdbuf();
  std::printf("table: %s\n", result.table.string().c_str());
  return result.ok() ? kOk : kRunFailed;
}

int cmd_plot(const std::string& run_dir, const std::string& out_dir) {
  const auto runs = load_runs(run_dir);
  const PlotOutput plots = emit_plots(runs, out_dir.empty() ? fs::path(run_dir) / "plots" : fs::path(out_dir));
  for (const auto& w : plots.warnings) std::cerr << "pte: plot: warning: " << w << "\n";
  for (const auto& f : plots.files) std::printf("%s\n", f.string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retain-free class unlearning: probe, edit, evaluate, compare."};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  Overrides train_o, unlearn_o, eval_o, bench_o;
  auto* train = app.add_subcommand("train", "train the original model for a config");
  add_common(train, train_o, false);

  auto* unlearn = app.add_subcommand("unlearn", "run one unlearning method over all repeats");
  add_common(unlearn, unlearn_o, true);

  std::string original_path, unlearned_path, report_path;
  auto* evaluate = app.add_subcommand("evaluate", "score an unlearned checkpoint against its original");
  add_common(evaluate, eval_o, true);
  evaluate->add_option("--original", original_path, "original model checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--checkpoint", unlearned_path, "unlearned model checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--report", report_path, "write the report here as well");

  auto* bench = app.add_subcommand("bench", "run every variant of a bench config and compare them");
  add_common(bench, bench_o, false);

  std::string run_dir, plot_out;
  auto* plot = app.add_subcommand("plot", "draw boxplots, accuracy trajectories and projections");
  plot->add_option("--run", run_dir, "directory holding manifest.json or bench.json")->required()->check(CLI::ExistingDirectory);
  plot->add_option("--out", plot_out, "image directory (default <run>/plots)");

  CLI11_PARSE(app, argc, argv);

  std::string stage = "config";
  try {
    if (*train) {
      stage = "train";
      return cmd_train(train_o);
    }
    if (*unlearn) {
      stage = "unlearn";
      return cmd_unlearn(unlearn_o);
    }
    if (*evaluate) {
      stage = "evaluate";
      return cmd_evaluate(eval_o, original_path, unlearned_path, report_path);
    }
    if (*bench) {
      stage = "bench";
      return cmd_bench(bench_o);
    }
    if (*plot) {
      stage = "plot";
      return cmd_plot(run_dir, plot_out);
    }
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kBadConfig);
  } catch (const std::exception& e) {
    return fail(stage, e.what(), kRunFailed);
  }
  return kOk;
}
