#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "pte/checkpoint.hpp"
#include "pte/errors.hpp"
#include "pte/harness.hpp"
#include "pte/plots.hpp"
#include "pte/rng.hpp"
#include "support.hpp"

namespace pte {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A small, fast blobs config.
nlohmann::json small_config() {
  return {{"name", "small"},
          {"dataset", {{"kind", "blobs"}, {"classes", 4}, {"samples_per_class", 40}, {"dim", 2}, {"separation", 6.0}}},
          {"architecture", "mlp(2,16)"},
          {"forget_classes", {0}},
          {"method", "pte"},
          {"train", {{"epochs", 10}, {"learning_rate", 0.05}}},
          {"baseline", {{"epochs", 5}, {"learning_rate", 0.05}}},
          {"probe", {{"epsilon", 2.5}, {"steps", 10}, {"step_size", 1e6}, {"fallback", "runner_up"}}},
          {"edit", {{"epochs", 3}, {"eta_push", 0.3}, {"eta_pull", 1e-3}}},
          {"repeats", 2}};
}

ExperimentConfig small_experiment(const fs::path& out) {
  ExperimentConfig cfg = parse_experiment_config(small_config().dump());
  cfg.output_dir = out;
  return cfg;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("checkpoint");
  for (const char* a : {"mlp(2,64,64)", "cnn1d(2,128)", "cnn2d(12,12,3)"}) {
    Classifier m = build_reference_model(Architecture::parse(a), 5, 42);
    m.set_train_config_hash("abcdef0123456789");
    auto params = m.mutable_network().parameters();
    params[0]->coeffRef(0, 0) = 0.1 + 0.2;  // not exactly representable in decimal
    save_checkpoint(m, dir / "m.ckpt");
    const Classifier back = load_checkpoint(dir / "m.ckpt");
    EXPECT_EQ(back.checksum(), m.checksum()) << a;
    EXPECT_EQ(back.architecture(), m.architecture());
    EXPECT_EQ(back.class_count(), 5);
    EXPECT_EQ(back.seed(), 42u);
    EXPECT_EQ(back.train_config_hash(), "abcdef0123456789");
    EXPECT_FALSE(back.frozen());
  }
  save_checkpoint(build_reference_model(Architecture::parse("mlp(2,4)"), 3, 0).snapshot(), dir / "f.ckpt");
  EXPECT_TRUE(load_checkpoint(dir / "f.ckpt").frozen());
}

TEST(Checkpoint, CorruptFileIsDataError) {
  TempDir dir("checkpoint_bad");
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), DataError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), DataError);
}

TEST(ExperimentConfig, SchemaViolationsNameTheLocation) {
  auto expect_rejected = [](nlohmann::json j, const std::string& fragment) {
    try {
      parse_experiment_config(j.dump());
      ADD_FAILURE() << "accepted " << j.dump();
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  auto j = small_config();
  j["repeats"] = 0;
  expect_rejected(j, "/repeats");
  j = small_config();
  j["method"] = "scrub";
  expect_rejected(j, "/method");
  j = small_config();
  j["edit"]["temperature"] = 0;
  expect_rejected(j, "/edit/temperature");
  j = small_config();
  j["surprise"] = 1;
  expect_rejected(j, "additionalProperties");
  j = small_config();
  j.erase("dataset");
  expect_rejected(j, "required");
  j = small_config();
  j["architecture"] = "resnet18";
  expect_rejected(j, "architecture");
  EXPECT_THROW(parse_experiment_config("{not json"), ConfigError);
}

TEST(ExperimentConfig, SemanticChecksBeyondTheSchema) {
  auto j = small_config();
  j["forget_classes"] = {4};
  EXPECT_THROW(parse_experiment_config(j.dump()), ConfigError);
  j = small_config();
  j["architecture"] = "mlp(3,16)";
  EXPECT_THROW(parse_experiment_config(j.dump()), ConfigError);
  j = small_config();
  j["variants"] = nlohmann::json::array();
  EXPECT_THROW(parse_experiment_config(j.dump()), ConfigError);
}

TEST(ExperimentConfig, CanonicalHashIsStable) {
  const ExperimentConfig a = parse_experiment_config(small_config().dump());
  // key order and whitespace do not matter
  const ExperimentConfig b = parse_experiment_config(small_config().dump(4));
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 16u);
  // the canonical form parses back to the same hash
  EXPECT_EQ(parse_experiment_config(a.canonical_json()).hash(), a.hash());
  auto j = small_config();
  j["edit"]["eta_push"] = 0.31;
  EXPECT_NE(parse_experiment_config(j.dump()).hash(), a.hash());
}

TEST(BenchConfig, VariantsPatchTheBase) {
  auto j = small_config();
  j["variants"] = {{{"label", "a"}, {"patch", {{"edit", {{"schedule", "push_only"}}}}}},
                   {{"label", "b"}, {"patch", {{"method", "retrain"}}}}};
  const auto entries = parse_bench_config(j.dump());
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].config.edit.schedule, Schedule::kPushOnly);
  EXPECT_EQ(entries[0].config.edit.eta_push, 0.3);
  EXPECT_EQ(entries[1].config.method, "retrain");

  j["variants"][1]["label"] = "a";
  EXPECT_THROW(parse_bench_config(j.dump()), ConfigError);
  j["variants"][1]["label"] = "b";
  j["variants"][1]["patch"] = {{"repeats", -1}};
  EXPECT_THROW(parse_bench_config(j.dump()), ConfigError);
}

TEST(RunExperiment, WritesEveryArtifact) {
  TempDir dir("run_artifacts");
  ExperimentConfig cfg = small_experiment(dir / "run");
  cfg.repeats = 5;
  const RunManifest m = run_experiment(cfg);
  ASSERT_TRUE(m.ok()) << m.errors.front().stage << ": " << m.errors.front().message;
  ASSERT_EQ(m.repeats.size(), 5u);
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_EQ(m.repeats[r].seed, r);
    EXPECT_TRUE(fs::exists(m.repeats[r].report));
    EXPECT_TRUE(fs::exists(m.repeats[r].trace));
    EXPECT_TRUE(fs::exists(m.repeats[r].checkpoint));
    EXPECT_TRUE(fs::exists(m.repeats[r].original_checkpoint));
    EXPECT_TRUE(fs::exists(m.repeats[r].edit_set));
    EXPECT_EQ(m.repeats[r].retain_free, std::optional<bool>(true));
  }
  EXPECT_EQ(load_reports(m).size(), 5u);
  EXPECT_TRUE(fs::exists(m.aggregate));
  EXPECT_EQ(m.tool_version, kToolVersion);
  EXPECT_FALSE(m.started.empty());
  EXPECT_FALSE(m.finished.empty());

  // the stored config reproduces the manifest's hash byte for byte
  const std::string stored = slurp(m.config_file);
  std::ostringstream h;
  h << std::hex;
  h.width(16);
  h.fill('0');
  h << fnv1a(stored);
  EXPECT_EQ(h.str(), m.config_hash);
  EXPECT_EQ(parse_experiment_config(stored).hash(), m.config_hash);

  // per-epoch accuracies on the trace
  const EditTrace trace = EditTrace::read_csv(m.repeats[0].trace);
  int tracked = 0;
  for (const auto& rec : trace.records) tracked += rec.forget_acc.has_value();
  EXPECT_EQ(tracked, cfg.edit.epochs);
}

TEST(RunExperiment, RerunReproducesTheAggregate) {
  TempDir dir("run_rerun");
  const RunManifest a = run_experiment(small_experiment(dir / "a"));
  const RunManifest b = run_experiment(small_experiment(dir / "b"));
  EXPECT_EQ(slurp(a.aggregate), slurp(b.aggregate));
  EXPECT_EQ(load_checkpoint(a.repeats[1].checkpoint).checksum(), load_checkpoint(b.repeats[1].checkpoint).checksum());
}

TEST(RunExperiment, StageErrorsAreRecordedNotThrown) {
  TempDir dir("run_errors");
  ExperimentConfig cfg = small_experiment(dir / "run");
  cfg.dataset.kind = "signal_files";
  cfg.dataset.channels = 1;
  cfg.dataset.window_length = 2;
  cfg.dataset.train_path = dir / "nowhere";
  cfg.dataset.test_path = dir / "nowhere";
  const RunManifest m = run_experiment(cfg);
  EXPECT_FALSE(m.ok());
  ASSERT_EQ(m.errors.size(), 2u);
  EXPECT_EQ(m.errors[0].stage, "data");
  EXPECT_NE(m.errors[0].message.find("nowhere"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "run" / kManifestName));
  // the failure survives a round trip through the file
  EXPECT_EQ(RunManifest::read(dir / "run" / kManifestName).errors.size(), 2u);
}

TEST(RunExperiment, LoadsAnOriginalCheckpoint) {
  TempDir dir("run_ckpt");
  ExperimentConfig cfg = small_experiment(dir / "first");
  cfg.repeats = 1;
  const RunManifest first = run_experiment(cfg);
  ASSERT_TRUE(first.ok());
  cfg.output_dir = dir / "second";
  cfg.original_checkpoint = first.repeats[0].original_checkpoint;
  const RunManifest second = run_experiment(cfg);
  ASSERT_TRUE(second.ok());
  EXPECT_EQ(slurp(first.aggregate), slurp(second.aggregate));

  cfg.output_dir = dir / "third";
  cfg.dataset.class_count = 5;
  const RunManifest third = run_experiment(cfg);
  ASSERT_EQ(third.errors.size(), 1u);
  EXPECT_EQ(third.errors[0].stage, "train");
}

TEST(RunExperiment, BaselinesFlagRetainUse) {
  TempDir dir("run_baselines");
  for (const std::string method : {"retrain", "finetune", "random_label", "gradient_ascent"}) {
    ExperimentConfig cfg = small_experiment(dir / method);
    cfg.method = method;
    cfg.repeats = 1;
    const RunManifest m = run_experiment(cfg);
    ASSERT_TRUE(m.ok()) << method << ": " << m.errors.front().message;
    const auto reports = load_reports(m);
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_EQ(reports[0].uses_retain_data, method_uses_retain_data(method)) << method;
    EXPECT_FALSE(m.repeats[0].retain_free.has_value());
  }
}

TEST(CompareMethods, TableShapeAndBlankStd) {
  EvaluationReport r1, r2;
  r1.acc_rt = 90;
  r2.acc_rt = 94;
  const std::string table = compare_methods({{"PTE", "h", {r1, r2}}, {"Retrain", "h", {r1}}});
  std::istringstream in(table);
  std::string header, pte, retrain;
  std::getline(in, header);
  std::getline(in, pte);
  std::getline(in, retrain);
  EXPECT_EQ(header,
            "method,acc_f_mean,acc_f_std,acc_r_mean,acc_r_std,acc_ft_mean,acc_ft_std,acc_rt_mean,acc_rt_std,"
            "h_mean_mean,h_mean_std,mia_mean,mia_std,repeats");
  EXPECT_NE(pte.find("92.00,2.83"), std::string::npos) << pte;
  EXPECT_NE(retrain.find("90.00,,"), std::string::npos) << retrain;
  EXPECT_EQ(retrain.substr(retrain.size() - 2), ",1");
}

TEST(CompareMethods, MismatchedDatasetsAreRejected) {
  EXPECT_THROW(compare_methods({{"a", "h1", {}}, {"b", "h2", {}}}), ConfigError);
}

TEST(RunBench, WritesTableAndListing) {
  TempDir dir("bench");
  auto j = small_config();
  j["repeats"] = 1;
  j["variants"] = {{{"label", "PTE"}}, {{"label", "Retrain"}, {"patch", {{"method", "retrain"}}}}};
  const BenchResult r = run_bench(parse_bench_config(j.dump()), dir / "bench");
  EXPECT_TRUE(r.ok());
  const std::string table = slurp(r.table);
  EXPECT_NE(table.find("\nPTE,"), std::string::npos);
  EXPECT_NE(table.find("\nRetrain,"), std::string::npos);
  const auto runs = load_runs(dir / "bench");
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[1].first, "Retrain");
}

TEST(Plots, EmptyManifestWritesNothing) {
  TempDir dir("plots_empty");
  const PlotOutput out = emit_plots({{"empty", RunManifest{}}}, dir / "plots");
  EXPECT_TRUE(out.files.empty());
  EXPECT_FALSE(out.warnings.empty());
}

TEST(Plots, DrawsBoxplotTracesAndSkipsMissingTraces) {
  TempDir dir("plots_run");
  ExperimentConfig cfg = small_experiment(dir / "run");
  cfg.repeats = 2;
  cfg.projection_plot = true;
  RunManifest m = run_experiment(cfg);
  ASSERT_TRUE(m.ok());
  fs::remove(m.repeats[1].trace);
  const PlotOutput out = emit_plots({{"pte", m}}, dir / "plots");
  auto has = [&](const std::string& name) {
    for (const auto& f : out.files)
      if (f.filename() == name) return fs::file_size(f) > 0;
    return false;
  };
  EXPECT_TRUE(has("boxplot.png"));
  EXPECT_TRUE(has("trace_pte_r0.png"));
  EXPECT_FALSE(has("trace_pte_r1.png"));
  EXPECT_TRUE(has("projection_pte.png"));
  ASSERT_EQ(out.warnings.size(), 1u);
  EXPECT_NE(out.warnings[0].find("trace"), std::string::npos);
}

TEST(Plots, QuantileAndPca) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({10}, 0.25), 10.0);

  // points spread along (1, 1, 0): the first component carries all the variance
  Matrix x(5, 3);
  for (int i = 0; i < 5; ++i) x.row(i) << i, i, 0;
  const Matrix p = pca_2d(x);
  ASSERT_EQ(p.cols(), 2);
  EXPECT_NEAR(std::abs(p(4, 0) - p(0, 0)), 4 * std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(p.col(1).cwiseAbs().maxCoeff(), 0.0, 1e-9);
}

}  // namespace
}  // namespace pte
