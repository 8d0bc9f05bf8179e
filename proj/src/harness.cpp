#include "pte/harness.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>
#include <rapidjson/document.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>

#include "pte/access_log.hpp"
#include "pte/baselines.hpp"
#include "pte/checkpoint.hpp"
#include "pte/errors.hpp"
#include "pte/rng.hpp"
#include "pte/signal_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pte {
namespace {

const char kSchemaText[] =
#include "experiment_schema.inc"
    ;

std::string hex16(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + file.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  out << text;
}

void check_schema(const std::string& text) {
  static const rapidjson::SchemaDocument schema = [] {
    rapidjson::Document sd;
    sd.Parse(kSchemaText);
    if (sd.HasParseError()) throw ConfigError("built-in experiment schema is not valid JSON");
    return rapidjson::SchemaDocument(sd);
  }();
  rapidjson::Document doc;
  doc.Parse(text.c_str(), text.size());
  if (doc.HasParseError())
    throw ConfigError("config is not valid JSON (offset " + std::to_string(doc.GetErrorOffset()) + ")");
  rapidjson::SchemaValidator validator(schema);
  if (!doc.Accept(validator)) {
    rapidjson::StringBuffer where;
    validator.GetInvalidDocumentPointer().StringifyUriFragment(where);
    std::string at = where.GetString();
    if (at == "#") at = "# (top level)";
    throw ConfigError("config violates the experiment schema at " + at + ": '" +
                      validator.GetInvalidSchemaKeyword() + "' check failed");
  }
}

json train_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"weight_decay", c.weight_decay}};
}

TrainConfig train_from_json(const json& j, TrainConfig c) {
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  return c;
}

json dataset_to_json(const DatasetSpec& d) {
  json j = {{"kind", d.kind}, {"classes", d.class_count}};
  if (d.kind == "blobs") {
    j["samples_per_class"] = d.samples_per_class;
    j["dim"] = d.dim;
    j["separation"] = d.separation;
  } else if (d.kind == "signals") {
    j["samples_per_class"] = d.samples_per_class;
    j["channels"] = d.channels;
    j["length"] = d.length;
    j["base_frequency"] = d.signal.base_frequency;
    j["noise_std"] = d.signal.noise_std;
  } else {
    j["train"] = d.train_path.string();
    j["test"] = d.test_path.string();
    j["channels"] = d.channels;
    j["window_length"] = d.window_length;
    j["stride"] = d.stride;
    if (!d.label_map.empty()) j["labels"] = d.label_map;
  }
  return j;
}

DatasetSpec dataset_from_json(const json& j, const fs::path& base_dir) {
  DatasetSpec d;
  d.kind = j.at("kind").get<std::string>();
  if (d.kind == "signals") {
    d.class_count = 10;
    d.samples_per_class = 60;
  } else if (d.kind == "signal_files") {
    d.class_count = 10;
  }
  d.class_count = j.value("classes", d.class_count);
  d.samples_per_class = j.value("samples_per_class", d.samples_per_class);
  d.dim = j.value("dim", d.dim);
  d.separation = j.value("separation", d.separation);
  d.channels = j.value("channels", d.channels);
  d.length = j.value("length", d.length);
  d.signal.base_frequency = j.value("base_frequency", d.signal.base_frequency);
  d.signal.noise_std = j.value("noise_std", d.signal.noise_std);
  d.window_length = j.value("window_length", d.window_length);
  d.stride = j.value("stride", d.stride);
  if (j.contains("labels")) d.label_map = j["labels"].get<std::map<std::string, int>>();
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  if (d.kind == "signal_files") {
    if (!j.contains("train") || !j.contains("test"))
      throw ConfigError("signal_files datasets need both 'train' and 'test' paths");
    d.train_path = resolve(j["train"].get<std::string>());
    d.test_path = resolve(j["test"].get<std::string>());
  }
  return d;
}

json config_to_json(const ExperimentConfig& c) {
  json j = {
      {"name", c.name},
      {"dataset", dataset_to_json(c.dataset)},
      {"architecture", c.architecture},
      {"forget_classes", c.forget_classes},
      {"method", c.method},
      {"train", train_to_json(c.train)},
      {"baseline", train_to_json(c.baseline)},
      {"probe",
       {{"epsilon", c.probe.epsilon},
        {"steps", c.probe.steps},
        {"step_size", c.probe.step_size},
        {"noise_mode", to_string(c.probe.noise_mode)},
        {"fallback", to_string(c.probe.fallback)},
        {"batch_size", c.probe.batch_size}}},
      {"edit",
       {{"epochs", c.edit.epochs},
        {"eta_push", c.edit.eta_push},
        {"eta_pull", c.edit.eta_pull},
        {"temperature", c.edit.temperature},
        {"schedule", to_string(c.edit.schedule)},
        {"batch_size", c.edit.batch_size},
        {"kl_direction", to_string(c.edit.kl_direction)}}},
      {"repeats", c.repeats},
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"track_epochs", c.track_epochs},
      {"projection_plot", c.projection_plot},
  };
  if (c.original_checkpoint) j["original_checkpoint"] = c.original_checkpoint->string();
  return j;
}

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  c.name = j.value("name", c.name);
  c.dataset = dataset_from_json(j.at("dataset"), base_dir);
  c.architecture = j.value("architecture", c.architecture);
  if (j.contains("forget_classes")) c.forget_classes = j["forget_classes"].get<std::vector<int>>();
  c.method = j.at("method").get<std::string>();
  if (j.contains("train")) c.train = train_from_json(j["train"], c.train);
  if (j.contains("baseline")) c.baseline = train_from_json(j["baseline"], c.baseline);
  if (j.contains("probe")) {
    const json& p = j["probe"];
    c.probe.epsilon = p.value("epsilon", c.probe.epsilon);
    c.probe.steps = p.value("steps", c.probe.steps);
    c.probe.step_size = p.value("step_size", c.probe.step_size);
    if (p.contains("noise_mode")) c.probe.noise_mode = parse_noise_mode(p["noise_mode"]);
    if (p.contains("fallback")) c.probe.fallback = parse_fallback(p["fallback"]);
    c.probe.batch_size = p.value("batch_size", c.probe.batch_size);
  }
  if (j.contains("edit")) {
    const json& e = j["edit"];
    c.edit.epochs = e.value("epochs", c.edit.epochs);
    c.edit.eta_push = e.value("eta_push", c.edit.eta_push);
    c.edit.eta_pull = e.value("eta_pull", c.edit.eta_pull);
    c.edit.temperature = e.value("temperature", c.edit.temperature);
    if (e.contains("schedule")) c.edit.schedule = parse_schedule(e["schedule"]);
    c.edit.batch_size = e.value("batch_size", c.edit.batch_size);
    if (e.contains("kl_direction")) c.edit.kl_direction = parse_kl_direction(e["kl_direction"]);
  }
  c.repeats = j.value("repeats", c.repeats);
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", "runs/" + c.name);
  if (j.contains("original_checkpoint")) {
    fs::path p(j["original_checkpoint"].get<std::string>());
    c.original_checkpoint = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
  c.track_epochs = j.value("track_epochs", c.track_epochs);
  c.projection_plot = j.value("projection_plot", c.projection_plot);
  c.validate();
  return c;
}

struct MethodOutcome {
  Classifier model;
  std::optional<EditTrace> trace;
  std::optional<EditSet> edits;
  std::optional<bool> retain_free;
};

MethodOutcome run_method(const ExperimentConfig& cfg, const Classifier& original,
                         const ForgetPartition& part, std::uint64_t seed) {
  TrainConfig base = cfg.baseline;
  base.seed = seed;
  if (cfg.method == "pte") {
    ProbeConfig probe = cfg.probe;
    probe.seed = seed;
    PTEConfig edit = cfg.edit;
    edit.seed = seed;
    std::vector<Classifier> snapshots;
    EpochObserver observer;
    if (cfg.track_epochs) observer = [&](int, const Classifier& m) { snapshots.push_back(m.snapshot()); };
    const std::size_t log_from = AccessLog::instance().size();
    UnlearnOutcome out = pte_unlearn(original, part.forget_train, probe, edit, observer);
    const auto offending = AccessLog::instance().reads_between(kUnlearnStart, kUnlearnEnd,
                                                               {part.forget_train.tag()}, log_from);
    // accuracy trajectory, measured only after the unlearning run has ended
    for (std::size_t e = 0; e < snapshots.size(); ++e) {
      for (auto it = out.trace.records.rbegin(); it != out.trace.records.rend(); ++it) {
        if (it->epoch != static_cast<int>(e)) continue;
        it->forget_acc = accuracy(snapshots[e], part.forget_test);
        it->retain_acc = accuracy(snapshots[e], part.retain_test);
        break;
      }
    }
    return {std::move(out.model), std::move(out.trace), std::move(out.edits), offending.empty()};
  }
  if (cfg.method == "retrain")
    return {retrain(Architecture::parse(cfg.architecture), original.class_count(), part.retain_train,
                    part.forget_classes, base, seed),
            {}, {}, {}};
  if (cfg.method == "finetune")
    return {finetune(original, part.retain_train, part.forget_classes, base), {}, {}, {}};
  if (cfg.method == "random_label")
    return {random_label_unlearn(original, part.forget_train, base, seed), {}, {}, {}};
  if (cfg.method == "gradient_ascent")
    return {gradient_ascent_unlearn(original, part.forget_train, base).model, {}, {}, {}};
  throw ConfigError("unknown method '" + cfg.method + "'");
}

std::string aggregate_csv(const std::vector<EvaluationReport>& reports) {
  std::ostringstream os;
  os << "metric,mean,std,n\n" << std::fixed << std::setprecision(4);
  for (const auto& [metric, s] : summarize(reports)) {
    os << metric << ',' << s.mean << ',';
    if (s.n >= 2) os << s.std;
    os << ',' << s.n << '\n';
  }
  return os.str();
}

std::string repeat_file(const char* stem, int r, const char* ext) {
  std::ostringstream os;
  os << stem << '_' << std::setw(2) << std::setfill('0') << r << ext;
  return os.str();
}

}  // namespace

bool method_uses_retain_data(const std::string& method) {
  return method == "retrain" || method == "finetune";
}

void ExperimentConfig::validate() const {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end())
    throw ConfigError("unknown method '" + method + "'");
  if (forget_classes.empty()) throw ConfigError("forget_classes is empty");
  if (dataset.kind != "blobs" && dataset.kind != "signals" && dataset.kind != "signal_files")
    throw ConfigError("unknown dataset kind '" + dataset.kind + "'");
  const Architecture arch = Architecture::parse(architecture);
  int expected = 0;
  if (dataset.kind == "blobs") expected = dataset.dim;
  else if (dataset.kind == "signals") expected = dataset.channels * dataset.length;
  else expected = dataset.channels * dataset.window_length;
  if (arch.input_size() != expected)
    throw ConfigError("architecture " + architecture + " takes " + std::to_string(arch.input_size()) +
                      " inputs but the dataset produces " + std::to_string(expected));
  for (int u : forget_classes)
    if (u < 0 || u >= dataset.class_count)
      throw ConfigError("forget class " + std::to_string(u) + " outside [0, " +
                        std::to_string(dataset.class_count) + ")");
  train.validate();
  baseline.validate();
  probe.validate();
  edit.validate();
}

std::string ExperimentConfig::canonical_json() const { return config_to_json(*this).dump(2) + "\n"; }

std::string ExperimentConfig::hash() const { return hex16(fnv1a(canonical_json())); }

std::string dataset_hash(const ExperimentConfig& cfg) {
  const json j = {{"dataset", dataset_to_json(cfg.dataset)},
                  {"forget_classes", cfg.forget_classes},
                  {"seed", cfg.seed}};
  return hex16(fnv1a(j.dump()));
}

const std::string& experiment_schema() {
  static const std::string text(kSchemaText);
  return text;
}

ExperimentConfig parse_experiment_config(const std::string& json_text, const fs::path& base_dir) {
  check_schema(json_text);
  const json j = json::parse(json_text);
  if (j.contains("variants"))
    throw ConfigError("config has 'variants'; run it with the bench command");
  return config_from_json(j, base_dir);
}

ExperimentConfig load_experiment_config(const fs::path& file) {
  return parse_experiment_config(read_text(file), file.parent_path());
}

std::vector<BenchEntry> parse_bench_config(const std::string& json_text, const fs::path& base_dir) {
  check_schema(json_text);
  json base = json::parse(json_text);
  std::vector<BenchEntry> out;
  if (!base.contains("variants")) {
    ExperimentConfig c = config_from_json(base, base_dir);
    out.push_back({c.name, std::move(c)});
    return out;
  }
  const json variants = base["variants"];
  base.erase("variants");
  for (const auto& v : variants) {
    json merged = base;
    if (v.contains("patch")) merged.merge_patch(v["patch"]);
    const std::string label = v.at("label").get<std::string>();
    try {
      check_schema(merged.dump());
    } catch (const ConfigError& e) {
      throw ConfigError("variant '" + label + "': " + e.what());
    }
    for (const auto& existing : out)
      if (existing.label == label) throw ConfigError("duplicate variant label '" + label + "'");
    out.push_back({label, config_from_json(merged, base_dir)});
  }
  return out;
}

std::vector<BenchEntry> load_bench_config(const fs::path& file) {
  return parse_bench_config(read_text(file), file.parent_path());
}

TrainTestPair build_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.kind == "blobs")
    return generate_blobs(spec.class_count, spec.samples_per_class, spec.dim, spec.separation, seed);
  if (spec.kind == "signals")
    return generate_synthetic_signals(spec.class_count, spec.samples_per_class, spec.channels,
                                      spec.length, seed, spec.signal);
  if (spec.kind == "signal_files") {
    SignalLayout layout;
    layout.channels = spec.channels;
    layout.window_length = spec.window_length;
    layout.stride = spec.stride;
    layout.class_count = spec.class_count;
    layout.label_map = spec.label_map;
    LabeledDataset train = load_signal_dataset(spec.train_path, layout);
    layout.split = Split::kTest;
    layout.tag = "test";
    LabeledDataset test = load_signal_dataset(spec.test_path, layout);
    return {std::move(train), std::move(test)};
  }
  throw ConfigError("unknown dataset kind '" + spec.kind + "'");
}

// ---- manifest ------------------------------------------------------------------

void RunManifest::write(const fs::path& file) const {
  json j = {{"name", name},
            {"method", method},
            {"config_hash", config_hash},
            {"dataset_hash", dataset_hash},
            {"tool_version", tool_version},
            {"started", started},
            {"finished", finished},
            {"config", config_file.string()},
            {"aggregate", aggregate.string()},
            {"repeats", json::array()},
            {"errors", json::array()}};
  for (const auto& r : repeats) {
    json e = {{"seed", r.seed},
              {"report", r.report.string()},
              {"trace", r.trace.string()},
              {"checkpoint", r.checkpoint.string()},
              {"original_checkpoint", r.original_checkpoint.string()},
              {"edit_set", r.edit_set.string()}};
    if (r.retain_free) e["retain_free"] = *r.retain_free;
    j["repeats"].push_back(e);
  }
  for (const auto& e : errors)
    j["errors"].push_back({{"repeat", e.repeat}, {"stage", e.stage}, {"message", e.message}});
  write_text(file, j.dump(2) + "\n");
}

RunManifest RunManifest::read(const fs::path& file) {
  json j;
  try {
    j = json::parse(read_text(file));
  } catch (const json::exception& e) {
    throw DataError("manifest " + file.string() + " is not valid JSON: " + e.what());
  }
  RunManifest m;
  m.name = j.value("name", "");
  m.method = j.value("method", "");
  m.config_hash = j.value("config_hash", "");
  m.dataset_hash = j.value("dataset_hash", "");
  m.tool_version = j.value("tool_version", "");
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.config_file = j.value("config", "");
  m.aggregate = j.value("aggregate", "");
  for (const auto& e : j.value("repeats", json::array())) {
    RepeatArtifacts r;
    r.seed = e.value("seed", std::uint64_t{0});
    r.report = e.value("report", "");
    r.trace = e.value("trace", "");
    r.checkpoint = e.value("checkpoint", "");
    r.original_checkpoint = e.value("original_checkpoint", "");
    r.edit_set = e.value("edit_set", "");
    if (e.contains("retain_free")) r.retain_free = e["retain_free"].get<bool>();
    m.repeats.push_back(r);
  }
  for (const auto& e : j.value("errors", json::array()))
    m.errors.push_back({e.value("repeat", -1), e.value("stage", ""), e.value("message", "")});
  // artifact paths are stored relative to the manifest
  const fs::path dir = file.parent_path();
  auto rebase = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = dir / p;
  };
  rebase(m.config_file);
  rebase(m.aggregate);
  for (auto& r : m.repeats) {
    rebase(r.report);
    rebase(r.trace);
    rebase(r.checkpoint);
    rebase(r.original_checkpoint);
    rebase(r.edit_set);
  }
  return m;
}

// ---- running -------------------------------------------------------------------

RunManifest run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);

  RunManifest m;
  m.name = cfg.name;
  m.method = cfg.method;
  m.started = utc_now();
  const std::string canonical = cfg.canonical_json();
  m.config_hash = hex16(fnv1a(canonical));
  m.dataset_hash = dataset_hash(cfg);
  m.config_file = kConfigName;
  write_text(out / kConfigName, canonical);

  std::vector<EvaluationReport> reports;
  for (int r = 0; r < cfg.repeats; ++r) {
    RepeatArtifacts art;
    art.seed = cfg.seed + static_cast<std::uint64_t>(r);
    std::string stage = "data";
    try {
      auto [train, test] = build_dataset(cfg.dataset, art.seed);
      const ForgetPartition part = partition_by_class(train, test, cfg.forget_classes);

      stage = "train";
      Classifier original;
      if (cfg.original_checkpoint) {
        original = load_checkpoint(*cfg.original_checkpoint);
        if (original.class_count() != cfg.dataset.class_count)
          throw ConfigError("checkpoint has " + std::to_string(original.class_count()) +
                            " classes, dataset has " + std::to_string(cfg.dataset.class_count));
        art.original_checkpoint = *cfg.original_checkpoint;
      } else {
        TrainConfig tc = cfg.train;
        tc.seed = art.seed;
        original = train_supervised(
            build_reference_model(Architecture::parse(cfg.architecture), cfg.dataset.class_count,
                                  art.seed),
            train, tc);
        art.original_checkpoint = repeat_file("original", r, ".ckpt");
        save_checkpoint(original, out / art.original_checkpoint);
      }

      stage = "unlearn";
      MethodOutcome outcome = run_method(cfg, original, part, art.seed);
      art.checkpoint = repeat_file("unlearned", r, ".ckpt");
      save_checkpoint(outcome.model, out / art.checkpoint);
      if (outcome.trace) {
        art.trace = repeat_file("trace", r, ".csv");
        outcome.trace->write_csv(out / art.trace);
      }
      if (outcome.edits) {
        art.edit_set = repeat_file("edits", r, "");
        export_edit_set(*outcome.edits, out / art.edit_set);
        art.edit_set += ".bin";
      }
      art.retain_free = outcome.retain_free;
      if (outcome.retain_free && !*outcome.retain_free)
        m.errors.push_back({r, "audit", "retain data was read between the unlearning markers"});

      stage = "evaluate";
      EvaluationReport report =
          evaluate_unlearning(original, outcome.model, part, cfg.method, art.seed, m.config_hash);
      report.uses_retain_data = method_uses_retain_data(cfg.method);
      art.report = repeat_file("report", r, ".txt");
      report.write(out / art.report);
      reports.push_back(report);
    } catch (const std::exception& e) {
      m.errors.push_back({r, stage, e.what()});
    }
    m.repeats.push_back(art);
  }

  m.aggregate = kAggregateName;
  write_text(out / kAggregateName, aggregate_csv(reports));
  m.finished = utc_now();
  m.write(out / kManifestName);
  return RunManifest::read(out / kManifestName);
}

std::vector<EvaluationReport> load_reports(const RunManifest& manifest) {
  std::vector<EvaluationReport> out;
  for (const auto& r : manifest.repeats)
    if (!r.report.empty() && fs::exists(r.report)) out.push_back(EvaluationReport::read(r.report));
  return out;
}

std::string compare_methods(const std::vector<MethodResults>& methods) {
  for (std::size_t i = 1; i < methods.size(); ++i)
    if (methods[i].dataset_hash != methods[0].dataset_hash)
      throw ConfigError("cannot compare '" + methods[i].label + "' with '" + methods[0].label +
                        "': they were run on different datasets");
  std::ostringstream os;
  os << "method";
  for (const auto& m : kTableMetrics) os << ',' << m << "_mean," << m << "_std";
  os << ",repeats\n" << std::fixed << std::setprecision(2);
  for (const auto& method : methods) {
    const auto summary = summarize(method.reports);
    os << method.label;
    for (const auto& m : kTableMetrics) {
      const MetricSummary& s = summary.at(m);
      os << ',';
      if (s.n > 0) os << s.mean;
      os << ',';
      if (s.n >= 2) os << s.std;
    }
    os << ',' << method.reports.size() << '\n';
  }
  return os.str();
}

bool BenchResult::ok() const {
  for (const auto& [label, m] : runs)
    if (!m.ok()) return false;
  return true;
}

BenchResult run_bench(const std::vector<BenchEntry>& entries, const fs::path& out_dir) {
  if (entries.empty()) throw ConfigError("bench has no entries");
  fs::create_directories(out_dir);
  BenchResult result;
  std::vector<MethodResults> methods;
  json listing = json::array();
  for (const auto& entry : entries) {
    ExperimentConfig cfg = entry.config;
    cfg.output_dir = out_dir / entry.label;
    RunManifest m = run_experiment(cfg);
    methods.push_back({entry.label, m.dataset_hash, load_reports(m)});
    listing.push_back({{"label", entry.label}, {"manifest", (fs::path(entry.label) / kManifestName).string()}});
    result.runs.emplace_back(entry.label, std::move(m));
  }
  result.table = out_dir / "comparison.csv";
  write_text(result.table, compare_methods(methods));
  write_text(out_dir / "bench.json", listing.dump(2) + "\n");
  return result;
}

}  // namespace pte
