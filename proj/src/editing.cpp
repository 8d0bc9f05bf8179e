#include "pte/editing.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pte/access_log.hpp"
#include "pte/errors.hpp"
#include "pte/rng.hpp"

namespace pte {

Schedule parse_schedule(const std::string& s) {
  if (s == "alternate") return Schedule::kAlternate;
  if (s == "push_only") return Schedule::kPushOnly;
  if (s == "pull_only") return Schedule::kPullOnly;
  if (s == "push_then_pull") return Schedule::kPushThenPull;
  if (s == "pull_then_push") return Schedule::kPullThenPush;
  throw ConfigError("unknown editing schedule '" + s + "'");
}

std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::kAlternate: return "alternate";
    case Schedule::kPushOnly: return "push_only";
    case Schedule::kPullOnly: return "pull_only";
    case Schedule::kPushThenPull: return "push_then_pull";
    case Schedule::kPullThenPush: return "pull_then_push";
  }
  return "alternate";
}

KlDirection parse_kl_direction(const std::string& s) {
  if (s == "target_to_student") return KlDirection::kTargetToStudent;
  if (s == "student_to_target") return KlDirection::kStudentToTarget;
  throw ConfigError("unknown KL direction '" + s + "'");
}

std::string to_string(KlDirection d) {
  return d == KlDirection::kTargetToStudent ? "target_to_student" : "student_to_target";
}

void PTEConfig::validate() const {
  if (epochs < 1) throw DomainError("editing epochs must be >= 1");
  if (!(eta_push >= 0.0) || !(eta_pull >= 0.0)) throw DomainError("editing learning rates must be non-negative");
  if (!(temperature > 0.0)) throw DomainError("distillation temperature must be positive");
  if (batch_size < 1) throw DomainError("editing batch size must be positive");
}

// ---- trace ------------------------------------------------------------------

void EditTrace::write_csv(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write trace " + file.string());
  out << "epoch,branch,loss,forget_acc,retain_acc\n" << std::setprecision(10);
  for (const auto& r : records) {
    out << r.epoch << ',' << (r.branch == Branch::kPush ? "push" : "pull") << ',' << r.loss << ',';
    if (r.forget_acc) out << *r.forget_acc;
    out << ',';
    if (r.retain_acc) out << *r.retain_acc;
    out << '\n';
  }
}

EditTrace EditTrace::read_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open trace " + file.string());
  EditTrace t;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    while (f.size() < 5) f.emplace_back();
    Record r;
    r.epoch = std::stoi(f[0]);
    r.branch = f[1] == "push" ? Branch::kPush : Branch::kPull;
    r.loss = std::stod(f[2]);
    if (!f[3].empty()) r.forget_acc = std::stod(f[3]);
    if (!f[4].empty()) r.retain_acc = std::stod(f[4]);
    t.records.push_back(r);
  }
  return t;
}

// ---- targets and losses -------------------------------------------------------

Matrix build_pull_target(const Classifier& teacher, const Matrix& x, std::span<const int> masked,
                         double temperature) {
  if (!teacher.frozen()) throw ContractViolation("pull targets must come from a frozen teacher");
  for (int u : masked)
    if (u < 0 || u >= teacher.class_count()) throw DomainError("forget class out of range");
  const Matrix z = teacher.logits(x);
  Matrix p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    p.row(i) = masked_target(z.row(i).transpose(), masked, temperature).transpose();
  return p;
}

PullLoss pull_loss(const Matrix& student_logits, const Matrix& target, double temperature,
                   KlDirection direction) {
  if (!(temperature > 0.0)) throw DomainError("distillation temperature must be positive");
  if (student_logits.rows() != target.rows() || student_logits.cols() != target.cols())
    throw DomainError("student logits and targets differ in shape");
  const Eigen::Index b = student_logits.rows();
  if (b == 0) throw DomainError("empty pull batch");
  const double t = temperature;
  const double log_floor = std::log(kProbFloor);

  PullLoss out;
  out.grad_logits.resize(b, student_logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const RowVector s = student_logits.row(i) / t;
    const RowVector log_q = s.array() - log_sum_exp(s);
    const RowVector q = log_q.array().exp();
    const RowVector& p = target.row(i);
    double kl = 0.0;
    RowVector g(s.size());
    if (direction == KlDirection::kTargetToStudent) {
      // KL(p || q) = sum p (log p - log max(q, floor))
      double unclamped_mass = 0.0;
      for (Eigen::Index k = 0; k < s.size(); ++k) {
        if (p(k) <= 0.0) continue;
        const bool clamped = log_q(k) < log_floor;
        kl += p(k) * (std::log(p(k)) - (clamped ? log_floor : log_q(k)));
        if (!clamped) unclamped_mass += p(k);
      }
      for (Eigen::Index k = 0; k < s.size(); ++k) {
        const bool active = p(k) > 0.0 && log_q(k) >= log_floor;
        g(k) = unclamped_mass * q(k) - (active ? p(k) : 0.0);
      }
      g /= t;
    } else {
      // KL(q || p) = sum q (log q - log max(p, floor))
      RowVector a(s.size());
      for (Eigen::Index k = 0; k < s.size(); ++k)
        a(k) = log_q(k) - std::log(std::max(p(k), kProbFloor));
      kl = (q.array() * a.array()).sum();
      const double mean_a = kl;
      g = (q.array() * (a.array() - mean_a)) / t;
    }
    if (!std::isfinite(kl)) {
      std::ostringstream os;
      os << "non-finite pull KL at sample " << i;
      throw NumericalError(os.str());
    }
    total += kl;
    out.grad_logits.row(i) = g * (t * t / static_cast<double>(b));
  }
  out.loss = t * t * total / static_cast<double>(b);
  return out;
}

double push_step(Classifier& model, const Matrix& x_probe, std::span<const int> y_edit,
                 double eta_push) {
  if (x_probe.rows() == 0) throw DomainError("empty push batch");
  auto lg = cross_entropy_gradients(model, x_probe, y_edit);
  if (!std::isfinite(lg.loss)) throw NumericalError("non-finite push loss");
  sgd_step(model, lg.grads, eta_push);
  return lg.loss;
}

double pull_step(Classifier& model, const Matrix& x, const Classifier& teacher,
                 std::span<const int> masked, const PTEConfig& cfg) {
  if (x.rows() == 0) throw DomainError("empty pull batch");
  const Matrix target = build_pull_target(teacher, x, masked, cfg.temperature);
  Tape tape;
  const Matrix z = model.network().forward(x, tape);
  const PullLoss pl = pull_loss(z, target, cfg.temperature, cfg.kl_direction);
  Gradients g = model.network().zero_gradients();
  model.network().backward(tape, pl.grad_logits, &g);
  sgd_step(model, g, cfg.eta_pull);
  return pl.loss;
}

// ---- full run ------------------------------------------------------------------

namespace {

struct AccessMarkers {
  AccessMarkers() { AccessLog::instance().mark(kUnlearnStart); }
  ~AccessMarkers() { AccessLog::instance().mark(kUnlearnEnd); }
  AccessMarkers(const AccessMarkers&) = delete;
  AccessMarkers& operator=(const AccessMarkers&) = delete;
};

enum class Phase { kBoth, kPush, kPull };

Phase phase_for(Schedule s, int epoch, int epochs) {
  const int split = (epochs + 1) / 2;
  switch (s) {
    case Schedule::kAlternate: return Phase::kBoth;
    case Schedule::kPushOnly: return Phase::kPush;
    case Schedule::kPullOnly: return Phase::kPull;
    case Schedule::kPushThenPull: return epoch < split ? Phase::kPush : Phase::kPull;
    case Schedule::kPullThenPush: return epoch < split ? Phase::kPull : Phase::kPush;
  }
  return Phase::kBoth;
}

}  // namespace

UnlearnOutcome pte_unlearn(const Classifier& original, const LabeledDataset& forget_set,
                           const ProbeConfig& probe_cfg, const PTEConfig& cfg,
                           const EpochObserver& on_epoch) {
  cfg.validate();
  probe_cfg.validate();
  if (forget_set.empty()) throw DomainError("forget set is empty");
  AccessMarkers markers;

  const Classifier teacher = original.snapshot();
  const std::vector<int> forget_classes = distinct_labels(forget_set);

  UnlearnOutcome out{original, {}, synthesize_edit_instructions(teacher, forget_set, probe_cfg)};
  out.model.set_frozen(false);
  Classifier& student = out.model;
  const EditSet& edits = out.edits;
  const Matrix& xf = forget_set.inputs();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Phase phase = phase_for(cfg.schedule, epoch, cfg.epochs);
    const auto push_batches =
        edits.size() > 0 ? shuffled_batches(edits.size(), cfg.batch_size, derive_seed(cfg.seed, 2 * epoch))
                         : std::vector<std::vector<Eigen::Index>>{};
    const auto pull_batches = shuffled_batches(xf.rows(), cfg.batch_size, derive_seed(cfg.seed, 2 * epoch + 1));

    auto do_push = [&](const std::vector<Eigen::Index>& idx) {
      const Matrix xb = edits.x_probe(idx, Eigen::all);
      std::vector<int> yb;
      for (auto i : idx) yb.push_back(edits.y_edit[static_cast<std::size_t>(i)]);
      out.trace.records.push_back({epoch, Branch::kPush, push_step(student, xb, yb, cfg.eta_push), std::nullopt, std::nullopt});
    };
    auto do_pull = [&](const std::vector<Eigen::Index>& idx) {
      const Matrix xb = forget_set.gather(idx);
      out.trace.records.push_back(
          {epoch, Branch::kPull, pull_step(student, xb, teacher, forget_classes, cfg), std::nullopt,
           std::nullopt});
    };

    if (phase == Phase::kBoth) {
      const std::size_t steps = std::max(push_batches.size(), pull_batches.size());
      for (std::size_t s = 0; s < steps; ++s) {
        if (!push_batches.empty()) do_push(push_batches[s % push_batches.size()]);
        do_pull(pull_batches[s % pull_batches.size()]);
      }
    } else if (phase == Phase::kPush) {
      for (const auto& b : push_batches) do_push(b);
    } else {
      for (const auto& b : pull_batches) do_pull(b);
    }
    if (on_epoch) on_epoch(epoch, student);
  }
  if (teacher.checksum() != original.checksum())
    throw ContractViolation("teacher parameters changed during unlearning");
  out.trace.final_checksum = student.checksum();
  return out;
}

}  // namespace pte
