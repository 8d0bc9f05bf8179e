#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "pte/access_log.hpp"
#include "pte/editing.hpp"
#include "pte/errors.hpp"
#include "pte/evaluation.hpp"
#include "pte/math.hpp"
#include "support.hpp"

namespace pte {
namespace {

using testing::linear_model;
using testing::random_matrix;
using testing::TempDir;
using testing::trained_blobs;

Matrix finite_difference_logit_grad(const Matrix& z, const Matrix& target, double t, KlDirection dir,
                                    double h = 1e-6) {
  Matrix g(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      Matrix zp = z, zm = z;
      zp(i, j) += h;
      zm(i, j) -= h;
      g(i, j) = (pull_loss(zp, target, t, dir).loss - pull_loss(zm, target, t, dir).loss) / (2 * h);
    }
  return g;
}

ProbeConfig blob_probe() {
  ProbeConfig cfg;
  cfg.epsilon = 2.5;
  cfg.step_size = 1e6;
  return cfg;
}

PTEConfig blob_edit() {
  PTEConfig cfg;
  cfg.eta_push = 0.6;
  cfg.eta_pull = 4e-5;
  cfg.epochs = 5;
  return cfg;
}

TEST(MaskedTarget, HandExamples) {
  const std::vector<int> u{0};
  const Vector a = masked_target(Vector::Ones(3), u, 1.0);
  EXPECT_EQ(a(0), 0.0);
  EXPECT_NEAR(a(1), 0.5, 1e-12);
  EXPECT_NEAR(a(2), 0.5, 1e-12);

  const Vector logits = Vector{{0.5, 0.3, 0.2}}.array().log();
  const Vector b = masked_target(logits, u, 1.0);
  EXPECT_EQ(b(0), 0.0);
  EXPECT_NEAR(b(1), 0.6, 1e-12);
  EXPECT_NEAR(b(2), 0.4, 1e-12);
}

TEST(MaskedTarget, RejectsBadArguments) {
  const std::vector<int> out_of_range{3};
  EXPECT_THROW(masked_target(Vector::Ones(3), out_of_range, 1.0), DomainError);
  const std::vector<int> all{0, 1, 2};
  EXPECT_THROW(masked_target(Vector::Ones(3), all, 1.0), DomainError);
  const std::vector<int> u{0};
  EXPECT_THROW(masked_target(Vector::Ones(3), u, 0.0), DomainError);
}

TEST(MaskedTarget, DegenerateMassFallsBackToUniform) {
  const std::vector<int> u{0};
  const Vector p = masked_target(Vector{{1000.0, 0.0, 1.0, 0.5}}, u, 1.0);
  EXPECT_EQ(p(0), 0.0);
  for (int k = 1; k < 4; ++k) EXPECT_NEAR(p(k), 1.0 / 3.0, 1e-12);
}

TEST(MaskedTarget, SimplexAndRatiosOnRandomLogits) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = std::vector<int>{3, 10, 100}[static_cast<std::size_t>(trial % 3)];
    const double t = trial % 2 ? 4.0 : 1.0;
    const Vector z = random_matrix(k, 1, rng, 3.0);
    const std::vector<int> u{static_cast<int>(rng() % static_cast<unsigned>(k))};
    const Vector p = masked_target(z, u, t);
    const Vector full = softmax_temperature(z, t);
    EXPECT_EQ(p(u[0]), 0.0);
    EXPECT_LE(std::abs(p.sum() - 1.0), 1e-6);
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < std::min(k, a + 4); ++b) {
        if (a == u[0] || b == u[0]) continue;
        EXPECT_NEAR((p(a) / p(b)) / (full(a) / full(b)), 1.0, 1e-6);
      }
  }
}

TEST(BuildPullTarget, MasksEveryForgetClass) {
  const auto& f = trained_blobs();
  const Classifier teacher = f.model.snapshot();
  const std::vector<int> masked{0, 3};
  const Matrix p = build_pull_target(teacher, f.test.inputs().topRows(10), masked, 4.0);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    EXPECT_EQ(p(i, 0), 0.0);
    EXPECT_EQ(p(i, 3), 0.0);
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
  }
  EXPECT_THROW(build_pull_target(f.model, f.test.inputs().topRows(1), masked, 4.0), ContractViolation);
  const std::vector<int> bad{6};
  EXPECT_THROW(build_pull_target(teacher, f.test.inputs().topRows(1), bad, 4.0), DomainError);
}

TEST(PullLoss, HandComputedKl) {
  const Matrix target = Matrix{{0.0, 0.6, 0.4}};
  const PullLoss pl = pull_loss(Matrix::Zero(1, 3), target, 1.0);
  EXPECT_NEAR(pl.loss, 0.6 * std::log(0.6 * 3) + 0.4 * std::log(0.4 * 3), 1e-12);
  EXPECT_NEAR(pl.loss, 0.4259, 1e-3);
}

TEST(PullLoss, ZeroAtFixedPoint) {
  std::mt19937_64 rng(8);
  for (double t : {1.0, 2.0, 4.0}) {
    Vector p = softmax_temperature(Vector(random_matrix(5, 1, rng)), 1.0);
    // student logits t * log p reproduce p after dividing by t
    const Matrix z = (t * p.array().log()).matrix().transpose();
    const PullLoss pl = pull_loss(z, p.transpose(), t);
    EXPECT_NEAR(pl.loss, 0.0, 1e-12);
    EXPECT_LE(pl.grad_logits.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PullLoss, NonNegativeOnRandomBatches) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix z = random_matrix(4, 6, rng, 4.0);
    Matrix target(4, 6);
    for (int i = 0; i < 4; ++i)
      target.row(i) = masked_target(Vector(random_matrix(6, 1, rng)), std::vector<int>{trial % 6}, 2.0).transpose();
    EXPECT_GE(pull_loss(z, target, 2.0).loss, 0.0);
    EXPECT_GE(pull_loss(z, target, 2.0, KlDirection::kStudentToTarget).loss, 0.0);
  }
}

TEST(PullLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 3 + trial % 5;
    const double t = std::vector<double>{1.0, 2.0, 4.0}[static_cast<std::size_t>(trial % 3)];
    const Matrix z = random_matrix(3, k, rng, 2.0);
    Matrix target(3, k);
    for (int i = 0; i < 3; ++i)
      target.row(i) = masked_target(Vector(random_matrix(k, 1, rng, 2.0)), std::vector<int>{trial % k}, t).transpose();
    for (auto dir : {KlDirection::kTargetToStudent}) {
      const Matrix an = pull_loss(z, target, t, dir).grad_logits;
      const Matrix fd = finite_difference_logit_grad(z, target, t, dir);
      EXPECT_LE((an - fd).norm() / std::max(an.norm(), 1e-8), 1e-4) << "trial " << trial;
    }
  }
}

TEST(PullLoss, ReversedDirectionGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = random_matrix(2, 4, rng);
    // the reversed form needs a target with full support
    Matrix target(2, 4);
    for (int i = 0; i < 2; ++i) target.row(i) = softmax_temperature(Vector(random_matrix(4, 1, rng)), 1.0).transpose();
    const Matrix an = pull_loss(z, target, 2.0, KlDirection::kStudentToTarget).grad_logits;
    const Matrix fd = finite_difference_logit_grad(z, target, 2.0, KlDirection::kStudentToTarget);
    EXPECT_LE((an - fd).norm() / std::max(an.norm(), 1e-8), 1e-4) << "trial " << trial;
  }
}

TEST(PullLoss, TemperatureFactorOffsetsSoftening) {
  // fixed teacher and student logits; the target is rebuilt at each temperature
  const Vector teacher{{1.2, 0.4, -0.3, 0.8, 0.0}};
  const Matrix student = Matrix{{0.2, 1.0, 0.1, -0.4, 0.6}};
  const std::vector<int> u{0};
  auto grad_norm = [&](double t) {
    const Matrix target = masked_target(teacher, u, t).transpose();
    return pull_loss(student, target, t).grad_logits.norm();
  };
  const double g1 = grad_norm(1.0);
  for (double t : {2.0, 4.0}) {
    const double ratio = grad_norm(t) / g1;
    EXPECT_GE(ratio, 0.5) << "T=" << t;
    EXPECT_LE(ratio, t) << "T=" << t;
    // without the T^2 factor the gradient would shrink roughly like 1/T^2
    EXPECT_GT(ratio, 2.0 / (t * t)) << "T=" << t;
  }
}

TEST(PullLoss, NonFiniteTargetReportsSample) {
  Matrix target = Matrix{{0.0, 0.5, 0.5}, {0.0, std::nan(""), 0.5}};
  try {
    pull_loss(Matrix::Zero(2, 3), target, 1.0);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("sample 1"), std::string::npos);
  }
}

TEST(PushStep, ZeroRateAndConfidentModelLeaveParameters) {
  const auto& f = trained_blobs();
  Classifier m = f.model;
  const auto before = m.checksum();
  const Matrix x = f.test.inputs().topRows(8);
  const std::vector<int> y = predict(m, x);
  push_step(m, x, y, 0.0);
  EXPECT_EQ(m.checksum(), before);

  // a linear model that is already certain: loss ~ 0 and the step barely moves it
  Classifier sure = linear_model(Matrix::Zero(2, 2), RowVector{{60.0, 0.0}});
  const double loss = push_step(sure, Matrix::Zero(3, 2), std::vector<int>{0, 0, 0}, 1.0);
  EXPECT_LT(loss, 1e-20);
  EXPECT_LT(std::abs(sure.network().parameters()[1]->coeff(0, 0) - 60.0), 1e-20);
}

TEST(PushStep, EmptyBatchIsDomainError) {
  Classifier m = linear_model(Matrix::Zero(2, 2), RowVector::Zero(2));
  EXPECT_THROW(push_step(m, Matrix(0, 2), std::vector<int>{}, 0.1), DomainError);
}

TEST(PullStep, LowersPullLossForSmallRate) {
  const auto& f = trained_blobs();
  const Classifier teacher = f.model.snapshot();
  Classifier student = f.model;
  const LabeledDataset forget = f.train.filter_labels([](int y) { return y == 0; }, "forget_train");
  const std::vector<int> u{0};
  PTEConfig cfg;
  cfg.eta_pull = 1e-3;
  const double first = pull_step(student, forget.inputs(), teacher, u, cfg);
  const double second = pull_step(student, forget.inputs(), teacher, u, cfg);
  EXPECT_LT(second, first);
}

TEST(PteUnlearn, AlternateScheduleInterleavesBranches) {
  const auto& f = trained_blobs();
  const LabeledDataset forget = f.train.filter_labels([](int y) { return y == 0; }, "forget_train");
  const UnlearnOutcome out = pte_unlearn(f.model, forget, blob_probe(), blob_edit());
  ASSERT_FALSE(out.trace.records.empty());
  for (std::size_t i = 0; i < out.trace.records.size(); ++i)
    EXPECT_EQ(out.trace.records[i].branch, i % 2 == 0 ? Branch::kPush : Branch::kPull) << i;
  EXPECT_EQ(out.trace.final_checksum, out.model.checksum());
  EXPECT_FALSE(out.model.frozen());
}

TEST(PteUnlearn, SchedulesUseTheRightBranches) {
  const auto& f = trained_blobs();
  const LabeledDataset forget = f.train.filter_labels([](int y) { return y == 0; }, "forget_train");
  PTEConfig cfg = blob_edit();
  cfg.epochs = 4;
  auto branches_by_epoch = [&](Schedule s) {
    cfg.schedule = s;
    std::vector<std::set<Branch>> seen(4);
    for (const auto& r : pte_unlearn(f.model, forget, blob_probe(), cfg).trace.records)
      seen[static_cast<std::size_t>(r.epoch)].insert(r.branch);
    return seen;
  };
  for (const auto& s : branches_by_epoch(Schedule::kPushOnly)) EXPECT_EQ(s, std::set<Branch>{Branch::kPush});
  for (const auto& s : branches_by_epoch(Schedule::kPullOnly)) EXPECT_EQ(s, std::set<Branch>{Branch::kPull});
  const auto ptp = branches_by_epoch(Schedule::kPushThenPull);
  EXPECT_EQ(ptp[0], std::set<Branch>{Branch::kPush});
  EXPECT_EQ(ptp[3], std::set<Branch>{Branch::kPull});
  const auto plp = branches_by_epoch(Schedule::kPullThenPush);
  EXPECT_EQ(plp[1], std::set<Branch>{Branch::kPull});
  EXPECT_EQ(plp[2], std::set<Branch>{Branch::kPush});
}

TEST(PteUnlearn, DeterministicAndTeacherUnchanged) {
  const auto& f = trained_blobs();
  const auto before = f.model.checksum();
  const LabeledDataset forget = f.train.filter_labels([](int y) { return y == 0; }, "forget_train");
  const auto a = pte_unlearn(f.model, forget, blob_probe(), blob_edit());
  const auto b = pte_unlearn(f.model, forget, blob_probe(), blob_edit());
  EXPECT_EQ(a.model.checksum(), b.model.checksum());
  EXPECT_EQ(f.model.checksum(), before);
}

TEST(PteUnlearn, ErasesTheForgetClassOnBlobs) {
  const auto& f = trained_blobs();
  const ForgetPartition part = partition_by_class(f.train, f.test, {0});
  std::vector<double> forget_acc;
  PTEConfig cfg = blob_edit();
  cfg.epochs = 20;
  const auto out = pte_unlearn(f.model, part.forget_train, blob_probe(), cfg,
                               [&](int, const Classifier& m) { forget_acc.push_back(accuracy(m, part.forget_train)); });
  ASSERT_EQ(forget_acc.size(), 20u);
  EXPECT_LE(forget_acc.back(), forget_acc.front());
  EXPECT_LE(accuracy(out.model, part.forget_test), 2.0);
}

TEST(PteUnlearn, ReadsNoRetainData) {
  const auto& f = trained_blobs();
  const ForgetPartition part = partition_by_class(f.train, f.test, {0});
  auto& log = AccessLog::instance();
  const std::size_t from = log.size();
  pte_unlearn(f.model, part.forget_train, blob_probe(), blob_edit());
  EXPECT_TRUE(log.reads_between(kUnlearnStart, kUnlearnEnd, {kForgetTrainTag}, from).empty());
  // the audit itself catches a stray read
  log.mark(kUnlearnStart);
  (void)part.retain_train.inputs();
  log.mark(kUnlearnEnd);
  EXPECT_EQ(log.reads_between(kUnlearnStart, kUnlearnEnd, {kForgetTrainTag}, from).size(), 1u);
}

TEST(PteUnlearn, RejectsBadConfig) {
  const auto& f = trained_blobs();
  const LabeledDataset forget = f.train.filter_labels([](int y) { return y == 0; }, "forget_train");
  PTEConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(pte_unlearn(f.model, forget, blob_probe(), cfg), DomainError);
  cfg = {};
  cfg.temperature = 0;
  EXPECT_THROW(pte_unlearn(f.model, forget, blob_probe(), cfg), DomainError);
  EXPECT_THROW(parse_schedule("pull_push_pull"), ConfigError);
  EXPECT_EQ(parse_schedule("push_then_pull"), Schedule::kPushThenPull);
  EXPECT_EQ(to_string(parse_kl_direction("student_to_target")), "student_to_target");
}

TEST(EditTrace, CsvRoundTrip) {
  EditTrace t;
  t.records = {{0, Branch::kPush, 1.5, std::nullopt, std::nullopt}, {0, Branch::kPull, 0.25, 12.5, 97.25}};
  TempDir dir("trace");
  t.write_csv(dir / "trace.csv");
  const EditTrace back = EditTrace::read_csv(dir / "trace.csv");
  ASSERT_EQ(back.records.size(), 2u);
  EXPECT_EQ(back.records[0].branch, Branch::kPush);
  EXPECT_FALSE(back.records[0].forget_acc.has_value());
  EXPECT_EQ(back.records[1].loss, 0.25);
  EXPECT_EQ(*back.records[1].forget_acc, 12.5);
  EXPECT_EQ(*back.records[1].retain_acc, 97.25);
}

}  // namespace
}  // namespace pte
