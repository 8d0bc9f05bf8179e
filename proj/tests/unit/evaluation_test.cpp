#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pte/baselines.hpp"
#include "pte/errors.hpp"
#include "pte/evaluation.hpp"
#include "support.hpp"

namespace pte {
namespace {

using testing::linear_model;
using testing::random_matrix;
using testing::TempDir;
using testing::trained_blobs;

TEST(Accuracy, CountsCorrectArgmax) {
  Matrix w(3, 2);
  w << 1, 0, 0, 1, -1, -1;
  const Classifier m = linear_model(w, RowVector::Zero(3));
  Matrix x(3, 2);
  x << 5, 0, 0, 5, -5, -5;
  EXPECT_EQ(accuracy(m, LabeledDataset({2}, x, {0, 1, 2}, 3, Split::kTest)), 100.0);

  // a constant predictor on a balanced set scores 100 / K
  const Classifier constant = linear_model(Matrix::Zero(4, 2), RowVector{{0, 0, 1, 0}});
  EXPECT_EQ(accuracy(constant, LabeledDataset({2}, Matrix::Zero(8, 2), {0, 1, 2, 3, 0, 1, 2, 3}, 4, Split::kTest)),
            25.0);
  EXPECT_THROW(accuracy(m, LabeledDataset{}), DomainError);
}

TEST(Accuracy, PermutationInvariant) {
  const auto& f = trained_blobs();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(f.test.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), std::mt19937_64(3));
  const LabeledDataset shuffled(f.test.shape(), f.test.gather(idx), f.test.gather_labels(idx), 6, Split::kTest);
  EXPECT_EQ(accuracy(f.model, shuffled), accuracy(f.model, f.test));
  EXPECT_GE(accuracy(f.model, f.test), 95.0);
}

TEST(EvaluatePartition, OriginalModelFitsBothSidesAndEmptyPartIsNamed) {
  const auto& f = trained_blobs();
  ForgetPartition p = partition_by_class(f.train, f.test, {0});
  const auto acc = evaluate_partition(f.model, p);
  EXPECT_NEAR(acc.acc_f, acc.acc_r, 5.0);
  p.forget_test = LabeledDataset{};
  try {
    evaluate_partition(f.model, p);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("D_ft"), std::string::npos);
  }
}

TEST(HMean, Values) {
  EXPECT_NEAR(h_mean(95.00, 96.50), 95.74, 0.01);
  EXPECT_EQ(h_mean(0.0, 0.0), 0.0);
  EXPECT_EQ(h_mean(73.0, 0.0), 0.0);
  EXPECT_THROW(h_mean(101.0, 5.0), DomainError);
  EXPECT_THROW(h_mean(-1.0, 5.0), DomainError);
  EXPECT_EQ(forget_test_drop(90.0, 95.0), 0.0);
  EXPECT_EQ(forget_test_drop(90.0, 10.0), 80.0);
}

TEST(HMean, SymmetricAndBounded) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pct(0.0, 100.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double a = pct(rng), b = pct(rng);
    EXPECT_NEAR(h_mean(a, a), a, 1e-12);
    EXPECT_EQ(h_mean(a, b), h_mean(b, a));
    EXPECT_LE(h_mean(a, b), (a + b) / 2 + 1e-12);
    EXPECT_LE(h_mean(a, b), std::max(a, b) + 1e-12);
  }
}

TEST(Mia, InvariantUnderMonotoneLossTransforms) {
  std::mt19937_64 rng(23);
  std::exponential_distribution<double> member_loss(8.0), other_loss(1.5);
  std::vector<double> member(300), nonmember(200), target(100);
  for (auto& v : member) v = member_loss(rng);
  for (auto& v : nonmember) v = other_loss(rng);
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = i % 2 ? member_loss(rng) : other_loss(rng);
  const MiaResult base = mia_from_losses(member, nonmember, target);
  EXPECT_GT(base.balanced_accuracy, 0.5);

  const std::vector<double (*)(double)> transforms = {
      [](double l) { return std::exp(l); }, [](double l) { return 3.0 * l + 7.0; },
      [](double l) { return std::log1p(l); }, [](double l) { return l * l * l; },
      [](double l) { return std::sqrt(l); }};
  for (auto f : transforms) {
    auto apply = [&](std::vector<double> v) {
      for (auto& x : v) x = f(x);
      return v;
    };
    const MiaResult r = mia_from_losses(apply(member), apply(nonmember), apply(target));
    EXPECT_EQ(r.score, base.score);
    EXPECT_EQ(r.balanced_accuracy, base.balanced_accuracy);
    EXPECT_EQ(r.false_positive_rate, base.false_positive_rate);
  }
}

TEST(Mia, DegenerateCalibrationReportsFifty) {
  const std::vector<double> same(5, 0.3);
  const MiaResult r = mia_from_losses(same, same, std::vector<double>{0.1, 0.9});
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.score, 50.0);
}

TEST(Mia, AttackOnMembersBeatsChance) {
  const std::vector<double> member{0.1, 0.2, 0.15, 0.05}, nonmember{0.9, 1.2, 0.3, 2.0};
  const MiaResult r = mia_from_losses(member, nonmember, member);
  EXPECT_GE(r.balanced_accuracy, 0.5);
  EXPECT_EQ(r.score, 100.0);
}

TEST(Mia, OriginalScoresHighAndRetrainScoresNearFalsePositives) {
  const auto& f = trained_blobs();
  const ForgetPartition p = partition_by_class(f.train, f.test, {0});
  EXPECT_GE(mia_score(f.model, p).score, 50.0);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.learning_rate = 0.05;
  const std::vector<int> fc{0};
  const Classifier oracle = retrain(Architecture::parse("mlp(2,64,64)"), 6, p.retain_train, fc, cfg, 0);
  const MiaResult r = mia_score(oracle, p);
  EXPECT_LE(r.score, r.false_positive_rate + 5.0);
}

TEST(RetainKl, ZeroForIdenticalModelsAndPositiveOtherwise) {
  const auto& f = trained_blobs();
  EXPECT_EQ(retain_kl_consistency(f.model, f.model, f.test), 0.0);
  EXPECT_EQ(retain_kl_consistency(f.model, f.model.snapshot(), f.test), 0.0);
  const Classifier other = build_reference_model(Architecture::parse("mlp(2,64,64)"), 6, 99);
  EXPECT_GT(retain_kl_consistency(f.model, other, f.test), 0.0);
  const Classifier seven = build_reference_model(Architecture::parse("mlp(2,8)"), 7, 0);
  EXPECT_THROW(retain_kl_consistency(f.model, seven, f.test), DomainError);
}

TEST(ForgetConfidence, UniformAndConcentratedModels) {
  const LabeledDataset forget({2}, Matrix::Ones(4, 2), {0, 0, 0, 0}, 10, Split::kTrain, "forget_train");
  const std::vector<int> fc{0};
  const Classifier uniform = linear_model(Matrix::Zero(10, 2), RowVector::Zero(10));
  EXPECT_NEAR(forget_confidence_uniformity(uniform, forget, fc), 0.0, 1e-12);
  RowVector b = RowVector::Zero(10);
  b(3) = 60.0;
  const Classifier peaked = linear_model(Matrix::Zero(10, 2), b);
  EXPECT_NEAR(forget_confidence_uniformity(peaked, forget, fc), 1.0 - 1.0 / 9.0, 1e-9);
}

TEST(Report, SerializationRoundTrips) {
  EvaluationReport r;
  r.method = "pte";
  r.seed = 4;
  r.config_hash = "00ff";
  r.acc_f = 1.25;
  r.acc_rt = 97.5;
  r.h_mean = 95.1234567891;
  r.mia = 3.0;
  r.retain_kl = 0.0123;
  r.uses_retain_data = true;
  const EvaluationReport back = EvaluationReport::parse(r.serialize());
  EXPECT_EQ(back.serialize(), r.serialize());
  EXPECT_NE(r.serialize().find("mia_variant=loss_threshold"), std::string::npos);
  EXPECT_THROW(EvaluationReport::parse("method=x\n"), DataError);
}

TEST(Report, SummaryUsesSampleStd) {
  EvaluationReport a, b, c;
  a.acc_rt = 90;
  b.acc_rt = 92;
  c.acc_rt = 94;
  const auto s = summarize({a, b, c});
  EXPECT_EQ(s.at("acc_rt").n, 3u);
  EXPECT_DOUBLE_EQ(s.at("acc_rt").mean, 92.0);
  EXPECT_DOUBLE_EQ(s.at("acc_rt").std, 2.0);
  EXPECT_EQ(summarize({a}).at("acc_rt").std, 0.0);
}

}  // namespace
}  // namespace pte
