#include "pte/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "pte/errors.hpp"

namespace pte {
namespace {

Vector log_softmax_row(const RowVector& z) { return (z.array() - log_sum_exp(z)).transpose(); }

}  // namespace

double accuracy(const Classifier& model, const LabeledDataset& data) {
  if (data.empty()) throw DomainError("accuracy of an empty dataset");
  const auto pred = predict(model, data.inputs());
  const auto& y = data.labels();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(y.size());
}

PartitionAccuracy evaluate_partition(const Classifier& model, const ForgetPartition& p) {
  auto acc = [&](const LabeledDataset& d, const char* name) {
    if (d.empty()) throw DomainError(std::string("partition part ") + name + " is empty");
    return accuracy(model, d);
  };
  return {acc(p.forget_train, "D_f"), acc(p.retain_train, "D_r"), acc(p.forget_test, "D_ft"),
          acc(p.retain_test, "D_rt")};
}

double h_mean(double a, double b) {
  if (!(a >= 0.0 && a <= 100.0) || !(b >= 0.0 && b <= 100.0))
    throw DomainError("h_mean inputs must be percentages in [0, 100]");
  if (a + b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

double forget_test_drop(double original_acc_ft, double unlearned_acc_ft) {
  return std::max(0.0, original_acc_ft - unlearned_acc_ft);
}

MiaResult mia_from_losses(std::span<const double> member, std::span<const double> nonmember,
                          std::span<const double> target) {
  if (member.empty() || nonmember.empty()) throw DomainError("MIA needs member and non-member losses");
  if (target.empty()) throw DomainError("MIA needs target losses");

  MiaResult r;
  std::vector<double> cand(member.begin(), member.end());
  cand.insert(cand.end(), nonmember.begin(), nonmember.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  if (cand.size() == 1) {
    r.degenerate = true;
    return r;
  }

  std::vector<double> m(member.begin(), member.end()), nm(nonmember.begin(), nonmember.end());
  std::sort(m.begin(), m.end());
  std::sort(nm.begin(), nm.end());
  // predicting "nobody is a member" scores 0.5 and is the baseline
  double best_ba = 0.5;
  double best_tau = -std::numeric_limits<double>::infinity();
  std::size_t mi = 0, ni = 0;
  for (double tau : cand) {
    while (mi < m.size() && m[mi] <= tau) ++mi;
    while (ni < nm.size() && nm[ni] <= tau) ++ni;
    const double tpr = static_cast<double>(mi) / static_cast<double>(m.size());
    const double tnr = 1.0 - static_cast<double>(ni) / static_cast<double>(nm.size());
    const double ba = 0.5 * (tpr + tnr);
    if (ba > best_ba) {
      best_ba = ba;
      best_tau = tau;
    }
  }
  r.balanced_accuracy = best_ba;
  r.threshold = best_tau;
  auto frac_member = [&](std::span<const double> v) {
    const auto hits = std::count_if(v.begin(), v.end(), [&](double l) { return l <= best_tau; });
    return 100.0 * static_cast<double>(hits) / static_cast<double>(v.size());
  };
  r.score = frac_member(target);
  r.false_positive_rate = frac_member(nonmember);
  return r;
}

MiaResult mia_score(const Classifier& model, const ForgetPartition& p) {
  if (p.retain_train.empty() || p.retain_test.empty())
    throw DomainError("MIA calibration needs nonempty D_r and D_rt");
  if (p.forget_train.empty()) throw DomainError("MIA needs a nonempty D_f");
  auto losses = [&](const LabeledDataset& d) {
    const Vector v = cross_entropy_losses(model, d.inputs(), d.labels());
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  const auto member = losses(p.retain_train);
  const auto nonmember = losses(p.retain_test);
  const auto target = losses(p.forget_train);
  return mia_from_losses(member, nonmember, target);
}

double retain_kl_consistency(const Classifier& original, const Classifier& unlearned,
                             const LabeledDataset& data) {
  if (original.class_count() != unlearned.class_count())
    throw DomainError("models disagree on the class count");
  if (data.empty()) throw DomainError("KL consistency over an empty dataset");
  const Matrix za = original.logits(data.inputs());
  const Matrix zb = unlearned.logits(data.inputs());
  double total = 0.0;
  for (Eigen::Index i = 0; i < za.rows(); ++i) {
    const Vector la = log_softmax_row(za.row(i));
    const Vector lb = log_softmax_row(zb.row(i));
    total += std::max(0.0, (la.array().exp() * (la - lb).array()).sum());
  }
  return total / static_cast<double>(za.rows());
}

double forget_confidence_uniformity(const Classifier& model, const LabeledDataset& forget_set,
                                    std::span<const int> forget_classes) {
  if (forget_set.empty()) throw DomainError("forget set is empty");
  const int k = model.class_count();
  const std::set<int> fc(forget_classes.begin(), forget_classes.end());
  const int retained = k - static_cast<int>(fc.size());
  if (retained < 1) throw DomainError("no retained class");
  const Matrix z = model.logits(forget_set.inputs());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    sum += masked_target(z.row(i).transpose(), forget_classes, 1.0).maxCoeff();
  return std::abs(sum / static_cast<double>(z.rows()) - 1.0 / retained);
}

// ---- reports ---------------------------------------------------------------

std::string EvaluationReport::serialize() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "method=" << method << "\n"
     << "seed=" << seed << "\n"
     << "config_hash=" << config_hash << "\n"
     << "acc_f=" << acc_f << "\n"
     << "acc_r=" << acc_r << "\n"
     << "acc_ft=" << acc_ft << "\n"
     << "acc_rt=" << acc_rt << "\n"
     << "drop_ft=" << drop_ft << "\n"
     << "h_mean=" << h_mean << "\n"
     << "mia=" << mia << "\n"
     << "mia_variant=" << kMiaVariant << "\n"
     << "mia_degenerate=" << (mia_degenerate ? 1 : 0) << "\n"
     << "retain_kl=" << retain_kl << "\n"
     << "forget_conf_gap=" << forget_conf_gap << "\n"
     << "uses_retain_data=" << (uses_retain_data ? 1 : 0) << "\n";
  return os.str();
}

EvaluationReport EvaluationReport::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(std::string("report is missing '") + key + "'");
    return it->second;
  };
  EvaluationReport r;
  r.method = get("method");
  r.seed = std::stoull(get("seed"));
  r.config_hash = get("config_hash");
  r.acc_f = std::stod(get("acc_f"));
  r.acc_r = std::stod(get("acc_r"));
  r.acc_ft = std::stod(get("acc_ft"));
  r.acc_rt = std::stod(get("acc_rt"));
  r.drop_ft = std::stod(get("drop_ft"));
  r.h_mean = std::stod(get("h_mean"));
  r.mia = std::stod(get("mia"));
  r.mia_degenerate = get("mia_degenerate") == "1";
  r.retain_kl = std::stod(get("retain_kl"));
  r.forget_conf_gap = std::stod(get("forget_conf_gap"));
  r.uses_retain_data = get("uses_retain_data") == "1";
  return r;
}

void EvaluationReport::write(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write report " + file.string());
  out << serialize();
}

EvaluationReport EvaluationReport::read(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open report " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

EvaluationReport evaluate_unlearning(const Classifier& original, const Classifier& unlearned,
                                     const ForgetPartition& partition, const std::string& method,
                                     std::uint64_t seed, const std::string& config_hash) {
  EvaluationReport r;
  r.method = method;
  r.seed = seed;
  r.config_hash = config_hash;
  const auto acc = evaluate_partition(unlearned, partition);
  r.acc_f = acc.acc_f;
  r.acc_r = acc.acc_r;
  r.acc_ft = acc.acc_ft;
  r.acc_rt = acc.acc_rt;
  r.drop_ft = forget_test_drop(accuracy(original, partition.forget_test), acc.acc_ft);
  r.h_mean = h_mean(r.acc_rt, r.drop_ft);
  const auto mia = mia_score(unlearned, partition);
  r.mia = mia.score;
  r.mia_degenerate = mia.degenerate;
  r.retain_kl = retain_kl_consistency(original, unlearned, partition.retain_test);
  r.forget_conf_gap = forget_confidence_uniformity(unlearned, partition.forget_train,
                                                   partition.forget_classes);
  return r;
}

double metric_value(const EvaluationReport& r, const std::string& metric) {
  if (metric == "acc_f") return r.acc_f;
  if (metric == "acc_r") return r.acc_r;
  if (metric == "acc_ft") return r.acc_ft;
  if (metric == "acc_rt") return r.acc_rt;
  if (metric == "drop_ft") return r.drop_ft;
  if (metric == "h_mean") return r.h_mean;
  if (metric == "mia") return r.mia;
  if (metric == "retain_kl") return r.retain_kl;
  if (metric == "forget_conf_gap") return r.forget_conf_gap;
  throw ConfigError("unknown metric '" + metric + "'");
}

std::map<std::string, MetricSummary> summarize(const std::vector<EvaluationReport>& reports) {
  std::map<std::string, MetricSummary> out;
  for (const auto& m : kReportMetrics) {
    MetricSummary s;
    s.n = reports.size();
    if (s.n == 0) {
      out[m] = s;
      continue;
    }
    for (const auto& r : reports) s.mean += metric_value(r, m);
    s.mean /= static_cast<double>(s.n);
    if (s.n >= 2) {
      double ss = 0.0;
      for (const auto& r : reports) ss += std::pow(metric_value(r, m) - s.mean, 2);
      s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    out[m] = s;
  }
  return out;
}

}  // namespace pte
