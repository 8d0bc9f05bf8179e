#include "pte/training.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "pte/errors.hpp"
#include "pte/rng.hpp"

namespace pte {

void TrainConfig::validate() const {
  if (epochs < 0) throw DomainError("train epochs must be non-negative");
  if (!(learning_rate >= 0.0)) throw DomainError("train learning rate must be non-negative");
  if (batch_size < 1) throw DomainError("train batch size must be positive");
  if (!(weight_decay >= 0.0)) throw DomainError("weight decay must be non-negative");
}

std::string TrainConfig::canonical() const {
  std::ostringstream os;
  os << std::setprecision(17) << "epochs=" << epochs << ";lr=" << learning_rate
     << ";batch=" << batch_size << ";wd=" << weight_decay << ";seed=" << seed;
  return os.str();
}

std::string TrainConfig::hash() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(canonical());
  return os.str();
}

double training_objective(const Classifier& model, const LabeledDataset& data, double weight_decay,
                          double* ce_out) {
  const Vector losses = cross_entropy_losses(model, data.inputs(), data.labels());
  const double ce = losses.mean();
  if (ce_out) *ce_out = ce;
  return ce + weight_decay * squared_norm(model);
}

Classifier train_supervised(Classifier model, const LabeledDataset& data, const TrainConfig& cfg,
                            TrainHistory* history) {
  cfg.validate();
  if (model.frozen()) throw ContractViolation("cannot train a frozen classifier");
  if (data.empty()) throw DataError("training set is empty");
  if (data.sample_size() != model.network().input_size())
    throw DataError("dataset sample shape does not match the model input");
  for (int y : data.labels())
    if (y < 0 || y >= model.class_count())
      throw DataError("training label " + std::to_string(y) + " outside the model's classes");

  if (history) {
    history->epoch_loss.clear();
    history->epoch_ce.clear();
    history->initial_loss = training_objective(model, data, cfg.weight_decay);
  }
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch :
         shuffled_batches(data.size(), cfg.batch_size, derive_seed(cfg.seed, epoch))) {
      const Matrix x = data.gather(batch);
      const std::vector<int> y = data.gather_labels(batch);
      auto lg = cross_entropy_gradients(model, x, y);
      if (!std::isfinite(lg.loss))
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
      sgd_step(model, lg.grads, cfg.learning_rate, cfg.weight_decay);
    }
    if (history) {
      double ce = 0.0;
      history->epoch_loss.push_back(training_objective(model, data, cfg.weight_decay, &ce));
      history->epoch_ce.push_back(ce);
    }
  }
  model.set_train_config_hash(cfg.hash());
  return model;
}

}  // namespace pte
