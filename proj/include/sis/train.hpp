#pragma once

#include "sis/image.hpp"
#include "sis/mlp.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

namespace sis {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 128;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> lr_decay_epochs{60, 120, 160};
  double lr_decay_factor = 5.0;
  std::uint64_t seed = 0;
  bool augment = false;

  void validate() const;
};

/// Step schedule: the base rate divided by decay_factor once per milestone
/// the zero-based epoch index has reached.
double learning_rate_at(const TrainConfig& config, int epoch);

/// Mean negative log-probability of the labels. Probabilities are clamped
/// away from zero, so this is a reporting helper, not a training objective.
double cross_entropy(const Matrix& probabilities, const IntVector& labels);

struct TrainResult {
  std::shared_ptr<MlpClassifier> model;
  double final_loss = 0.0;      // mean over the last epoch's minibatches
  double train_accuracy_pct = 0.0;
  int epochs_run = 0;
};

/// Deterministic minibatch SGD with Nesterov momentum. Weight decay applies
/// to weights only, never biases. Given identical data, architecture and
/// config the resulting parameters are bit-for-bit reproducible.
/// Throws NumericError if a minibatch loss leaves the finite domain.
TrainResult train(const ImageBatch& data, const MlpArchitecture& arch,
                  const TrainConfig& config, std::ostream* log = nullptr);

}  // namespace sis
