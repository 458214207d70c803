#include "sis/train.hpp"

#include "sis/augment.hpp"
#include "sis/math.hpp"
#include "sis/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace sis {

void TrainConfig::validate() const {
  require(epochs >= 1, "TrainConfig: epochs must be >= 1");
  require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  require(learning_rate > 0.0, "TrainConfig: learning_rate must be positive");
  require(momentum >= 0.0 && momentum < 1.0,
          "TrainConfig: momentum must be in [0, 1)");
  require(weight_decay >= 0.0, "TrainConfig: weight_decay must be >= 0");
  require(lr_decay_factor > 1.0, "TrainConfig: lr_decay_factor must be > 1");
  for (const int e : lr_decay_epochs)
    require(e >= 1, "TrainConfig: decay milestones must be >= 1");
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  double lr = config.learning_rate;
  for (const int milestone : config.lr_decay_epochs)
    if (epoch >= milestone) lr /= config.lr_decay_factor;
  return lr;
}

double cross_entropy(const Matrix& probabilities, const IntVector& labels) {
  require(probabilities.rows() == labels.size(),
          "cross_entropy: row/label count mismatch");
  require(labels.size() > 0, "cross_entropy: empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const int y = labels(i);
    require(y >= 0 && y < probabilities.cols(),
            "cross_entropy: label out of range");
    total += -std::log(std::max(probabilities(i, y), 1e-300));
  }
  return total / static_cast<double>(labels.size());
}

namespace {

struct ForwardCache {
  std::vector<Matrix> acts;  // acts[0] = input, acts[l+1] = post-activation
  Matrix logits;
};

ForwardCache forward(const MlpClassifier& model,
                     const Eigen::Ref<const Matrix>& inputs) {
  ForwardCache cache;
  cache.acts.push_back(inputs);
  const int layers = model.layer_count();
  for (int l = 0; l < layers; ++l) {
    Matrix pre = (cache.acts.back() * model.weight(l)).rowwise() +
                 model.bias(l).transpose();
    if (l + 1 == layers) {
      cache.logits = std::move(pre);
    } else if (model.architecture().activation == Activation::ReLU) {
      cache.acts.push_back(pre.cwiseMax(0.0));
    } else {
      cache.acts.push_back(pre.array().tanh().matrix());
    }
  }
  return cache;
}

// Mean-reduction cross-entropy from logits, numerically stable.
double batch_loss(const Matrix& logits, const IntVector& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double lse = logsumexp(logits.row(i));
    total += lse - logits(i, labels(i));
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

TrainResult train(const ImageBatch& data, const MlpArchitecture& arch,
                  const TrainConfig& config, std::ostream* log) {
  config.validate();
  arch.validate();
  require(data.space == ValueSpace::Normalized,
          "train: data must be normalized");
  require(data.shape == arch.input, "train: data shape " + data.shape.str() +
                                        " != architecture input " +
                                        arch.input.str());
  require(data.labeled(), "train: data must be labeled");
  require(data.size() >= 1, "train: empty dataset");
  for (int i = 0; i < data.size(); ++i)
    require(data.labels(i) < arch.classes, "train: label out of range");

  auto model = MlpClassifier::random_init(arch, config.seed);
  model->stats = data.stats;
  model->centering = data.centering;

  const int layers = model->layer_count();
  std::vector<Matrix> w_vel(layers);
  std::vector<Vector> b_vel(layers);
  for (int l = 0; l < layers; ++l) {
    w_vel[l] = Matrix::Zero(model->weight(l).rows(), model->weight(l).cols());
    b_vel[l] = Vector::Zero(model->bias(l).size());
  }

  const int n = data.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  double epoch_loss = 0.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    const ImageBatch* epoch_data = &data;
    ImageBatch augmented;
    if (config.augment) {
      augmented = augment(data, sub_seed(config.seed, "aug", epoch));
      epoch_data = &augmented;
    }

    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = sub_rng(config.seed, "shuffle", epoch);
    shuffle_rng.shuffle(order);

    epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int size = std::min(config.batch_size, n - start);
      Matrix inputs(size, arch.input.features());
      IntVector labels(size);
      for (int i = 0; i < size; ++i) {
        inputs.row(i) = epoch_data->values.row(order[start + i]);
        labels(i) = epoch_data->labels(order[start + i]);
      }

      ForwardCache cache = forward(*model, inputs);
      const double loss = batch_loss(cache.logits, labels);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss at epoch " << epoch
            << ", batch " << batches << ", learning rate " << lr;
        throw NumericError(msg.str());
      }
      epoch_loss += loss;
      ++batches;

      // d loss / d logits = (softmax - onehot) / batch size.
      Matrix grad = softmax_rows(cache.logits);
      for (int i = 0; i < size; ++i) grad(i, labels(i)) -= 1.0;
      grad /= static_cast<double>(size);

      for (int l = layers - 1; l >= 0; --l) {
        Matrix w_grad = cache.acts[static_cast<std::size_t>(l)].transpose() *
                        grad;
        Vector b_grad = grad.colwise().sum().transpose();
        if (l > 0) {
          grad = grad * model->weight(l).transpose();
          const Matrix& post = cache.acts[static_cast<std::size_t>(l)];
          if (arch.activation == Activation::ReLU) {
            grad = grad.array() * (post.array() > 0.0).cast<double>();
          } else {
            grad = grad.array() * (1.0 - post.array().square());
          }
        }

        w_grad += config.weight_decay * model->weight(l);
        w_vel[l] = config.momentum * w_vel[l] + w_grad;
        model->weight(l) -= lr * (w_grad + config.momentum * w_vel[l]);

        b_vel[l] = config.momentum * b_vel[l] + b_grad;
        model->bias(l) -= lr * (b_grad + config.momentum * b_vel[l]);
      }
    }
    epoch_loss /= static_cast<double>(batches);

    if (log) {
      *log << "epoch " << (epoch + 1) << "/" << config.epochs << " lr " << lr
           << " loss " << epoch_loss << "\n";
    }
  }

  TrainResult result;
  result.model = std::move(model);
  result.final_loss = epoch_loss;
  result.train_accuracy_pct =
      accuracy_pct(result.model->predict_proba(data.values), data.labels);
  result.epochs_run = config.epochs;
  return result;
}

}  // namespace sis
