#include "sis/image.hpp"

#include <cmath>

namespace sis {

void NormalizationStats::validate() const {
  require(shape.features() > 0, "normalization stats: empty shape");
  require(channel_mean.size() == shape.channels &&
              channel_std.size() == shape.channels,
          "normalization stats: channel moment size != channel count");
  require(mean_image.size() == shape.features(),
          "normalization stats: mean image shape mismatch");
  require((channel_std.array() > 0.0).all(),
          "normalization stats: non-positive channel std");
}

bool ImageBatch::labeled() const {
  if (labels.size() != values.rows()) return false;
  return (labels.array() >= 0).all();
}

Image ImageBatch::image(int index) const {
  require(index >= 0 && index < size(), "image index out of range");
  Image img;
  img.shape = shape;
  img.values = values.row(index).transpose();
  img.space = space;
  img.label = labels.size() > index ? labels(index) : -1;
  img.stats = stats;
  return img;
}

ImageBatch make_batch(InputShape shape, Matrix values, IntVector labels,
                      ValueSpace space) {
  require(shape.height > 0 && shape.width > 0 && shape.channels > 0,
          "batch shape must be positive in every dimension");
  require(values.cols() == shape.features(),
          "batch columns != shape features");
  if (labels.size() == 0) labels = IntVector::Constant(values.rows(), -1);
  require(labels.size() == values.rows(), "label count != batch size");
  ImageBatch batch;
  batch.shape = shape;
  batch.values = std::move(values);
  batch.labels = std::move(labels);
  batch.space = space;
  return batch;
}

NormalizationStats compute_normalization_stats(const ImageBatch& train) {
  require(train.size() > 0, "cannot compute stats on an empty batch");
  const InputShape shape = train.shape;
  const int C = shape.channels;
  const int P = shape.pixels();
  const auto n = static_cast<double>(train.size()) * P;

  NormalizationStats stats;
  stats.shape = shape;
  stats.channel_mean = Vector::Zero(C);
  stats.channel_std = Vector::Zero(C);
  stats.mean_image =
      train.values.colwise().mean().transpose();

  // Two-pass mean/variance per channel over every pixel of every image.
  for (int c = 0; c < C; ++c) {
    double sum = 0.0;
    for (int p = 0; p < P; ++p) sum += train.values.col(p * C + c).sum();
    stats.channel_mean(c) = sum / n;
  }
  for (int c = 0; c < C; ++c) {
    double sq = 0.0;
    for (int p = 0; p < P; ++p) {
      sq += (train.values.col(p * C + c).array() - stats.channel_mean(c))
                .square()
                .sum();
    }
    const double var = sq / n;
    // A constant channel has no scale; leave it untouched instead of
    // dividing by zero.
    stats.channel_std(c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  stats.validate();
  return stats;
}

namespace {
Vector centering_vector(const NormalizationStats& stats, Centering centering) {
  if (centering == Centering::MeanImage) return stats.mean_image;
  const InputShape shape = stats.shape;
  Vector center(shape.features());
  for (int p = 0; p < shape.pixels(); ++p)
    for (int c = 0; c < shape.channels; ++c)
      center(p * shape.channels + c) = stats.channel_mean(c);
  return center;
}

Vector scale_vector(const NormalizationStats& stats) {
  const InputShape shape = stats.shape;
  Vector scale(shape.features());
  for (int p = 0; p < shape.pixels(); ++p)
    for (int c = 0; c < shape.channels; ++c)
      scale(p * shape.channels + c) = stats.channel_std(c);
  return scale;
}
}  // namespace

ImageBatch normalize(const ImageBatch& batch, const NormalizationStats& stats,
                     Centering centering) {
  require(batch.space == ValueSpace::RawBytes,
          "normalize expects a raw-value batch");
  stats.validate();
  require(stats.shape == batch.shape,
          "normalization stats shape " + stats.shape.str() +
              " does not match batch shape " + batch.shape.str());

  const Vector center = centering_vector(stats, centering);
  const Vector scale = scale_vector(stats);

  ImageBatch out = batch;
  out.values = (batch.values.rowwise() - center.transpose()).array().rowwise() /
               scale.transpose().array();
  out.space = ValueSpace::Normalized;
  out.centering = centering;
  out.stats = std::make_shared<NormalizationStats>(stats);
  return out;
}

ImageBatch denormalize(const ImageBatch& batch,
                       const NormalizationStats& stats) {
  require(batch.space == ValueSpace::Normalized,
          "denormalize expects a normalized batch");
  stats.validate();
  require(stats.shape == batch.shape, "stats shape does not match batch");

  const Vector center = centering_vector(stats, batch.centering);
  const Vector scale = scale_vector(stats);

  ImageBatch out = batch;
  out.values = (batch.values.array().rowwise() * scale.transpose().array())
                   .rowwise() +
               center.transpose().array();
  out.space = ValueSpace::RawBytes;
  out.stats.reset();
  return out;
}

double accuracy_pct(const Matrix& probabilities, const IntVector& labels) {
  require(probabilities.rows() == labels.size(),
          "accuracy: row count != label count");
  require(probabilities.rows() > 0, "accuracy: empty input");
  int correct = 0;
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    Eigen::Index argmax = 0;
    probabilities.row(i).maxCoeff(&argmax);
    if (static_cast<int>(argmax) == labels(i)) ++correct;
  }
  return 100.0 * correct / static_cast<double>(probabilities.rows());
}

}  // namespace sis
