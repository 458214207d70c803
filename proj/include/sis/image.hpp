#pragma once

#include "sis/types.hpp"

#include <memory>
#include <optional>

namespace sis {

enum class ValueSpace { RawBytes, Normalized };

/// Which quantity is subtracted during normalization. Scaling is always by
/// the per-channel standard deviation.
enum class Centering { ChannelMean, MeanImage };

/// Per-channel moments plus the per-pixel mean image of a training set.
/// Computed once on the train split and reused verbatim everywhere else.
struct NormalizationStats {
  InputShape shape;
  Vector channel_mean;  // C entries
  Vector channel_std;   // C entries, strictly positive
  Vector mean_image;    // features() entries, pixel-major

  void validate() const;
};

struct Image {
  InputShape shape;
  Vector values;  // pixel-major, features() entries
  ValueSpace space = ValueSpace::RawBytes;
  int label = -1;  // -1 = unlabeled
  std::shared_ptr<const NormalizationStats> stats;  // set while normalized
};

/// A dense batch: one image per row, pixel-major columns. Immutable by
/// convention after construction; all transforms return fresh batches.
struct ImageBatch {
  InputShape shape;
  Matrix values;     // N x features()
  IntVector labels;  // N entries, -1 where unlabeled
  ValueSpace space = ValueSpace::RawBytes;
  Centering centering = Centering::ChannelMean;
  std::shared_ptr<const NormalizationStats> stats;

  int size() const { return static_cast<int>(values.rows()); }
  bool labeled() const;
  Image image(int index) const;
};

ImageBatch make_batch(InputShape shape, Matrix values, IntVector labels,
                      ValueSpace space);

NormalizationStats compute_normalization_stats(const ImageBatch& train);

ImageBatch normalize(const ImageBatch& batch, const NormalizationStats& stats,
                     Centering centering = Centering::ChannelMean);
ImageBatch denormalize(const ImageBatch& batch,
                       const NormalizationStats& stats);

/// Percentage of rows whose argmax-probability class equals the label.
double accuracy_pct(const Matrix& probabilities, const IntVector& labels);

}  // namespace sis
