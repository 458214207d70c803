#pragma once

#include "sis/image.hpp"
#include "sis/rng.hpp"

namespace sis {

Image flip_horizontal(const Image& image);

/// Pad `pad` pixels of `fill` on every side, then crop back to the original
/// size starting at (off_row, off_col) in the padded frame. Offsets range
/// over [0, 2*pad].
Image pad_crop(const Image& image, int pad, int off_row, int off_col,
               double fill = 0.0);

struct AugmentDraw {
  bool flip = false;
  int off_row = 0;
  int off_col = 0;
};

/// The exact per-image draw sequence used by augment(): one flip bit, then
/// the two crop offsets. Exposed so tests can enumerate it.
AugmentDraw draw_augmentation(Rng& rng, int pad);

/// Per-image independent: horizontal flip with probability 1/2, then pad-4
/// random crop. The fill value replicates the masking replacement (zero).
/// Image i uses the stream sub_rng(seed, "augment", i), so the result does
/// not depend on batch traversal order.
ImageBatch augment(const ImageBatch& batch, std::uint64_t seed, int pad = 4,
                   double fill = 0.0);

}  // namespace sis
