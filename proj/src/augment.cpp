#include "sis/augment.hpp"

namespace sis {

Image flip_horizontal(const Image& image) {
  const InputShape s = image.shape;
  Image out = image;
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      const int src = r * s.width + (s.width - 1 - c);
      const int dst = r * s.width + c;
      for (int ch = 0; ch < s.channels; ++ch)
        out.values(dst * s.channels + ch) =
            image.values(src * s.channels + ch);
    }
  }
  return out;
}

Image pad_crop(const Image& image, int pad, int off_row, int off_col,
               double fill) {
  const InputShape s = image.shape;
  require(pad >= 0, "pad must be non-negative");
  require(off_row >= 0 && off_row <= 2 * pad && off_col >= 0 &&
              off_col <= 2 * pad,
          "crop offset out of range");
  Image out = image;
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      // Position in the padded frame maps back to source coordinates.
      const int src_r = r + off_row - pad;
      const int src_c = c + off_col - pad;
      const bool inside = src_r >= 0 && src_r < s.height && src_c >= 0 &&
                          src_c < s.width;
      const int dst = r * s.width + c;
      for (int ch = 0; ch < s.channels; ++ch) {
        out.values(dst * s.channels + ch) =
            inside ? image.values((src_r * s.width + src_c) * s.channels + ch)
                   : fill;
      }
    }
  }
  return out;
}

AugmentDraw draw_augmentation(Rng& rng, int pad) {
  AugmentDraw draw;
  draw.flip = rng.uniform() < 0.5;
  draw.off_row = rng.uniform_int(0, 2 * pad);
  draw.off_col = rng.uniform_int(0, 2 * pad);
  return draw;
}

ImageBatch augment(const ImageBatch& batch, std::uint64_t seed, int pad,
                   double fill) {
  ImageBatch out = batch;
  for (int i = 0; i < batch.size(); ++i) {
    Rng rng = sub_rng(seed, "augment", static_cast<std::uint64_t>(i));
    const AugmentDraw draw = draw_augmentation(rng, pad);
    Image img = batch.image(i);
    if (draw.flip) img = flip_horizontal(img);
    img = pad_crop(img, pad, draw.off_row, draw.off_col, fill);
    out.values.row(i) = img.values.transpose();
  }
  return out;
}

}  // namespace sis
