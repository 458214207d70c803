#pragma once

#include "sis/image.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace sis {

/// Binary pixel grid: 1 = masked, 0 = unmasked. All channels of a pixel
/// always move together; there is no per-channel granularity anywhere.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool filled = false);
  static Mask from_flags(int height, int width, BoolArray flags);

  int height() const { return height_; }
  int width() const { return width_; }
  int pixels() const { return static_cast<int>(bits_.size()); }
  int count() const { return count_; }  // number of 1-entries, cached
  bool empty() const { return count_ == 0; }
  bool full() const { return count_ == pixels(); }

  bool at(int pixel) const { return bits_(pixel); }
  bool at(int row, int col) const { return bits_(row * width_ + col); }
  void set(int pixel, bool value);

  const BoolArray& flags() const { return bits_; }

  std::vector<int> masked_pixels() const;
  std::vector<int> unmasked_pixels() const;

  bool same_shape(const Mask& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool operator==(const Mask& other) const;

 private:
  int height_ = 0;
  int width_ = 0;
  int count_ = 0;
  BoolArray bits_;
};

Mask mask_union(const Mask& a, const Mask& b);
Mask mask_difference(const Mask& a, const Mask& b);
bool mask_disjoint(const Mask& a, const Mask& b);
Mask mask_complement(const Mask& m);

/// A group of pixels treated as one selection unit, ordered least- to
/// most-critical within the group.
struct PixelBlock {
  std::vector<int> pixels;

  int size() const { return static_cast<int>(pixels.size()); }
};

/// What masked pixels are replaced with. The replacement image is fixed per
/// dataset: zeros (the default in normalized space), the dataset mean image,
/// or the per-channel mean broadcast to every pixel.
class MaskingStrategy {
 public:
  enum class Kind { Zero, MeanImage, ChannelMean };

  static MaskingStrategy zero(InputShape shape);
  static MaskingStrategy mean_image(const NormalizationStats& stats);
  static MaskingStrategy channel_mean(const NormalizationStats& stats);
  static MaskingStrategy make(Kind kind, InputShape shape,
                              const NormalizationStats* stats);

  Kind kind() const { return kind_; }
  InputShape shape() const { return shape_; }
  const Vector& replacement() const { return replacement_; }

  static Kind parse_kind(const std::string& name);
  static std::string kind_name(Kind kind);

 private:
  MaskingStrategy(Kind kind, InputShape shape, Vector replacement);
  Kind kind_;
  InputShape shape_;
  Vector replacement_;  // pixel-major, features() entries
};

/// x~ = x (1 - M) + r M, expanded over channels.
Vector apply_mask_values(const Vector& values, const Mask& mask,
                         const MaskingStrategy& strategy);
Image apply_mask(const Image& image, const Mask& mask,
                 const MaskingStrategy& strategy);

// Mask container ("SISM"): magic "SISM", 1-byte version, then unsigned
// 32-bit little-endian height, width and mask count, followed by each mask
// bit-packed row-major and padded to a byte boundary. Header is 17 bytes; a
// 32x32 mask occupies 128 bytes.
inline constexpr char kMaskMagic[4] = {'S', 'I', 'S', 'M'};
inline constexpr unsigned char kMaskFormatVersion = 1;

// height/width override the dimensions taken from the first mask; they are
// mandatory when the list is empty (an empty container is still valid).
void serialize_masks(const std::vector<Mask>& masks, std::ostream& out,
                     int height = 0, int width = 0);
std::vector<Mask> parse_masks(std::istream& in);
void save_masks(const std::vector<Mask>& masks, const std::string& path,
                int height = 0, int width = 0);
std::vector<Mask> load_masks(const std::string& path);

}  // namespace sis
