#include "sis/mask.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace sis {

Mask::Mask(int height, int width, bool filled)
    : height_(height), width_(width) {
  require(height > 0 && width > 0, "mask dimensions must be positive");
  bits_ = BoolArray::Constant(static_cast<Eigen::Index>(height) * width,
                              filled);
  count_ = filled ? pixels() : 0;
}

Mask Mask::from_flags(int height, int width, BoolArray flags) {
  require(flags.size() == static_cast<Eigen::Index>(height) * width,
          "mask flag count does not match dimensions");
  Mask m(height, width);
  m.bits_ = std::move(flags);
  m.count_ = static_cast<int>(m.bits_.count());
  return m;
}

void Mask::set(int pixel, bool value) {
  require(pixel >= 0 && pixel < pixels(), "mask pixel index out of range");
  if (bits_(pixel) != value) {
    bits_(pixel) = value;
    count_ += value ? 1 : -1;
  }
}

std::vector<int> Mask::masked_pixels() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(count_));
  for (int p = 0; p < pixels(); ++p)
    if (bits_(p)) out.push_back(p);
  return out;
}

std::vector<int> Mask::unmasked_pixels() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(pixels() - count_));
  for (int p = 0; p < pixels(); ++p)
    if (!bits_(p)) out.push_back(p);
  return out;
}

bool Mask::operator==(const Mask& other) const {
  return same_shape(other) && (bits_ == other.bits_).all();
}

namespace {
void require_same_shape(const Mask& a, const Mask& b, const char* op) {
  require(a.same_shape(b), std::string(op) + ": mask shapes differ");
}
}  // namespace

Mask mask_union(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "mask_union");
  return Mask::from_flags(a.height(), a.width(), a.flags() || b.flags());
}

Mask mask_difference(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "mask_difference");
  return Mask::from_flags(a.height(), a.width(), a.flags() && !b.flags());
}

bool mask_disjoint(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "mask_disjoint");
  return !(a.flags() && b.flags()).any();
}

Mask mask_complement(const Mask& m) {
  return Mask::from_flags(m.height(), m.width(), !m.flags());
}

MaskingStrategy::MaskingStrategy(Kind kind, InputShape shape,
                                 Vector replacement)
    : kind_(kind), shape_(shape), replacement_(std::move(replacement)) {
  require(replacement_.size() == shape_.features(),
          "replacement image shape mismatch");
}

MaskingStrategy MaskingStrategy::zero(InputShape shape) {
  return MaskingStrategy(Kind::Zero, shape, Vector::Zero(shape.features()));
}

MaskingStrategy MaskingStrategy::mean_image(const NormalizationStats& stats) {
  stats.validate();
  return MaskingStrategy(Kind::MeanImage, stats.shape, stats.mean_image);
}

MaskingStrategy MaskingStrategy::channel_mean(
    const NormalizationStats& stats) {
  stats.validate();
  const InputShape shape = stats.shape;
  Vector replacement(shape.features());
  for (int p = 0; p < shape.pixels(); ++p)
    for (int c = 0; c < shape.channels; ++c)
      replacement(p * shape.channels + c) = stats.channel_mean(c);
  return MaskingStrategy(Kind::ChannelMean, shape, std::move(replacement));
}

MaskingStrategy MaskingStrategy::make(Kind kind, InputShape shape,
                                      const NormalizationStats* stats) {
  if (kind == Kind::Zero) return zero(shape);
  require(stats != nullptr,
          "masking strategy " + kind_name(kind) +
              " needs normalization statistics");
  require(stats->shape == shape, "strategy stats shape mismatch");
  return kind == Kind::MeanImage ? mean_image(*stats) : channel_mean(*stats);
}

MaskingStrategy::Kind MaskingStrategy::parse_kind(const std::string& name) {
  if (name == "zero") return Kind::Zero;
  if (name == "mean-image") return Kind::MeanImage;
  if (name == "channel-mean") return Kind::ChannelMean;
  throw std::invalid_argument("unknown masking strategy: " + name);
}

std::string MaskingStrategy::kind_name(Kind kind) {
  switch (kind) {
    case Kind::Zero: return "zero";
    case Kind::MeanImage: return "mean-image";
    case Kind::ChannelMean: return "channel-mean";
  }
  return "?";
}

Vector apply_mask_values(const Vector& values, const Mask& mask,
                         const MaskingStrategy& strategy) {
  const InputShape shape = strategy.shape();
  require(values.size() == shape.features(),
          "apply_mask: value vector does not match strategy shape");
  require(mask.height() == shape.height && mask.width() == shape.width,
          "apply_mask: mask shape does not match image shape");

  Vector out = values;
  const Vector& r = strategy.replacement();
  for (int p = 0; p < shape.pixels(); ++p) {
    if (!mask.at(p)) continue;
    for (int c = 0; c < shape.channels; ++c)
      out(p * shape.channels + c) = r(p * shape.channels + c);
  }
  return out;
}

Image apply_mask(const Image& image, const Mask& mask,
                 const MaskingStrategy& strategy) {
  require(image.shape == strategy.shape(),
          "apply_mask: image shape does not match strategy shape");
  Image out = image;
  out.values = apply_mask_values(image.values, mask, strategy);
  return out;
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, std::size_t& offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4)
    throw DataError("mask container truncated at byte offset " +
                    std::to_string(offset));
  offset += 4;
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void serialize_masks(const std::vector<Mask>& masks, std::ostream& out,
                     int height, int width) {
  if (!masks.empty()) {
    if (height == 0) height = masks.front().height();
    if (width == 0) width = masks.front().width();
  }
  require(height > 0 && width > 0,
          "serialize_masks: dimensions required for an empty container");
  for (const auto& m : masks)
    require(m.height() == height && m.width() == width,
            "serialize_masks: inconsistent mask shapes");

  out.write(kMaskMagic, 4);
  out.put(static_cast<char>(kMaskFormatVersion));
  write_u32(out, static_cast<std::uint32_t>(height));
  write_u32(out, static_cast<std::uint32_t>(width));
  write_u32(out, static_cast<std::uint32_t>(masks.size()));

  const int pixels = height * width;
  const int bytes = (pixels + 7) / 8;
  std::string buffer(static_cast<std::size_t>(bytes), '\0');
  for (const auto& m : masks) {
    std::memset(buffer.data(), 0, buffer.size());
    for (int p = 0; p < pixels; ++p)
      if (m.at(p))
        buffer[static_cast<std::size_t>(p / 8)] |=
            static_cast<char>(1u << (p % 8));
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  }
  if (!out) throw DataError("serialize_masks: stream write failed");
}

std::vector<Mask> parse_masks(std::istream& in) {
  std::size_t offset = 0;
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMaskMagic, 4) != 0)
    throw DataError("mask container: bad magic at byte offset 0");
  offset = 4;

  const int version = in.get();
  if (version == EOF)
    throw DataError("mask container truncated at byte offset 4");
  if (version != kMaskFormatVersion)
    throw DataError("mask container: unsupported version " +
                    std::to_string(version));
  offset = 5;

  const auto height = static_cast<int>(read_u32(in, offset));
  const auto width = static_cast<int>(read_u32(in, offset));
  const auto count = static_cast<int>(read_u32(in, offset));
  require(height > 0 && width > 0, "mask container: bad dimensions");

  const int pixels = height * width;
  const int bytes = (pixels + 7) / 8;
  std::vector<Mask> masks;
  masks.reserve(static_cast<std::size_t>(count));
  std::string buffer(static_cast<std::size_t>(bytes), '\0');
  for (int i = 0; i < count; ++i) {
    in.read(buffer.data(), bytes);
    if (in.gcount() != bytes)
      throw DataError("mask container truncated at byte offset " +
                      std::to_string(offset + static_cast<std::size_t>(
                                                  in.gcount())));
    offset += static_cast<std::size_t>(bytes);
    BoolArray flags(pixels);
    for (int p = 0; p < pixels; ++p)
      flags(p) = (buffer[static_cast<std::size_t>(p / 8)] >> (p % 8)) & 1;
    masks.push_back(Mask::from_flags(height, width, std::move(flags)));
  }
  return masks;
}

void save_masks(const std::vector<Mask>& masks, const std::string& path,
                int height, int width) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  serialize_masks(masks, out, height, width);
}

std::vector<Mask> load_masks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return parse_masks(in);
}

}  // namespace sis
