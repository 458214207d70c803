#pragma once

#include "sis/image.hpp"

#include <cstdint>
#include <string>

namespace sis {

enum class SynthKind { Separable, Xor, Constant };

SynthKind parse_synth_kind(const std::string& name);

struct SeparableTruth {
  Vector direction;  // unit vector; sign(direction . x) is the true rule
};

/// Deterministic synthetic sets for oracle-scale tests:
///  - Separable: two classes offset +-margin along a random unit direction,
///    with the along-direction noise bounded inside the margin, so the
///    closed-form rule sign(direction . x) is exact.
///  - Xor: checkerboard parity over two orthogonal projections. Not linearly
///    separable; the best linear rule stays near chance.
///  - Constant: a single label, pure noise values.
ImageBatch synth_dataset(SynthKind kind, int n, InputShape shape,
                         std::uint64_t seed, SeparableTruth* truth = nullptr,
                         double margin = 2.0);

/// Class-structured image data in CIFAR value space (raw bytes). Each class
/// has a spatially smoothed random template; images are
/// clamp(128 + polarity * template + noise). With sign_flip on, polarity is
/// +-1 per image, which removes all linear class signal and forces a
/// nonlinear decision rule.
struct TemplateDataConfig {
  int classes = 10;
  double amplitude = 40.0;   // template standard deviation, byte units
  double noise = 45.0;       // additive pixel noise, byte units
  int blur_radius = 2;       // spatial smoothing of the template field
  bool sign_flip = true;
  std::uint64_t template_seed = 7;  // shared by train/test splits
};

ImageBatch synth_template_dataset(int n, InputShape shape,
                                  const TemplateDataConfig& config,
                                  std::uint64_t seed);

}  // namespace sis
