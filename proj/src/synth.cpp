#include "sis/synth.hpp"

#include "sis/rng.hpp"

#include <cmath>
#include <vector>

namespace sis {

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "separable") return SynthKind::Separable;
  if (name == "xor") return SynthKind::Xor;
  if (name == "constant") return SynthKind::Constant;
  throw std::invalid_argument("unknown synthetic dataset kind: " + name);
}

namespace {

Vector random_unit(Rng& rng, int dim) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  return v / v.norm();
}

}  // namespace

ImageBatch synth_dataset(SynthKind kind, int n, InputShape shape,
                         std::uint64_t seed, SeparableTruth* truth,
                         double margin) {
  require(n >= 1, "synthetic dataset needs n >= 1");
  require(shape.features() > 0, "synthetic dataset needs a non-empty shape");
  const int dim = shape.features();

  Rng dir_rng = sub_rng(seed, "synth-directions");
  Rng noise_rng = sub_rng(seed, "synth-noise");
  Rng label_rng = sub_rng(seed, "synth-labels");

  Matrix values(n, dim);
  IntVector labels(n);

  switch (kind) {
    case SynthKind::Separable: {
      const Vector u = random_unit(dir_rng, dim);
      if (truth != nullptr) truth->direction = u;
      for (int i = 0; i < n; ++i) {
        const int y = label_rng.uniform_int(0, 1);
        Vector x(dim);
        for (int d = 0; d < dim; ++d) x(d) = noise_rng.normal();
        // Replace the along-direction component with a bounded draw so the
        // two classes never cross sign(u.x) = 0.
        const double along = (2.0 * noise_rng.uniform() - 1.0) * 0.9 * margin;
        x -= (u.dot(x)) * u;
        x += ((y == 1 ? margin : -margin) + along) * u;
        values.row(i) = x.transpose();
        labels(i) = y;
      }
      break;
    }
    case SynthKind::Xor: {
      // Checkerboard parity over an 8x8 grid of cells in the u-v plane. Any
      // halfplane gets at most 9/16 of the cells right, so no linear rule
      // clears ~56% while the cells themselves stay cleanly separated.
      const Vector u = random_unit(dir_rng, dim);
      Vector v = random_unit(dir_rng, dim);
      v -= u.dot(v) * u;
      v.normalize();
      constexpr int kLevels = 8;
      for (int i = 0; i < n; ++i) {
        const int iu = label_rng.uniform_int(0, kLevels - 1);
        const int iv = label_rng.uniform_int(0, kLevels - 1);
        const double cu = (iu - (kLevels - 1) / 2.0) * margin;
        const double cv = (iv - (kLevels - 1) / 2.0) * margin;
        const double ju = (2.0 * noise_rng.uniform() - 1.0) * 0.25 * margin;
        const double jv = (2.0 * noise_rng.uniform() - 1.0) * 0.25 * margin;
        Vector x(dim);
        for (int d = 0; d < dim; ++d) x(d) = 0.3 * noise_rng.normal();
        x -= u.dot(x) * u;
        x -= v.dot(x) * v;
        x += (cu + ju) * u + (cv + jv) * v;
        values.row(i) = x.transpose();
        labels(i) = (iu + iv) & 1;
      }
      if (truth != nullptr) truth->direction = u;
      break;
    }
    case SynthKind::Constant: {
      for (int i = 0; i < n; ++i) {
        for (int d = 0; d < dim; ++d) values(i, d) = noise_rng.normal();
        labels(i) = 0;
      }
      break;
    }
  }

  return make_batch(shape, std::move(values), std::move(labels),
                    ValueSpace::Normalized);
}

namespace {

// Separable box blur with edge clamping, applied per channel.
Vector blur_field(const Vector& field, InputShape shape, int radius) {
  if (radius <= 0) return field;
  Vector tmp = field;
  Vector out = field;
  const int H = shape.height, W = shape.width, C = shape.channels;
  const auto at = [&](const Vector& v, int r, int c, int ch) {
    r = std::min(std::max(r, 0), H - 1);
    c = std::min(std::max(c, 0), W - 1);
    return v((r * W + c) * C + ch);
  };
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      for (int ch = 0; ch < C; ++ch) {
        double s = 0.0;
        for (int d = -radius; d <= radius; ++d) s += at(field, r, c + d, ch);
        tmp((r * W + c) * C + ch) = s / (2 * radius + 1);
      }
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      for (int ch = 0; ch < C; ++ch) {
        double s = 0.0;
        for (int d = -radius; d <= radius; ++d) s += at(tmp, r + d, c, ch);
        out((r * W + c) * C + ch) = s / (2 * radius + 1);
      }
  return out;
}

}  // namespace

ImageBatch synth_template_dataset(int n, InputShape shape,
                                  const TemplateDataConfig& config,
                                  std::uint64_t seed) {
  require(n >= 1, "template dataset needs n >= 1");
  require(config.classes >= 2, "template dataset needs >= 2 classes");
  const int dim = shape.features();

  // Templates depend only on template_seed so that independently generated
  // splits share the same class structure.
  std::vector<Vector> templates;
  templates.reserve(static_cast<std::size_t>(config.classes));
  for (int k = 0; k < config.classes; ++k) {
    Rng trng = sub_rng(config.template_seed, "class-template",
                       static_cast<std::uint64_t>(k));
    Vector field(dim);
    for (int d = 0; d < dim; ++d) field(d) = trng.normal();
    field = blur_field(field, shape, config.blur_radius);
    const double sd = std::sqrt(field.squaredNorm() / dim);
    field *= config.amplitude / (sd > 0.0 ? sd : 1.0);
    templates.push_back(std::move(field));
  }

  Rng rng = sub_rng(seed, "template-images");
  Matrix values(n, dim);
  IntVector labels(n);
  for (int i = 0; i < n; ++i) {
    const int k = rng.uniform_int(0, config.classes - 1);
    const double polarity =
        config.sign_flip ? (rng.uniform_int(0, 1) * 2 - 1) : 1.0;
    for (int d = 0; d < dim; ++d) {
      const double v =
          128.0 + polarity * templates[static_cast<std::size_t>(k)](d) +
          config.noise * rng.normal();
      values(i, d) = std::floor(std::min(255.0, std::max(0.0, v)) + 0.5);
    }
    labels(i) = k;
  }
  return make_batch(shape, std::move(values), std::move(labels),
                    ValueSpace::RawBytes);
}

}  // namespace sis
