#include "sis/select.hpp"

#include "sis/math.hpp"

#include <algorithm>
#include <cmath>

namespace sis {

SisMode parse_sis_mode(const std::string& name) {
  if (name == "exact") return SisMode::Exact;
  if (name == "batched-gradient") return SisMode::BatchedGradient;
  throw std::invalid_argument("unknown sis mode: " + name);
}

std::string sis_mode_name(SisMode mode) {
  return mode == SisMode::Exact ? "exact" : "batched-gradient";
}

void SisConfig::validate() const {
  require(tau > 0.0 && tau <= 1.0, "SisConfig: tau must be in (0, 1]");
  require(block_size >= 1, "SisConfig: block_size must be >= 1");
  require(max_collection >= 0, "SisConfig: max_collection must be >= 0");
}

SisConfig default_sis_config(InputShape shape) {
  SisConfig config;
  if (shape.pixels() <= 1024) {
    config.tau = 0.99;
    config.block_size = 1;
    config.mode = SisMode::Exact;
  } else {
    config.tau = 0.9;
    config.block_size = 100;
    config.mode = SisMode::BatchedGradient;
  }
  return config;
}

std::vector<int> RemovalRanking::flatten() const {
  std::vector<int> out;
  for (const auto& block : blocks)
    out.insert(out.end(), block.pixels.begin(), block.pixels.end());
  return out;
}

namespace {

int argmax(const Vector& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

void check_select_args(const Classifier& model, const Image& image,
                       const MaskingStrategy& strategy, const SisConfig& config,
                       const Mask* exclusion) {
  config.validate();
  const InputShape shape = model.input_shape();
  require(image.shape == shape, "backselect: image shape " +
                                    image.shape.str() + " != model shape " +
                                    shape.str());
  require(strategy.shape() == shape, "backselect: strategy shape mismatch");
  if (exclusion)
    require(exclusion->height() == shape.height &&
                exclusion->width() == shape.width,
            "backselect: exclusion mask shape mismatch");
}

// Candidate scores sorted most-removable first: higher confidence wins,
// ties go to the lower pixel index.
struct Candidate {
  int pixel;
  double score;
};

void sort_candidates(std::vector<Candidate>& candidates) {
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.pixel < b.pixel;
            });
}

}  // namespace

RemovalRanking backselect_exact(const Classifier& model, const Image& image,
                                const MaskingStrategy& strategy,
                                const SisConfig& config, int target_class,
                                const Mask* exclusion) {
  check_select_args(model, image, strategy, config, exclusion);
  const InputShape shape = model.input_shape();

  Mask removed = exclusion ? *exclusion : Mask(shape.height, shape.width);
  std::vector<int> open = mask_complement(removed).masked_pixels();

  RemovalRanking ranking;
  ranking.height = shape.height;
  ranking.width = shape.width;
  ranking.provenance.mode = SisMode::Exact;
  ranking.provenance.model_id = model.describe();
  ranking.provenance.tau = config.tau;
  ranking.provenance.block_size = config.block_size;
  ranking.provenance.start_unmasked = static_cast<int>(open.size());

  Vector working = apply_mask_values(image.values, removed, strategy);
  {
    const Vector probs = model.predict_proba_one(working);
    ranking.forward_evals += 1;
    if (target_class < 0) target_class = argmax(probs);
    require(target_class < model.num_classes(),
            "backselect: target class out of range");
    ranking.provenance.target_class = target_class;
    ranking.provenance.start_confidence = probs(target_class);
  }

  const Vector& replacement = strategy.replacement();
  while (!open.empty()) {
    Matrix candidates(static_cast<Eigen::Index>(open.size()),
                      shape.features());
    for (std::size_t i = 0; i < open.size(); ++i) {
      candidates.row(static_cast<Eigen::Index>(i)) = working.transpose();
      const int pixel = open[i];
      for (int c = 0; c < shape.channels; ++c)
        candidates(static_cast<Eigen::Index>(i), pixel * shape.channels + c) =
            replacement(pixel * shape.channels + c);
    }
    const Matrix probs = model.predict_proba(candidates);
    ranking.forward_evals += static_cast<long long>(open.size());

    std::vector<Candidate> scored(open.size());
    for (std::size_t i = 0; i < open.size(); ++i)
      scored[i] = {open[i], probs(static_cast<Eigen::Index>(i), target_class)};
    sort_candidates(scored);

    const int take = std::min<int>(config.block_size,
                                   static_cast<int>(scored.size()));
    PixelBlock block;
    block.pixels.reserve(static_cast<std::size_t>(take));
    for (int i = 0; i < take; ++i) {
      const int pixel = scored[static_cast<std::size_t>(i)].pixel;
      block.pixels.push_back(pixel);
      removed.set(pixel, true);
      for (int c = 0; c < shape.channels; ++c)
        working(pixel * shape.channels + c) =
            replacement(pixel * shape.channels + c);
    }
    ranking.blocks.push_back(std::move(block));

    std::vector<int> next;
    next.reserve(open.size() - static_cast<std::size_t>(take));
    for (const int pixel : open)
      if (!removed.at(pixel)) next.push_back(pixel);
    open = std::move(next);
  }
  return ranking;
}

RemovalRanking backselect_gradient(const Classifier& model, const Image& image,
                                   const MaskingStrategy& strategy,
                                   const SisConfig& config, int target_class,
                                   const Mask* exclusion) {
  check_select_args(model, image, strategy, config, exclusion);
  require(model.differentiable(),
          "backselect: model is not differentiable; use the exact mode");
  const InputShape shape = model.input_shape();

  Mask removed = exclusion ? *exclusion : Mask(shape.height, shape.width);
  std::vector<int> open = mask_complement(removed).masked_pixels();

  RemovalRanking ranking;
  ranking.height = shape.height;
  ranking.width = shape.width;
  ranking.provenance.mode = SisMode::BatchedGradient;
  ranking.provenance.model_id = model.describe();
  ranking.provenance.tau = config.tau;
  ranking.provenance.block_size = config.block_size;
  ranking.provenance.start_unmasked = static_cast<int>(open.size());

  if (target_class < 0) {
    const Vector probs = model.predict_proba_one(
        apply_mask_values(image.values, removed, strategy));
    ranking.forward_evals += 1;
    target_class = argmax(probs);
    ranking.provenance.start_confidence = probs(target_class);
  }
  require(target_class < model.num_classes(),
          "backselect: target class out of range");
  ranking.provenance.target_class = target_class;

  if (ranking.forward_evals == 0 && open.empty()) {
    // No rankable pixels and no gradient call to piggyback on; one forward
    // pins the start confidence for find_sis.
    const Vector probs = model.predict_proba_one(
        apply_mask_values(image.values, removed, strategy));
    ranking.forward_evals += 1;
    ranking.provenance.start_confidence = probs(target_class);
  }

  bool first_iteration = true;
  while (!open.empty()) {
    const MaskGradientResult grad =
        confidence_grad_wrt_mask(model, image, removed, target_class,
                                 strategy);
    ranking.gradient_evals += 1;
    if (first_iteration && ranking.forward_evals == 0)
      ranking.provenance.start_confidence = grad.confidence;
    first_iteration = false;

    std::vector<Candidate> scored(open.size());
    for (std::size_t i = 0; i < open.size(); ++i) {
      const int pixel = open[i];
      scored[i] = {pixel, grad.grid(pixel / shape.width, pixel % shape.width)};
    }
    sort_candidates(scored);

    const int take = std::min<int>(config.block_size,
                                   static_cast<int>(scored.size()));
    PixelBlock block;
    block.pixels.reserve(static_cast<std::size_t>(take));
    for (int i = 0; i < take; ++i) {
      const int pixel = scored[static_cast<std::size_t>(i)].pixel;
      block.pixels.push_back(pixel);
      removed.set(pixel, true);
    }
    ranking.blocks.push_back(std::move(block));

    std::vector<int> next;
    next.reserve(open.size() - static_cast<std::size_t>(take));
    for (const int pixel : open)
      if (!removed.at(pixel)) next.push_back(pixel);
    open = std::move(next);
  }
  return ranking;
}

RemovalRanking backselect(const Classifier& model, const Image& image,
                          const MaskingStrategy& strategy,
                          const SisConfig& config, int target_class,
                          const Mask* exclusion) {
  if (config.mode == SisMode::Exact)
    return backselect_exact(model, image, strategy, config, target_class,
                            exclusion);
  return backselect_gradient(model, image, strategy, config, target_class,
                             exclusion);
}

std::optional<SisResult> find_sis(const Classifier& model, const Image& image,
                                  const MaskingStrategy& strategy,
                                  const SisConfig& config,
                                  const RemovalRanking& ranking) {
  config.validate();
  const InputShape shape = model.input_shape();
  require(image.shape == shape, "find_sis: image shape mismatch");
  require(strategy.shape() == shape, "find_sis: strategy shape mismatch");
  require(ranking.height == shape.height && ranking.width == shape.width,
          "find_sis: ranking was built for shape " +
              std::to_string(ranking.height) + "x" +
              std::to_string(ranking.width));
  const int target = ranking.provenance.target_class;
  require(target >= 0 && target < model.num_classes(),
          "find_sis: ranking has no valid target class");

  SisResult result;
  result.target_class = target;
  result.mask = Mask(shape.height, shape.width, false);

  if (ranking.blocks.empty()) {
    // Nothing was rankable; the start point is also the fully masked point.
    if (ranking.provenance.start_confidence >= config.tau) {
      result.confidence = ranking.provenance.start_confidence;
      return result;
    }
    return std::nullopt;
  }

  // Fully masked first: a model this confident on no evidence yields the
  // degenerate empty SIS.
  {
    const Vector masked = apply_mask_values(
        image.values, Mask(shape.height, shape.width, true), strategy);
    const Vector probs = model.predict_proba_one(masked);
    result.forward_evals += 1;
    if (probs(target) >= config.tau) {
      result.confidence = probs(target);
      return result;
    }
  }

  for (std::size_t j = ranking.blocks.size(); j-- > 0;) {
    for (const int pixel : ranking.blocks[j].pixels)
      result.mask.set(pixel, true);

    double confidence;
    if (j == 0) {
      // All blocks popped: this is exactly the backselect start point.
      confidence = ranking.provenance.start_confidence;
    } else {
      const Vector input = apply_mask_values(
          image.values, mask_complement(result.mask), strategy);
      confidence = model.predict_proba_one(input)(target);
      result.forward_evals += 1;
    }
    if (confidence >= config.tau) {
      result.confidence = confidence;
      return result;
    }
  }
  return std::nullopt;
}

SisCollection sis_collection(const Classifier& model, const Image& image,
                             const MaskingStrategy& strategy,
                             const SisConfig& config) {
  config.validate();
  const InputShape shape = model.input_shape();
  require(image.shape == shape, "sis_collection: image shape mismatch");

  SisCollection collection;
  {
    const Vector probs = model.predict_proba_one(image.values);
    collection.forward_evals += 1;
    collection.target_class = argmax(probs);
    collection.original_confidence = probs(collection.target_class);
  }

  Mask exclusion(shape.height, shape.width, false);
  double remaining_confidence = collection.original_confidence;

  while (remaining_confidence >= config.tau) {
    if (config.max_collection > 0 &&
        static_cast<int>(collection.results.size()) >= config.max_collection)
      break;

    RemovalRanking ranking = backselect(model, image, strategy, config,
                                        collection.target_class, &exclusion);
    collection.forward_evals += ranking.forward_evals;
    collection.gradient_evals += ranking.gradient_evals;

    std::optional<SisResult> sis =
        find_sis(model, image, strategy, config, ranking);
    if (!sis) break;
    collection.forward_evals += sis->forward_evals;

    if (sis->mask.empty()) {
      // The exclusion set cannot grow; record the degenerate SIS once.
      collection.results.push_back(std::move(*sis));
      collection.ended_degenerate = true;
      break;
    }

    exclusion = mask_union(exclusion, sis->mask);
    collection.results.push_back(std::move(*sis));

    const Vector remaining = apply_mask_values(image.values, exclusion,
                                               strategy);
    remaining_confidence =
        model.predict_proba_one(remaining)(collection.target_class);
    collection.forward_evals += 1;
  }

  collection.residual_confidence = remaining_confidence;
  return collection;
}

std::vector<SisBatchEntry> sis_batch(const Classifier& model,
                                     const ImageBatch& batch,
                                     const MaskingStrategy& strategy,
                                     const SisConfig& config) {
  config.validate();
  require(batch.shape == model.input_shape(),
          "sis_batch: batch shape mismatch");

  std::vector<SisBatchEntry> entries;
  if (batch.size() == 0) return entries;

  const Matrix probs = model.predict_proba(batch.values);
  entries.reserve(static_cast<std::size_t>(batch.size()));

  for (int i = 0; i < batch.size(); ++i) {
    SisBatchEntry entry;
    entry.index = i;
    entry.forward_evals = 1;  // the gate evaluation
    entry.target_class = argmax(probs.row(i).transpose());
    entry.original_confidence = probs(i, entry.target_class);

    if (entry.original_confidence < config.tau) {
      entry.skipped = true;
      entries.push_back(std::move(entry));
      continue;
    }

    const Image image = batch.image(i);
    RemovalRanking ranking = backselect(model, image, strategy, config,
                                        entry.target_class, nullptr);
    entry.forward_evals += ranking.forward_evals;
    entry.gradient_evals += ranking.gradient_evals;

    std::optional<SisResult> sis =
        find_sis(model, image, strategy, config, ranking);
    if (sis) entry.forward_evals += sis->forward_evals;
    entry.result = std::move(sis);
    entries.push_back(std::move(entry));
  }
  return entries;
}

}  // namespace sis
