#pragma once

#include "sis/classifier.hpp"
#include "sis/image.hpp"
#include "sis/mask.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sis {

enum class SisMode { Exact, BatchedGradient };

SisMode parse_sis_mode(const std::string& name);
std::string sis_mode_name(SisMode mode);

struct SisConfig {
  double tau = 0.99;
  int block_size = 1;
  SisMode mode = SisMode::Exact;
  int max_collection = 0;  // 0 = run until the natural stopping rule

  void validate() const;
};

/// Exact mode with singleton blocks for 32x32 inputs, the batched gradient
/// approximation with 100-pixel blocks above that.
SisConfig default_sis_config(InputShape shape);

struct RankingProvenance {
  SisMode mode = SisMode::Exact;
  std::string model_id;
  int target_class = -1;
  double start_confidence = 0.0;  // f_c before anything was removed
  int start_unmasked = 0;         // pixels eligible for ranking
  double tau = 0.0;
  int block_size = 1;
};

/// Removal order produced by backward selection. Blocks are stored in
/// removal order, least critical first; the stack top for find_sis is the
/// back. Excluded pixels appear in no block.
struct RemovalRanking {
  int height = 0;
  int width = 0;
  std::vector<PixelBlock> blocks;
  RankingProvenance provenance;
  long long forward_evals = 0;   // one per model row evaluated
  long long gradient_evals = 0;  // one per backward pass

  /// Pixels in removal order, expanding blocks in place.
  std::vector<int> flatten() const;
};

/// Exact backward selection: per iteration every still-unmasked pixel is
/// tried as the next removal (one batched model call) and the block_size
/// removals that keep the target confidence highest are masked, ties to the
/// lower pixel index. target_class < 0 means "argmax at the start point".
/// `exclusion` pixels are treated as permanently removed and are not ranked.
RemovalRanking backselect_exact(const Classifier& model, const Image& image,
                                const MaskingStrategy& strategy,
                                const SisConfig& config, int target_class = -1,
                                const Mask* exclusion = nullptr);

/// Gradient approximation: per iteration one gradient of the target
/// confidence with respect to the mask, then the block_size unmasked pixels
/// with the largest entries are removed together. Exactly
/// ceil(p / block_size) gradient evaluations for p rankable pixels.
RemovalRanking backselect_gradient(const Classifier& model, const Image& image,
                                   const MaskingStrategy& strategy,
                                   const SisConfig& config,
                                   int target_class = -1,
                                   const Mask* exclusion = nullptr);

/// Dispatch on config.mode.
RemovalRanking backselect(const Classifier& model, const Image& image,
                          const MaskingStrategy& strategy,
                          const SisConfig& config, int target_class = -1,
                          const Mask* exclusion = nullptr);

struct SisResult {
  int target_class = -1;
  Mask mask;               // 1 = SIS member
  double confidence = 0.0; // f_c with only the SIS visible
  long long forward_evals = 0;  // spent inside find_sis

  int size() const { return mask.count(); }
};

/// Walk the ranking back from fully masked, unmasking one block at a time
/// (most critical first) until the target confidence reaches tau. Returns
/// nothing when even the full start point stays below tau. The fully-popped
/// state reuses the ranking's cached start confidence, so at most
/// blocks.size() forward evaluations are spent.
std::optional<SisResult> find_sis(const Classifier& model, const Image& image,
                                  const MaskingStrategy& strategy,
                                  const SisConfig& config,
                                  const RemovalRanking& ranking);

struct SisCollection {
  int target_class = -1;
  double original_confidence = 0.0;
  std::vector<SisResult> results;      // disjoint, most to least critical
  double residual_confidence = 0.0;    // f_c on the pixels no SIS claimed
  bool ended_degenerate = false;       // stopped because an empty SIS appeared
  long long forward_evals = 0;
  long long gradient_evals = 0;
};

/// Repeated backward selection against a fixed target class (the argmax on
/// the intact image, chosen once). Each found SIS joins an exclusion set and
/// the remainder is searched again until the remaining pixels alone no
/// longer reach tau or config.max_collection is hit.
SisCollection sis_collection(const Classifier& model, const Image& image,
                             const MaskingStrategy& strategy,
                             const SisConfig& config);

struct SisBatchEntry {
  int index = -1;
  bool skipped = false;  // original confidence below tau, no SIS attempted
  int target_class = -1;
  double original_confidence = 0.0;
  std::optional<SisResult> result;
  long long forward_evals = 0;
  long long gradient_evals = 0;
};

/// One SIS per sufficiently confident image. The shared gate evaluation over
/// the whole batch is a single batched model call.
std::vector<SisBatchEntry> sis_batch(const Classifier& model,
                                     const ImageBatch& batch,
                                     const MaskingStrategy& strategy,
                                     const SisConfig& config);

}  // namespace sis
