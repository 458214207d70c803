#pragma once

#include "sis/image.hpp"
#include "sis/mask.hpp"
#include "sis/select.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sis {

enum class SubsetKind { Backselect, Random };

SubsetKind parse_subset_kind(const std::string& name);
std::string subset_kind_name(SubsetKind kind);

/// floor(rho * pixels), at least one pixel. rho ranges over (0, 1]; 1.0 is
/// the identity subset.
int retained_pixel_count(double rho, int pixels);

/// Everything needed to rebuild or audit a subset dataset. Stored as a JSON
/// sidecar next to the SISM retain-mask container.
struct SubsetSpec {
  SubsetKind kind = SubsetKind::Random;
  double rho = 0.05;
  std::uint64_t seed = 0;     // random subsets
  std::string model_id;       // backselect subsets
  SisMode mode = SisMode::Exact;
  int block_size = 1;
  MaskingStrategy::Kind strategy = MaskingStrategy::Kind::Zero;
  std::string mask_file;      // path relative to the sidecar
  int count = 0;

  std::string to_json() const;
  static SubsetSpec from_json(const std::string& text);
};

void save_subset_spec(const SubsetSpec& spec, const std::string& path);
SubsetSpec load_subset_spec(const std::string& path);

/// Retain masks (1 = pixel kept) from per-image backward selection against
/// the model's own predicted class: the most critical retained_pixel_count
/// pixels of each ranking. Labels are never read.
std::vector<Mask> build_backselect_retain_masks(const Classifier& model,
                                                const ImageBatch& batch,
                                                const MaskingStrategy& strategy,
                                                const SisConfig& config,
                                                double rho);

/// Uniformly random retain masks, one independent draw per image from
/// sub_rng(seed, "subset", image_index).
std::vector<Mask> build_random_retain_masks(InputShape shape, int count,
                                            double rho, std::uint64_t seed);

/// Replace every non-retained pixel with the strategy's replacement value.
/// Labels and normalization metadata carry over unchanged.
ImageBatch materialize_subsets(const ImageBatch& batch,
                               const std::vector<Mask>& retain,
                               const MaskingStrategy& strategy);

}  // namespace sis
