#pragma once

#include "sis/classifier.hpp"
#include "sis/image.hpp"
#include "sis/mask.hpp"
#include "sis/select.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sis {

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, n - 1
  int count = 0;
};

MeanStd mean_std(const std::vector<double>& values);

/// 95% two-sided Welch interval for mean(a) - mean(b) under the normal
/// approximation. Degenerates to invalid when either sample has fewer than
/// two points.
struct WelchCi {
  double difference = 0.0;
  double half_width = 0.0;
  double low = 0.0;
  double high = 0.0;
  bool valid = false;
};

inline constexpr double kZ95 = 1.959963984540054;

WelchCi welch_mean_difference_ci(const std::vector<double>& a,
                                 const std::vector<double>& b);

/// 95% normal-approximation interval around a single sample mean.
WelchCi mean_ci(const std::vector<double>& values);

/// Per-pixel containment counts over a set of masks. Counts stay integral so
/// the mass identity (sum of counts = total set bits) holds exactly;
/// frequencies are derived on demand.
struct Heatmap {
  Eigen::MatrixXi counts;  // H x W
  int mask_count = 0;
  std::optional<double> mean_confidence;

  Matrix frequencies() const;
  long long total_count() const;
};

Heatmap heatmap(const std::vector<Mask>& masks);

/// 8-bit grayscale PGM (P5) with the linear map 0 -> 0, 1 -> 255 rounded
/// half-up, plus an exact CSV of the frequencies.
void render_heatmap(const Heatmap& h, const std::string& pgm_path,
                    const std::string& csv_path);

/// Distribution of (confidence on the full image - confidence on the subset)
/// over the full image's predicted class. Negative mean: the model is more
/// confident on the subsets.
struct ConfidenceDrop {
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
};

ConfidenceDrop confidence_drop(const Classifier& model,
                               const ImageBatch& originals,
                               const ImageBatch& subsets);

/// accuracy_pct(i, j) = accuracy of model j on the subset dataset built from
/// model i. Diagonal = each model on its own subsets.
struct TransferMatrix {
  Matrix accuracy_pct;
  std::vector<std::string> model_ids;
};

TransferMatrix transfer_matrix(
    const std::vector<std::shared_ptr<const Classifier>>& models,
    const std::vector<ImageBatch>& subsets);

struct SizeCurvePoint {
  double tau = 0.0;
  bool empty = true;  // no image met the confidence floor
  int n = 0;
  double mean_size_fraction = 0.0;
  double ci_half_width = 0.0;
  int n_correct = 0;
  int n_incorrect = 0;
  double mean_fraction_correct = 0.0;
  double mean_fraction_incorrect = 0.0;
  double mean_confidence_correct = 0.0;
  double mean_confidence_incorrect = 0.0;
  double pct_increase = 0.0;  // 100 (correct - incorrect) / incorrect
  WelchCi group_diff;         // mean fraction, correct minus incorrect
};

struct SizeStats {
  std::vector<SizeCurvePoint> points;
};

/// One ranking per image, reused across the ascending threshold grid. At
/// each tau only images whose predicted-class confidence reaches tau are
/// included; sizes are fractions of the pixel count. Correct/incorrect is
/// judged against the batch labels.
SizeStats sis_size_curves(const Classifier& model, const ImageBatch& batch,
                          const std::vector<double>& taus,
                          const MaskingStrategy& strategy,
                          const SisConfig& config);

struct EnsembleComparison {
  double ensemble_accuracy_pct = 0.0;
  double mean_member_accuracy_pct = 0.0;
  double ensemble_mean_fraction = 0.0;  // over the ensemble's confident images
  double member_mean_fraction = 0.0;    // mean of per-member means
  double difference = 0.0;
  WelchCi ci;  // ensemble sizes vs pooled member sizes
  int ensemble_n = 0;
  int member_n = 0;  // pooled
};

/// SIS sizes of the ensemble against its members, each over its own
/// confident images, plus the accuracy comparison when labels are present.
EnsembleComparison ensemble_sis_comparison(const EnsembleClassifier& ensemble,
                                           const ImageBatch& batch,
                                           const MaskingStrategy& strategy,
                                           const SisConfig& config);

}  // namespace sis
