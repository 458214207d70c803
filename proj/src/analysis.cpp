#include "sis/analysis.hpp"

#include "sis/csv.hpp"

#include <cmath>
#include <fstream>

namespace sis {

MeanStd mean_std(const std::vector<double>& values) {
  require(!values.empty(), "mean_std: empty sample");
  MeanStd out;
  out.count = static_cast<int>(values.size());
  double sum = 0.0;
  for (const double v : values) sum += v;
  out.mean = sum / static_cast<double>(out.count);
  if (out.count > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(out.count - 1));
  }
  return out;
}

WelchCi welch_mean_difference_ci(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  WelchCi ci;
  if (a.size() < 2 || b.size() < 2) return ci;
  const MeanStd sa = mean_std(a);
  const MeanStd sb = mean_std(b);
  ci.difference = sa.mean - sb.mean;
  const double se =
      std::sqrt(sa.stddev * sa.stddev / static_cast<double>(sa.count) +
                sb.stddev * sb.stddev / static_cast<double>(sb.count));
  ci.half_width = kZ95 * se;
  ci.low = ci.difference - ci.half_width;
  ci.high = ci.difference + ci.half_width;
  ci.valid = true;
  return ci;
}

WelchCi mean_ci(const std::vector<double>& values) {
  WelchCi ci;
  if (values.size() < 2) return ci;
  const MeanStd s = mean_std(values);
  ci.difference = s.mean;
  ci.half_width = kZ95 * s.stddev / std::sqrt(static_cast<double>(s.count));
  ci.low = ci.difference - ci.half_width;
  ci.high = ci.difference + ci.half_width;
  ci.valid = true;
  return ci;
}

Matrix Heatmap::frequencies() const {
  require(mask_count > 0, "Heatmap: no masks");
  return counts.cast<double>() / static_cast<double>(mask_count);
}

long long Heatmap::total_count() const {
  long long total = 0;
  for (Eigen::Index r = 0; r < counts.rows(); ++r)
    for (Eigen::Index c = 0; c < counts.cols(); ++c) total += counts(r, c);
  return total;
}

Heatmap heatmap(const std::vector<Mask>& masks) {
  require(!masks.empty(), "heatmap: empty mask list");
  const int height = masks.front().height();
  const int width = masks.front().width();

  Heatmap h;
  h.counts = Eigen::MatrixXi::Zero(height, width);
  h.mask_count = static_cast<int>(masks.size());
  for (const Mask& m : masks) {
    require(m.height() == height && m.width() == width,
            "heatmap: inconsistent mask shapes");
    for (int p = 0; p < m.pixels(); ++p)
      if (m.at(p)) h.counts(p / width, p % width) += 1;
  }
  return h;
}

void render_heatmap(const Heatmap& h, const std::string& pgm_path,
                    const std::string& csv_path) {
  require(h.mask_count > 0, "render_heatmap: no masks");
  const Matrix freq = h.frequencies();

  std::ofstream pgm(pgm_path, std::ios::binary);
  if (!pgm) throw DataError("cannot open " + pgm_path + " for writing");
  pgm << "P5\n" << freq.cols() << " " << freq.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < freq.rows(); ++r)
    for (Eigen::Index c = 0; c < freq.cols(); ++c)
      pgm.put(static_cast<char>(
          static_cast<unsigned char>(std::floor(freq(r, c) * 255.0 + 0.5))));
  if (!pgm) throw DataError("short write to " + pgm_path);

  std::vector<std::string> header;
  header.reserve(static_cast<std::size_t>(freq.cols()));
  for (Eigen::Index c = 0; c < freq.cols(); ++c)
    header.push_back("col" + std::to_string(c));
  CsvWriter csv(csv_path, header);
  for (Eigen::Index r = 0; r < freq.rows(); ++r) {
    for (Eigen::Index c = 0; c < freq.cols(); ++c) csv.cell(freq(r, c));
    csv.end_row();
  }
}

ConfidenceDrop confidence_drop(const Classifier& model,
                               const ImageBatch& originals,
                               const ImageBatch& subsets) {
  require(originals.shape == model.input_shape(),
          "confidence_drop: batch shape mismatch");
  require(subsets.shape == originals.shape &&
              subsets.size() == originals.size(),
          "confidence_drop: originals and subsets are misaligned");
  require(originals.size() > 0, "confidence_drop: empty batch");

  const Matrix p_full = model.predict_proba(originals.values);
  const Matrix p_sub = model.predict_proba(subsets.values);

  std::vector<double> drops;
  drops.reserve(static_cast<std::size_t>(originals.size()));
  for (int i = 0; i < originals.size(); ++i) {
    Eigen::Index predicted;
    p_full.row(i).maxCoeff(&predicted);
    drops.push_back(p_full(i, predicted) - p_sub(i, predicted));
  }
  const MeanStd s = mean_std(drops);
  return ConfidenceDrop{s.mean, s.stddev, s.count};
}

TransferMatrix transfer_matrix(
    const std::vector<std::shared_ptr<const Classifier>>& models,
    const std::vector<ImageBatch>& subsets) {
  require(!models.empty(), "transfer_matrix: no models");
  require(models.size() == subsets.size(),
          "transfer_matrix: need one subset dataset per model");
  const int n = static_cast<int>(models.size());
  for (const auto& m : models) {
    require(m != nullptr, "transfer_matrix: null model");
    require(m->input_shape() == models[0]->input_shape() &&
                m->num_classes() == models[0]->num_classes(),
            "transfer_matrix: models disagree on shape or classes");
  }
  for (const auto& s : subsets) {
    require(s.shape == models[0]->input_shape(),
            "transfer_matrix: subset shape mismatch");
    require(s.labeled(), "transfer_matrix: subsets must be labeled");
  }

  TransferMatrix out;
  out.accuracy_pct = Matrix::Zero(n, n);
  for (const auto& m : models) out.model_ids.push_back(m->describe());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Matrix probs =
          models[static_cast<std::size_t>(j)]->predict_proba(
              subsets[static_cast<std::size_t>(i)].values);
      out.accuracy_pct(i, j) =
          accuracy_pct(probs, subsets[static_cast<std::size_t>(i)].labels);
    }
  }
  return out;
}

namespace {

struct ImageCurveState {
  int target = -1;
  double confidence = 0.0;  // on the intact image
  bool correct = false;
  RemovalRanking ranking;
};

}  // namespace

SizeStats sis_size_curves(const Classifier& model, const ImageBatch& batch,
                          const std::vector<double>& taus,
                          const MaskingStrategy& strategy,
                          const SisConfig& config) {
  require(!taus.empty(), "sis_size_curves: empty threshold grid");
  for (std::size_t i = 1; i < taus.size(); ++i)
    require(taus[i - 1] < taus[i],
            "sis_size_curves: thresholds must be strictly ascending");
  require(batch.labeled(), "sis_size_curves: batch must be labeled");
  require(batch.shape == model.input_shape(),
          "sis_size_curves: batch shape mismatch");
  require(batch.size() > 0, "sis_size_curves: empty batch");

  const double pixels = static_cast<double>(batch.shape.pixels());
  const Matrix probs = model.predict_proba(batch.values);

  // One ranking per image, computed at most once and shared by every tau.
  std::vector<ImageCurveState> states(static_cast<std::size_t>(batch.size()));
  for (int i = 0; i < batch.size(); ++i) {
    ImageCurveState& st = states[static_cast<std::size_t>(i)];
    Eigen::Index predicted;
    probs.row(i).maxCoeff(&predicted);
    st.target = static_cast<int>(predicted);
    st.confidence = probs(i, predicted);
    st.correct = st.target == batch.labels(i);
    if (st.confidence >= taus.front()) {
      st.ranking = backselect(model, batch.image(i), strategy, config,
                              st.target, nullptr);
    }
  }

  SizeStats stats;
  for (const double tau : taus) {
    SizeCurvePoint point;
    point.tau = tau;
    SisConfig tau_config = config;
    tau_config.tau = tau;

    std::vector<double> fractions;
    std::vector<double> correct_fr, incorrect_fr;
    std::vector<double> correct_conf, incorrect_conf;
    for (int i = 0; i < batch.size(); ++i) {
      const ImageCurveState& st = states[static_cast<std::size_t>(i)];
      if (st.confidence < tau) continue;
      const std::optional<SisResult> sis = find_sis(
          model, batch.image(i), strategy, tau_config, st.ranking);
      require(sis.has_value(),
              "sis_size_curves: find_sis failed above the confidence floor");
      const double fraction = static_cast<double>(sis->size()) / pixels;
      fractions.push_back(fraction);
      if (st.correct) {
        correct_fr.push_back(fraction);
        correct_conf.push_back(st.confidence);
      } else {
        incorrect_fr.push_back(fraction);
        incorrect_conf.push_back(st.confidence);
      }
    }

    if (!fractions.empty()) {
      point.empty = false;
      point.n = static_cast<int>(fractions.size());
      const MeanStd s = mean_std(fractions);
      point.mean_size_fraction = s.mean;
      point.ci_half_width = mean_ci(fractions).half_width;
      point.n_correct = static_cast<int>(correct_fr.size());
      point.n_incorrect = static_cast<int>(incorrect_fr.size());
      if (!correct_fr.empty()) {
        point.mean_fraction_correct = mean_std(correct_fr).mean;
        point.mean_confidence_correct = mean_std(correct_conf).mean;
      }
      if (!incorrect_fr.empty()) {
        point.mean_fraction_incorrect = mean_std(incorrect_fr).mean;
        point.mean_confidence_incorrect = mean_std(incorrect_conf).mean;
      }
      if (!correct_fr.empty() && !incorrect_fr.empty() &&
          point.mean_fraction_incorrect > 0.0) {
        point.pct_increase = 100.0 *
                             (point.mean_fraction_correct -
                              point.mean_fraction_incorrect) /
                             point.mean_fraction_incorrect;
      }
      point.group_diff = welch_mean_difference_ci(correct_fr, incorrect_fr);
    }
    stats.points.push_back(point);
  }
  return stats;
}

namespace {

// Mean SIS size fraction of one model over its own confident images.
std::vector<double> model_size_fractions(const Classifier& model,
                                         const ImageBatch& batch,
                                         const MaskingStrategy& strategy,
                                         const SisConfig& config) {
  std::vector<double> fractions;
  const double pixels = static_cast<double>(batch.shape.pixels());
  for (const SisBatchEntry& entry :
       sis_batch(model, batch, strategy, config)) {
    if (entry.skipped || !entry.result) continue;
    fractions.push_back(static_cast<double>(entry.result->size()) / pixels);
  }
  return fractions;
}

}  // namespace

EnsembleComparison ensemble_sis_comparison(const EnsembleClassifier& ensemble,
                                           const ImageBatch& batch,
                                           const MaskingStrategy& strategy,
                                           const SisConfig& config) {
  require(batch.shape == ensemble.input_shape(),
          "ensemble_sis_comparison: batch shape mismatch");

  EnsembleComparison out;
  const std::vector<double> ensemble_fr =
      model_size_fractions(ensemble, batch, strategy, config);
  out.ensemble_n = static_cast<int>(ensemble_fr.size());
  if (!ensemble_fr.empty())
    out.ensemble_mean_fraction = mean_std(ensemble_fr).mean;

  std::vector<double> pooled;
  double member_mean_sum = 0.0;
  int members_with_sis = 0;
  for (int m = 0; m < ensemble.size(); ++m) {
    const std::vector<double> fr =
        model_size_fractions(ensemble.member(m), batch, strategy, config);
    pooled.insert(pooled.end(), fr.begin(), fr.end());
    if (!fr.empty()) {
      member_mean_sum += mean_std(fr).mean;
      ++members_with_sis;
    }
  }
  out.member_n = static_cast<int>(pooled.size());
  if (members_with_sis > 0)
    out.member_mean_fraction =
        member_mean_sum / static_cast<double>(members_with_sis);
  out.difference = out.ensemble_mean_fraction - out.member_mean_fraction;
  out.ci = welch_mean_difference_ci(ensemble_fr, pooled);

  if (batch.labeled()) {
    out.ensemble_accuracy_pct =
        accuracy_pct(ensemble.predict_proba(batch.values), batch.labels);
    double sum = 0.0;
    for (int m = 0; m < ensemble.size(); ++m)
      sum += accuracy_pct(ensemble.member(m).predict_proba(batch.values),
                          batch.labels);
    out.mean_member_accuracy_pct = sum / static_cast<double>(ensemble.size());
  }
  return out;
}

}  // namespace sis
