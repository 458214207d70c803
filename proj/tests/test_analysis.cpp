#include "sis/analysis.hpp"

#include "sis/mlp.hpp"
#include "sis/rng.hpp"
#include "sis/subsets.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace {

sis::Mask random_mask(int height, int width, sis::Rng& rng) {
  sis::Mask m(height, width);
  for (int q = 0; q < height * width; ++q)
    if (rng.uniform() < 0.4) m.set(q, true);
  return m;
}

std::shared_ptr<sis::MlpClassifier> random_linear_model(sis::InputShape shape,
                                                        int classes,
                                                        sis::Rng& rng) {
  sis::Matrix w(shape.features(), classes);
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.normal();
  const sis::MlpArchitecture arch{shape, classes, {}, sis::Activation::ReLU};
  return std::make_shared<sis::MlpClassifier>(
      arch, std::vector<sis::Matrix>{w},
      std::vector<sis::Vector>{sis::Vector::Zero(classes)});
}

sis::ImageBatch random_batch(sis::InputShape shape, int n, sis::Rng& rng,
                             double scale = 1.0, int classes = 2) {
  sis::Matrix values(n, shape.features());
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c)
      values(r, c) = scale * rng.normal();
  sis::IntVector labels(n);
  for (int i = 0; i < n; ++i) labels(i) = rng.uniform_int(0, classes - 1);
  return sis::make_batch(shape, values, labels, sis::ValueSpace::Normalized);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in),
          std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("mean_std matches the two-pass oracle") {
  sis::Rng rng(400);
  std::vector<double> xs;
  for (int i = 0; i < 17; ++i) xs.push_back(rng.normal() * 3.0 + 1.0);
  const auto got = sis::mean_std(xs);
  const auto want = oracle::mean_std(xs);
  CHECK(got.mean == doctest::Approx(want.mean).epsilon(1e-12));
  CHECK(got.stddev == doctest::Approx(want.stddev).epsilon(1e-12));
  CHECK(got.count == 17);
}

TEST_CASE("welch interval matches the hand oracle") {
  sis::Rng rng(401);
  std::vector<double> a;
  std::vector<double> b;
  for (int i = 0; i < 12; ++i) a.push_back(rng.normal() + 0.7);
  for (int i = 0; i < 9; ++i) b.push_back(rng.normal());

  const auto got = sis::welch_mean_difference_ci(a, b);
  const auto want = oracle::welch_ci(a, b);
  REQUIRE(got.valid);
  CHECK(got.difference == doctest::Approx(want.difference).epsilon(1e-12));
  CHECK(got.half_width == doctest::Approx(want.half_width).epsilon(1e-12));
  CHECK(got.low == doctest::Approx(want.difference - want.half_width));
  CHECK(got.high == doctest::Approx(want.difference + want.half_width));
}

TEST_CASE("welch interval needs two points per side") {
  CHECK_FALSE(sis::welch_mean_difference_ci({1.0}, {2.0, 3.0}).valid);
  CHECK_FALSE(sis::welch_mean_difference_ci({1.0, 2.0}, {3.0}).valid);
  CHECK(sis::welch_mean_difference_ci({1.0, 2.0}, {3.0, 4.0}).valid);
}

TEST_CASE("welch interval on identical groups is centered at zero") {
  const std::vector<double> xs = {0.2, 0.4, 0.6, 0.8, 1.0};
  const auto ci = sis::welch_mean_difference_ci(xs, xs);
  REQUIRE(ci.valid);
  CHECK(ci.difference == 0.0);
  CHECK(ci.low == doctest::Approx(-ci.half_width));
  CHECK(ci.high == doctest::Approx(ci.half_width));
}

TEST_CASE("single-sample interval uses z times the standard error") {
  const std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
  const auto ci = sis::mean_ci(xs);
  REQUIRE(ci.valid);
  const auto ms = oracle::mean_std(xs);
  CHECK(ci.difference == doctest::Approx(ms.mean).epsilon(1e-12));
  CHECK(ci.half_width ==
        doctest::Approx(sis::kZ95 * ms.stddev / 2.0).epsilon(1e-12));
}

TEST_CASE("heatmap counts a known mask set exactly") {
  sis::Mask a(2, 2);
  a.set(0, true);
  a.set(3, true);
  sis::Mask b(2, 2);
  b.set(0, true);

  const auto h = sis::heatmap({a, b});
  CHECK(h.mask_count == 2);
  CHECK(h.counts(0, 0) == 2);
  CHECK(h.counts(0, 1) == 0);
  CHECK(h.counts(1, 0) == 0);
  CHECK(h.counts(1, 1) == 1);
  CHECK(h.total_count() == 3);
  CHECK(h.frequencies()(0, 0) == 1.0);
  CHECK(h.frequencies()(1, 1) == 0.5);
}

TEST_CASE("heatmap matches the entry-wise counting oracle") {
  sis::Rng rng(402);
  std::vector<sis::Mask> masks;
  for (int i = 0; i < 25; ++i) masks.push_back(random_mask(5, 7, rng));

  const auto h = sis::heatmap(masks);
  long long mass = 0;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 7; ++c) {
      int count = 0;
      for (const auto& m : masks)
        if (m.at(r, c)) ++count;
      CHECK(h.counts(r, c) == count);
      mass += count;
    }

  // Exact mass identity: total count equals the summed mask cardinalities.
  long long want_mass = 0;
  for (const auto& m : masks) want_mass += m.count();
  CHECK(h.total_count() == mass);
  CHECK(h.total_count() == want_mass);
}

TEST_CASE("heatmap rejects empty or inconsistent input") {
  CHECK_THROWS_AS(sis::heatmap({}), std::invalid_argument);
  CHECK_THROWS_AS(sis::heatmap({sis::Mask(2, 2), sis::Mask(3, 3)}),
                  std::invalid_argument);
}

TEST_CASE("rendered heatmap uses the rounded half-up byte map") {
  sis::Mask a(1, 3);
  a.set(0, true);
  a.set(1, true);
  sis::Mask b(1, 3);
  b.set(0, true);
  const auto h = sis::heatmap({a, b});
  // Frequencies: 1.0, 0.5, 0.0 -> bytes 255, 128, 0.

  const auto dir = std::filesystem::temp_directory_path();
  const auto pgm = (dir / "sis_test_hm.pgm").string();
  const auto csv = (dir / "sis_test_hm.csv").string();
  sis::render_heatmap(h, pgm, csv);

  const std::string bytes = slurp(pgm);
  const std::string header = "P5\n3 1\n255\n";
  REQUIRE(bytes.size() == header.size() + 3);
  CHECK(bytes.substr(0, header.size()) == header);
  CHECK(static_cast<unsigned char>(bytes[header.size() + 0]) == 255);
  CHECK(static_cast<unsigned char>(bytes[header.size() + 1]) == 128);
  CHECK(static_cast<unsigned char>(bytes[header.size() + 2]) == 0);

  const std::string table = slurp(csv);
  CHECK(table.find("1") != std::string::npos);
  CHECK(table.find("0.5") != std::string::npos);
  std::filesystem::remove(pgm);
  std::filesystem::remove(csv);
}

TEST_CASE("confidence drop is zero for a constant model") {
  sis::Vector probs(2);
  probs << 0.7, 0.3;
  const sis::ConstantClassifier model({2, 2, 1}, probs);
  sis::Rng rng(403);
  const auto batch = random_batch({2, 2, 1}, 6, rng);
  const auto drop = sis::confidence_drop(model, batch, batch);
  CHECK(drop.mean == 0.0);
  CHECK(drop.stddev == 0.0);
  CHECK(drop.count == 6);
}

TEST_CASE("confidence drop matches the two-pass oracle") {
  sis::Rng rng(404);
  const sis::InputShape shape{3, 3, 1};
  const auto model = random_linear_model(shape, 3, rng);
  const auto originals = random_batch(shape, 10, rng, 1.0, 3);

  const auto retain = sis::build_random_retain_masks(shape, 10, 0.5, 9);
  const auto strategy = sis::MaskingStrategy::zero(shape);
  const auto subsets = sis::materialize_subsets(originals, retain, strategy);

  const auto drop = sis::confidence_drop(*model, originals, subsets);

  std::vector<double> want;
  for (int i = 0; i < 10; ++i) {
    const sis::Vector full =
        model->predict_proba_one(originals.values.row(i).transpose());
    int pred = 0;
    full.maxCoeff(&pred);
    const sis::Vector sub =
        model->predict_proba_one(subsets.values.row(i).transpose());
    want.push_back(full(pred) - sub(pred));
  }
  const auto ms = oracle::mean_std(want);
  CHECK(drop.mean == doctest::Approx(ms.mean).epsilon(1e-12));
  CHECK(drop.stddev == doctest::Approx(ms.stddev).epsilon(1e-12));
  CHECK(drop.count == 10);
}

TEST_CASE("confidence drop rejects mismatched batches") {
  sis::Rng rng(405);
  const auto model = random_linear_model({2, 2, 1}, 2, rng);
  const auto a = random_batch({2, 2, 1}, 3, rng);
  const auto b = random_batch({2, 2, 1}, 4, rng);
  CHECK_THROWS_AS(sis::confidence_drop(*model, a, b), std::invalid_argument);
}

TEST_CASE("transfer matrix reproduces hand-computed accuracies") {
  sis::Rng rng(406);
  const sis::InputShape shape{3, 3, 1};
  std::vector<std::shared_ptr<const sis::Classifier>> models = {
      random_linear_model(shape, 2, rng), random_linear_model(shape, 2, rng)};

  std::vector<sis::ImageBatch> subsets;
  subsets.push_back(random_batch(shape, 20, rng));
  subsets.push_back(random_batch(shape, 20, rng));

  const auto matrix = sis::transfer_matrix(models, subsets);
  REQUIRE(matrix.accuracy_pct.rows() == 2);
  REQUIRE(matrix.accuracy_pct.cols() == 2);

  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      int hits = 0;
      for (int n = 0; n < 20; ++n) {
        const sis::Vector p = models[static_cast<std::size_t>(j)]
                                  ->predict_proba_one(
                                      subsets[static_cast<std::size_t>(i)]
                                          .values.row(n)
                                          .transpose());
        int pred = 0;
        p.maxCoeff(&pred);
        if (pred == subsets[static_cast<std::size_t>(i)].labels(n)) ++hits;
      }
      CHECK(matrix.accuracy_pct(i, j) ==
            doctest::Approx(100.0 * hits / 20.0).epsilon(1e-12));
    }
}

TEST_CASE("transfer matrix with identical models has equal rows") {
  sis::Rng rng(407);
  const sis::InputShape shape{2, 2, 1};
  const auto model = random_linear_model(shape, 2, rng);
  std::vector<std::shared_ptr<const sis::Classifier>> models = {model, model};
  std::vector<sis::ImageBatch> subsets;
  subsets.push_back(random_batch(shape, 15, rng));
  subsets.push_back(random_batch(shape, 15, rng));

  const auto matrix = sis::transfer_matrix(models, subsets);
  CHECK(matrix.accuracy_pct(0, 0) == matrix.accuracy_pct(0, 1));
  CHECK(matrix.accuracy_pct(1, 0) == matrix.accuracy_pct(1, 1));
}

TEST_CASE("transfer matrix validates its inputs") {
  sis::Rng rng(408);
  const auto model = random_linear_model({2, 2, 1}, 2, rng);
  std::vector<std::shared_ptr<const sis::Classifier>> models = {model};
  std::vector<sis::ImageBatch> none;
  CHECK_THROWS_AS(sis::transfer_matrix(models, none), std::invalid_argument);
}

TEST_CASE("size curves gate by confidence and stay internally consistent") {
  sis::Rng rng(409);
  const sis::InputShape shape{3, 3, 1};
  const auto model = random_linear_model(shape, 2, rng);
  const auto batch = random_batch(shape, 30, rng, 2.0);
  const auto strategy = sis::MaskingStrategy::zero(shape);

  sis::SisConfig config;
  const std::vector<double> taus = {0.6, 0.8, 0.95};
  const auto stats = sis::sis_size_curves(*model, batch, taus, strategy,
                                          config);
  REQUIRE(stats.points.size() == 3);

  int previous_n = batch.size() + 1;
  for (std::size_t t = 0; t < taus.size(); ++t) {
    const auto& point = stats.points[t];
    CHECK(point.tau == taus[t]);
    // Higher floors only shrink the eligible set.
    CHECK(point.n <= previous_n);
    previous_n = point.n;
    if (point.empty) {
      CHECK(point.n == 0);
      continue;
    }
    CHECK(point.n == point.n_correct + point.n_incorrect);
    CHECK(point.mean_size_fraction >= 0.0);
    CHECK(point.mean_size_fraction <= 1.0);
    if (point.n_correct > 0 && point.n_incorrect > 0) {
      const double mixed =
          (point.n_correct * point.mean_fraction_correct +
           point.n_incorrect * point.mean_fraction_incorrect) /
          point.n;
      CHECK(point.mean_size_fraction == doctest::Approx(mixed).epsilon(1e-12));
    }
  }
}

TEST_CASE("size curves match a per-image recomputation") {
  sis::Rng rng(410);
  const sis::InputShape shape{3, 3, 1};
  const auto model = random_linear_model(shape, 2, rng);
  const auto batch = random_batch(shape, 25, rng, 2.0);
  const auto strategy = sis::MaskingStrategy::zero(shape);

  sis::SisConfig config;
  const std::vector<double> taus = {0.7, 0.9};
  const auto stats = sis::sis_size_curves(*model, batch, taus, strategy,
                                          config);

  for (std::size_t t = 0; t < taus.size(); ++t) {
    std::vector<double> fractions;
    for (int i = 0; i < batch.size(); ++i) {
      const auto image = batch.image(i);
      const sis::Vector probs = model->predict_proba_one(image.values);
      int pred = 0;
      const double conf = probs.maxCoeff(&pred);
      if (conf < taus[t]) continue;
      sis::SisConfig at = config;
      at.tau = taus[t];
      const auto ranking =
          sis::backselect(*model, image, strategy, at, pred);
      const auto result = sis::find_sis(*model, image, strategy, at, ranking);
      REQUIRE(result.has_value());
      fractions.push_back(static_cast<double>(result->size()) /
                          shape.pixels());
    }
    const auto& point = stats.points[t];
    CHECK(point.n == static_cast<int>(fractions.size()));
    if (fractions.empty()) continue;
    const auto ms = oracle::mean_std(fractions);
    CHECK(point.mean_size_fraction ==
          doctest::Approx(ms.mean).epsilon(1e-12));
  }
}

TEST_CASE("size curves require strictly ascending thresholds") {
  sis::Rng rng(411);
  const auto model = random_linear_model({2, 2, 1}, 2, rng);
  const auto batch = random_batch({2, 2, 1}, 4, rng);
  const auto strategy = sis::MaskingStrategy::zero({2, 2, 1});
  sis::SisConfig config;
  CHECK_THROWS_AS(
      sis::sis_size_curves(*model, batch, {0.9, 0.7}, strategy, config),
      std::invalid_argument);
  CHECK_THROWS_AS(sis::sis_size_curves(*model, batch, {}, strategy, config),
                  std::invalid_argument);
}

TEST_CASE("singleton ensemble comparison is an exact tie") {
  sis::Rng rng(412);
  const sis::InputShape shape{3, 3, 1};
  const auto member = random_linear_model(shape, 2, rng);
  const sis::EnsembleClassifier ensemble({member});
  const auto batch = random_batch(shape, 15, rng, 2.0);
  const auto strategy = sis::MaskingStrategy::zero(shape);

  sis::SisConfig config;
  config.tau = 0.8;
  const auto cmp =
      sis::ensemble_sis_comparison(ensemble, batch, strategy, config);
  CHECK(cmp.ensemble_accuracy_pct == cmp.mean_member_accuracy_pct);
  CHECK(cmp.ensemble_mean_fraction == cmp.member_mean_fraction);
  CHECK(cmp.difference == 0.0);
  CHECK(cmp.ensemble_n == cmp.member_n);
}

TEST_CASE("constant ensemble members give empty SIS on both sides") {
  sis::Vector probs(2);
  probs << 0.995, 0.005;
  auto a = std::make_shared<sis::ConstantClassifier>(
      sis::InputShape{2, 2, 1}, probs);
  const sis::EnsembleClassifier ensemble({a, a});
  sis::Rng rng(413);
  const auto batch = random_batch({2, 2, 1}, 5, rng);
  const auto strategy = sis::MaskingStrategy::zero({2, 2, 1});

  sis::SisConfig config;
  config.tau = 0.99;
  const auto cmp =
      sis::ensemble_sis_comparison(ensemble, batch, strategy, config);
  CHECK(cmp.ensemble_mean_fraction == 0.0);
  CHECK(cmp.member_mean_fraction == 0.0);
  CHECK(cmp.ensemble_n == 5);
  CHECK(cmp.member_n == 10);
}
