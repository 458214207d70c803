#include "sis/subsets.hpp"

#include "sis/mlp.hpp"
#include "sis/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <memory>
#include <set>
#include <vector>

namespace {

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

sis::ImageBatch random_batch(sis::InputShape shape, int n, sis::Rng& rng) {
  sis::Matrix values(n, shape.features());
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c)
      values(r, c) = rng.normal();
  return sis::make_batch(shape, values, sis::IntVector::Zero(n),
                         sis::ValueSpace::Normalized);
}

}  // namespace

TEST_CASE("retained pixel count rounds down with a floor of one") {
  CHECK(sis::retained_pixel_count(0.05, 1024) == 51);
  CHECK(sis::retained_pixel_count(1.0, 1024) == 1024);
  CHECK(sis::retained_pixel_count(0.0005, 1024) == 1);
  CHECK(sis::retained_pixel_count(0.3, 12) == 3);
  CHECK_THROWS_AS(sis::retained_pixel_count(0.0, 100), std::invalid_argument);
  CHECK_THROWS_AS(sis::retained_pixel_count(1.5, 100), std::invalid_argument);
}

TEST_CASE("subset spec json round trips for both kinds") {
  sis::SubsetSpec random_spec;
  random_spec.kind = sis::SubsetKind::Random;
  random_spec.rho = 0.05;
  random_spec.seed = 99;
  random_spec.strategy = sis::MaskingStrategy::Kind::ChannelMean;
  random_spec.mask_file = "masks.bin";
  random_spec.count = 40;
  const auto r = sis::SubsetSpec::from_json(random_spec.to_json());
  CHECK(r.kind == sis::SubsetKind::Random);
  CHECK(r.rho == 0.05);
  CHECK(r.seed == 99);
  CHECK(r.strategy == sis::MaskingStrategy::Kind::ChannelMean);
  CHECK(r.mask_file == "masks.bin");
  CHECK(r.count == 40);

  sis::SubsetSpec bs_spec;
  bs_spec.kind = sis::SubsetKind::Backselect;
  bs_spec.rho = 0.25;
  bs_spec.model_id = "mlp#1";
  bs_spec.mode = sis::SisMode::BatchedGradient;
  bs_spec.block_size = 16;
  bs_spec.mask_file = "m.bin";
  bs_spec.count = 7;
  const auto b = sis::SubsetSpec::from_json(bs_spec.to_json());
  CHECK(b.kind == sis::SubsetKind::Backselect);
  CHECK(b.model_id == "mlp#1");
  CHECK(b.mode == sis::SisMode::BatchedGradient);
  CHECK(b.block_size == 16);
}

TEST_CASE("subset spec parsing rejects malformed input") {
  CHECK_THROWS_AS(sis::SubsetSpec::from_json("not json"), sis::DataError);
  CHECK_THROWS_AS(sis::SubsetSpec::from_json("{}"), sis::DataError);
  CHECK_THROWS_AS(
      sis::SubsetSpec::from_json(
          R"({"kind":"mystery","rho":0.1,"mask_file":"m","count":1})"),
      sis::DataError);
}

TEST_CASE("subset spec save and load through files") {
  sis::SubsetSpec spec;
  spec.kind = sis::SubsetKind::Random;
  spec.rho = 0.1;
  spec.seed = 3;
  spec.mask_file = "masks.bin";
  spec.count = 5;
  const auto path =
      (std::filesystem::temp_directory_path() / "sis_test_spec.json").string();
  sis::save_subset_spec(spec, path);
  const auto loaded = sis::load_subset_spec(path);
  CHECK(loaded.rho == 0.1);
  CHECK(loaded.seed == 3);
  std::filesystem::remove(path);
}

TEST_CASE("backselect retain masks keep the most critical ranking tail") {
  sis::Rng rng(300);
  const sis::InputShape shape{4, 3, 1};
  const auto model = random_linear_model(shape, 2, rng);
  const auto batch = random_batch(shape, 6, rng);
  const auto strategy = sis::MaskingStrategy::zero(shape);

  sis::SisConfig config;
  const double rho = 0.3;  // 3 of 12 pixels
  const auto masks =
      sis::build_backselect_retain_masks(*model, batch, strategy, config, rho);
  REQUIRE(masks.size() == 6);

  for (int i = 0; i < 6; ++i) {
    CHECK(masks[static_cast<std::size_t>(i)].count() == 3);

    const auto image = batch.image(i);
    const sis::Vector probs = model->predict_proba_one(image.values);
    int target = 0;
    probs.maxCoeff(&target);
    const auto blocks =
        oracle::backselect_blocks(*model, image, strategy, target, 1);
    std::vector<int> order;
    for (const auto& b : blocks) order.insert(order.end(), b.begin(), b.end());
    std::vector<int> want(order.end() - 3, order.end());
    std::sort(want.begin(), want.end());
    CHECK(masks[static_cast<std::size_t>(i)].masked_pixels() == want);
  }
}

TEST_CASE("backselect retain masks nest across rho") {
  sis::Rng rng(301);
  const sis::InputShape shape{4, 4, 1};
  const auto model = random_linear_model(shape, 3, rng);
  const auto batch = random_batch(shape, 4, rng);
  const auto strategy = sis::MaskingStrategy::zero(shape);

  sis::SisConfig config;
  const auto small =
      sis::build_backselect_retain_masks(*model, batch, strategy, config, 0.2);
  const auto large =
      sis::build_backselect_retain_masks(*model, batch, strategy, config, 0.5);
  for (std::size_t i = 0; i < small.size(); ++i) {
    // Every pixel retained at rho=0.2 is retained at rho=0.5.
    CHECK(sis::mask_difference(small[i], large[i]).empty());
  }
}

TEST_CASE("random retain masks are deterministic with exact counts") {
  const sis::InputShape shape{4, 4, 1};
  const auto a = sis::build_random_retain_masks(shape, 8, 0.25, 11);
  const auto b = sis::build_random_retain_masks(shape, 8, 0.25, 11);
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == b[i]);
    CHECK(a[i].count() == 4);
  }

  const auto c = sis::build_random_retain_masks(shape, 8, 0.25, 12);
  int identical = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] == c[i]) ++identical;
  CHECK(identical < 8);
}

TEST_CASE("random retention frequency concentrates around rho") {
  const sis::InputShape shape{4, 4, 1};
  const int n = 2000;
  const double rho = 0.25;
  const auto masks = sis::build_random_retain_masks(shape, n, rho, 77);

  // retained_pixel_count(0.25, 16) = 4, so the marginal is exactly 0.25.
  const double sigma = std::sqrt(rho * (1.0 - rho) / n);
  for (int q = 0; q < 16; ++q) {
    int kept = 0;
    for (const auto& m : masks)
      if (m.at(q)) ++kept;
    CHECK(std::abs(static_cast<double>(kept) / n - rho) <= 3.0 * sigma);
  }
}

TEST_CASE("materialize with identity masks reproduces the originals") {
  sis::Rng rng(302);
  const sis::InputShape shape{3, 3, 2};
  const auto batch = random_batch(shape, 5, rng);
  const auto strategy = sis::MaskingStrategy::zero(shape);

  const auto retain = sis::build_random_retain_masks(shape, 5, 1.0, 0);
  for (const auto& m : retain) CHECK(m.full());
  const auto out = sis::materialize_subsets(batch, retain, strategy);
  CHECK(out.values == batch.values);
  CHECK((out.labels.array() == batch.labels.array()).all());
}

TEST_CASE("materialized pixels match the entry-wise blend oracle") {
  sis::Rng rng(303);
  const sis::InputShape shape{3, 3, 2};
  const auto batch = random_batch(shape, 4, rng);
  const auto strategy = sis::MaskingStrategy::zero(shape);
  const auto retain = sis::build_random_retain_masks(shape, 4, 0.4, 5);

  const auto out = sis::materialize_subsets(batch, retain, strategy);
  for (int i = 0; i < 4; ++i)
    for (int q = 0; q < shape.pixels(); ++q)
      for (int c = 0; c < shape.channels; ++c) {
        const int f = q * shape.channels + c;
        const double want = retain[static_cast<std::size_t>(i)].at(q)
                                ? batch.values(i, f)
                                : strategy.replacement()(f);
        CHECK(out.values(i, f) == want);
      }
}

TEST_CASE("materialize rejects misaligned or empty retain masks") {
  sis::Rng rng(304);
  const sis::InputShape shape{3, 3, 1};
  const auto batch = random_batch(shape, 3, rng);
  const auto strategy = sis::MaskingStrategy::zero(shape);

  auto retain = sis::build_random_retain_masks(shape, 2, 0.5, 1);
  CHECK_THROWS_AS(sis::materialize_subsets(batch, retain, strategy),
                  std::invalid_argument);

  auto empty = sis::build_random_retain_masks(shape, 3, 0.5, 1);
  empty[1] = sis::Mask(3, 3);
  CHECK_THROWS_AS(sis::materialize_subsets(batch, empty, strategy),
                  std::invalid_argument);
}

TEST_CASE("backselect and random subsets share per-image retain counts") {
  sis::Rng rng(305);
  const sis::InputShape shape{4, 3, 1};
  const auto model = random_linear_model(shape, 2, rng);
  const auto batch = random_batch(shape, 3, rng);
  const auto strategy = sis::MaskingStrategy::zero(shape);

  sis::SisConfig config;
  const auto bs =
      sis::build_backselect_retain_masks(*model, batch, strategy, config, 0.4);
  const auto rd = sis::build_random_retain_masks(shape, 3, 0.4, 2);
  for (std::size_t i = 0; i < bs.size(); ++i)
    CHECK(bs[i].count() == rd[i].count());
}
