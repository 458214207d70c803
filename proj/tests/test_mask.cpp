#include "sis/mask.hpp"

#include "sis/image.hpp"
#include "sis/rng.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

sis::Mask random_mask(int height, int width, sis::Rng& rng) {
  sis::Mask m(height, width);
  for (int q = 0; q < height * width; ++q)
    if (rng.uniform() < 0.5) m.set(q, true);
  return m;
}

sis::NormalizationStats small_stats(sis::InputShape shape, sis::Rng& rng) {
  sis::Matrix values(5, shape.features());
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c)
      values(r, c) = rng.uniform() * 255.0;
  const auto batch = sis::make_batch(shape, values, sis::IntVector::Zero(5),
                                     sis::ValueSpace::RawBytes);
  return sis::compute_normalization_stats(batch);
}

}  // namespace

TEST_CASE("mask count caching and pixel listings") {
  sis::Mask m(3, 4);
  CHECK(m.count() == 0);
  CHECK(m.empty());
  m.set(5, true);
  m.set(7, true);
  m.set(5, true);  // already set, count unchanged
  CHECK(m.count() == 2);
  CHECK(m.masked_pixels() == std::vector<int>{5, 7});
  CHECK(m.unmasked_pixels().size() == 10);
  m.set(5, false);
  CHECK(m.count() == 1);
  CHECK(m.at(1, 3));  // pixel 7 = row 1, col 3
}

TEST_CASE("apply_mask with an empty mask is the identity") {
  sis::Rng rng(1);
  const sis::InputShape shape{4, 4, 3};
  sis::Image image;
  image.shape = shape;
  image.values = sis::Vector::Random(shape.features());
  image.space = sis::ValueSpace::Normalized;

  const auto strategy = sis::MaskingStrategy::zero(shape);
  const auto out = sis::apply_mask(image, sis::Mask(4, 4), strategy);
  CHECK(out.values == image.values);
}

TEST_CASE("apply_mask with a full mask and zero strategy zeroes the image") {
  const sis::InputShape shape{4, 4, 3};
  sis::Image image;
  image.shape = shape;
  image.values = sis::Vector::Random(shape.features());
  image.space = sis::ValueSpace::Normalized;

  const auto out =
      sis::apply_mask(image, sis::Mask(4, 4, true),
                      sis::MaskingStrategy::zero(shape));
  CHECK(out.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("half-masked image equals the entry-wise blend oracle") {
  sis::Rng rng(2);
  const sis::InputShape shape{4, 4, 3};
  const auto stats = small_stats(shape, rng);
  const auto strategy = sis::MaskingStrategy::mean_image(stats);

  sis::Image image;
  image.shape = shape;
  image.values = sis::Vector::Random(shape.features());
  image.space = sis::ValueSpace::Normalized;

  sis::Mask mask(4, 4);
  for (int q = 0; q < 8; ++q) mask.set(q, true);

  const auto out = sis::apply_mask(image, mask, strategy);
  for (int q = 0; q < shape.pixels(); ++q)
    for (int c = 0; c < shape.channels; ++c) {
      const int f = q * shape.channels + c;
      const double want =
          mask.at(q) ? strategy.replacement()(f) : image.values(f);
      CHECK(out.values(f) == want);
    }
}

TEST_CASE("apply_mask is idempotent") {
  sis::Rng rng(3);
  const sis::InputShape shape{5, 5, 3};
  const auto stats = small_stats(shape, rng);
  const auto strategy = sis::MaskingStrategy::channel_mean(stats);

  sis::Image image;
  image.shape = shape;
  image.values = sis::Vector::Random(shape.features());
  image.space = sis::ValueSpace::Normalized;
  const auto mask = random_mask(5, 5, rng);

  const auto once = sis::apply_mask(image, mask, strategy);
  const auto twice = sis::apply_mask(once, mask, strategy);
  CHECK(once.values == twice.values);
}

TEST_CASE("apply_mask rejects shape mismatches") {
  sis::Image image;
  image.shape = {4, 4, 3};
  image.values = sis::Vector::Zero(image.shape.features());
  CHECK_THROWS_AS(sis::apply_mask(image, sis::Mask(3, 3),
                                  sis::MaskingStrategy::zero(image.shape)),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      sis::apply_mask(image, sis::Mask(4, 4),
                      sis::MaskingStrategy::zero(sis::InputShape{5, 5, 3})),
      std::invalid_argument);
}

TEST_CASE("mask algebra basics") {
  sis::Rng rng(4);
  const auto a = random_mask(4, 4, rng);
  const sis::Mask empty(4, 4);

  CHECK(sis::mask_union(a, empty) == a);
  CHECK(sis::mask_difference(a, empty) == a);
  if (!a.empty()) CHECK_FALSE(sis::mask_disjoint(a, a));
  CHECK(sis::mask_disjoint(a, sis::mask_complement(a)));
  CHECK(sis::mask_union(a, sis::mask_complement(a)).full());
}

TEST_CASE("mask algebra matches the entry-wise oracle") {
  sis::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_mask(6, 5, rng);
    const auto b = random_mask(6, 5, rng);
    const auto u = sis::mask_union(a, b);
    const auto d = sis::mask_difference(a, b);
    bool disjoint = true;
    for (int q = 0; q < 30; ++q) {
      CHECK(u.at(q) == (a.at(q) || b.at(q)));
      CHECK(d.at(q) == (a.at(q) && !b.at(q)));
      if (a.at(q) && b.at(q)) disjoint = false;
    }
    CHECK(sis::mask_disjoint(a, b) == disjoint);
  }
}

TEST_CASE("union of disjoint masks adds counts") {
  sis::Mask a(4, 4);
  sis::Mask b(4, 4);
  a.set(0, true);
  a.set(3, true);
  b.set(5, true);
  CHECK(sis::mask_disjoint(a, b));
  CHECK(sis::mask_union(a, b).count() == a.count() + b.count());
}

TEST_CASE("mask algebra rejects shape mismatches") {
  CHECK_THROWS_AS(sis::mask_union(sis::Mask(4, 4), sis::Mask(3, 3)),
                  std::invalid_argument);
}

TEST_CASE("mask container round trips") {
  sis::Rng rng(6);
  std::vector<sis::Mask> masks;
  masks.emplace_back(32, 32);  // empty mask round-trips too
  for (int i = 0; i < 10; ++i) masks.push_back(random_mask(32, 32, rng));

  std::stringstream stream;
  sis::serialize_masks(masks, stream);
  const std::string payload = stream.str();
  CHECK(payload.size() == 17 + masks.size() * 128);

  const auto parsed = sis::parse_masks(stream);
  REQUIRE(parsed.size() == masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) CHECK(parsed[i] == masks[i]);

  // A second serialization of the parsed masks is byte-identical.
  std::stringstream again;
  sis::serialize_masks(parsed, again);
  CHECK(again.str() == payload);
}

TEST_CASE("empty mask container keeps explicit dimensions") {
  std::stringstream stream;
  sis::serialize_masks({}, stream, 32, 32);
  CHECK(stream.str().size() == 17);
  const auto parsed = sis::parse_masks(stream);
  CHECK(parsed.empty());
}

TEST_CASE("empty mask container without dimensions is rejected") {
  std::stringstream stream;
  CHECK_THROWS_AS(sis::serialize_masks({}, stream), std::invalid_argument);
}

TEST_CASE("mask container save and load through files") {
  sis::Rng rng(7);
  std::vector<sis::Mask> masks;
  for (int i = 0; i < 3; ++i) masks.push_back(random_mask(8, 8, rng));
  const auto path =
      (std::filesystem::temp_directory_path() / "sis_test_masks.bin").string();
  sis::save_masks(masks, path);
  const auto loaded = sis::load_masks(path);
  REQUIRE(loaded.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(loaded[i] == masks[i]);
  std::filesystem::remove(path);
}

TEST_CASE("mask parser rejects bad magic with the offset") {
  std::stringstream stream("XXXX rest does not matter");
  CHECK_THROWS_WITH_AS(sis::parse_masks(stream), doctest::Contains("magic"),
                       sis::DataError);
}

TEST_CASE("mask parser rejects truncated payloads with the offset") {
  sis::Rng rng(8);
  std::stringstream stream;
  sis::serialize_masks({random_mask(32, 32, rng)}, stream);
  const std::string bytes = stream.str().substr(0, 100);
  std::stringstream cut(bytes);
  CHECK_THROWS_WITH_AS(sis::parse_masks(cut), doctest::Contains("offset"),
                       sis::DataError);
}

TEST_CASE("masking strategy replacements") {
  sis::Rng rng(9);
  const sis::InputShape shape{4, 4, 3};
  const auto stats = small_stats(shape, rng);

  const auto zero = sis::MaskingStrategy::zero(shape);
  CHECK(zero.replacement().cwiseAbs().maxCoeff() == 0.0);

  const auto mean_image = sis::MaskingStrategy::mean_image(stats);
  CHECK(mean_image.replacement() == stats.mean_image);

  const auto channel_mean = sis::MaskingStrategy::channel_mean(stats);
  for (int q = 0; q < shape.pixels(); ++q)
    for (int c = 0; c < shape.channels; ++c)
      CHECK(channel_mean.replacement()(q * shape.channels + c) ==
            stats.channel_mean(c));
}

TEST_CASE("masking strategy kind names round trip") {
  using Strategy = sis::MaskingStrategy;
  for (const auto kind : {Strategy::Kind::Zero, Strategy::Kind::MeanImage,
                          Strategy::Kind::ChannelMean}) {
    CHECK(Strategy::parse_kind(Strategy::kind_name(kind)) == kind);
  }
  CHECK_THROWS_AS(Strategy::parse_kind("nonsense"), std::invalid_argument);
}
