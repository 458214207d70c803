#include "sis/subsets.hpp"

#include "sis/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace sis {

SubsetKind parse_subset_kind(const std::string& name) {
  if (name == "backselect") return SubsetKind::Backselect;
  if (name == "random") return SubsetKind::Random;
  throw std::invalid_argument("unknown subset kind: " + name);
}

std::string subset_kind_name(SubsetKind kind) {
  return kind == SubsetKind::Backselect ? "backselect" : "random";
}

int retained_pixel_count(double rho, int pixels) {
  require(rho > 0.0 && rho <= 1.0, "retained fraction must be in (0, 1]");
  require(pixels > 0, "retained_pixel_count: no pixels");
  const int n = static_cast<int>(std::floor(rho * pixels));
  return std::max(1, n);
}

std::string SubsetSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = subset_kind_name(kind);
  j["rho"] = rho;
  j["count"] = count;
  j["mask_file"] = mask_file;
  j["strategy"] = MaskingStrategy::kind_name(strategy);
  if (kind == SubsetKind::Random) {
    j["seed"] = seed;
  } else {
    j["model_id"] = model_id;
    j["mode"] = sis_mode_name(mode);
    j["block_size"] = block_size;
  }
  return j.dump(2) + "\n";
}

SubsetSpec SubsetSpec::from_json(const std::string& text) {
  SubsetSpec spec;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& err) {
    throw DataError(std::string("subset spec: ") + err.what());
  }
  try {
    spec.kind = parse_subset_kind(j.at("kind").get<std::string>());
    spec.rho = j.at("rho").get<double>();
    spec.count = j.at("count").get<int>();
    spec.mask_file = j.at("mask_file").get<std::string>();
    spec.strategy =
        MaskingStrategy::parse_kind(j.at("strategy").get<std::string>());
    if (spec.kind == SubsetKind::Random) {
      spec.seed = j.at("seed").get<std::uint64_t>();
    } else {
      spec.model_id = j.at("model_id").get<std::string>();
      spec.mode = parse_sis_mode(j.at("mode").get<std::string>());
      spec.block_size = j.at("block_size").get<int>();
    }
  } catch (const nlohmann::json::out_of_range& err) {
    throw DataError(std::string("subset spec: ") + err.what());
  } catch (const std::invalid_argument& err) {
    throw DataError(std::string("subset spec: ") + err.what());
  }
  return spec;
}

void save_subset_spec(const SubsetSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << spec.to_json();
}

SubsetSpec load_subset_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return SubsetSpec::from_json(buffer.str());
}

std::vector<Mask> build_backselect_retain_masks(const Classifier& model,
                                                const ImageBatch& batch,
                                                const MaskingStrategy& strategy,
                                                const SisConfig& config,
                                                double rho) {
  require(batch.shape == model.input_shape(),
          "build_backselect_retain_masks: batch shape mismatch");
  const int keep = retained_pixel_count(rho, batch.shape.pixels());

  std::vector<Mask> masks;
  masks.reserve(static_cast<std::size_t>(batch.size()));
  for (int i = 0; i < batch.size(); ++i) {
    const Image image = batch.image(i);
    const RemovalRanking ranking =
        backselect(model, image, strategy, config, -1, nullptr);
    const std::vector<int> order = ranking.flatten();
    require(static_cast<int>(order.size()) == batch.shape.pixels(),
            "build_backselect_retain_masks: incomplete ranking");

    // The removal order ends with the most critical pixels; keep that tail.
    Mask retain(batch.shape.height, batch.shape.width, false);
    for (std::size_t k = order.size() - static_cast<std::size_t>(keep);
         k < order.size(); ++k)
      retain.set(order[k], true);
    masks.push_back(std::move(retain));
  }
  return masks;
}

std::vector<Mask> build_random_retain_masks(InputShape shape, int count,
                                            double rho, std::uint64_t seed) {
  require(count >= 0, "build_random_retain_masks: negative count");
  const int keep = retained_pixel_count(rho, shape.pixels());

  std::vector<Mask> masks;
  masks.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng = sub_rng(seed, "subset", static_cast<std::uint64_t>(i));
    const std::vector<int> kept =
        rng.sample_without_replacement(shape.pixels(), keep);
    Mask retain(shape.height, shape.width, false);
    for (const int pixel : kept) retain.set(pixel, true);
    masks.push_back(std::move(retain));
  }
  return masks;
}

ImageBatch materialize_subsets(const ImageBatch& batch,
                               const std::vector<Mask>& retain,
                               const MaskingStrategy& strategy) {
  require(static_cast<int>(retain.size()) == batch.size(),
          "materialize_subsets: mask count " + std::to_string(retain.size()) +
              " != image count " + std::to_string(batch.size()));
  require(strategy.shape() == batch.shape,
          "materialize_subsets: strategy shape mismatch");

  ImageBatch out = batch;
  for (int i = 0; i < batch.size(); ++i) {
    const Mask& keep = retain[static_cast<std::size_t>(i)];
    require(keep.height() == batch.shape.height &&
                keep.width() == batch.shape.width,
            "materialize_subsets: mask " + std::to_string(i) +
                " shape mismatch");
    require(!keep.empty(),
            "materialize_subsets: mask " + std::to_string(i) +
                " retains no pixels");
    out.values.row(i) =
        apply_mask_values(batch.values.row(i).transpose(),
                          mask_complement(keep), strategy)
            .transpose();
  }
  return out;
}

}  // namespace sis
