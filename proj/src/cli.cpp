#include "sis/cli.hpp"

#include "sis/analysis.hpp"
#include "sis/cifar10.hpp"
#include "sis/csv.hpp"
#include "sis/image.hpp"
#include "sis/mlp.hpp"
#include "sis/select.hpp"
#include "sis/subsets.hpp"
#include "sis/synth.hpp"
#include "sis/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

namespace sis {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

/// Every path flag resolves against the run directory unless absolute, so a
/// run directory is self-contained and a manifest never embeds it.
struct OutDir {
  fs::path dir;

  explicit OutDir(const std::string& path) : dir(path) {
    fs::create_directories(dir);
  }

  std::string resolve(const std::string& path) const {
    fs::path p(path);
    return p.is_absolute() ? p.string() : (dir / p).string();
  }

  std::vector<std::string> resolve(const std::vector<std::string>& paths) const {
    std::vector<std::string> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(resolve(p));
    return out;
  }
};

void write_manifest(const OutDir& out, const std::string& subcommand,
                    const json& config) {
  json manifest;
  manifest["subcommand"] = subcommand;
  manifest["config"] = config;
  const std::string path = out.resolve("manifest.json");
  std::ofstream file(path);
  if (!file) throw DataError("cannot open " + path + " for writing");
  file << manifest.dump(2) << "\n";
  if (!file) throw DataError("short write to " + path);
}

ImageBatch head(const ImageBatch& batch, int n) {
  if (n <= 0 || n >= batch.size()) return batch;
  ImageBatch out = batch;
  out.values = batch.values.topRows(n);
  out.labels = batch.labels.head(n);
  return out;
}

std::shared_ptr<MlpClassifier> load_model(const std::string& path) {
  auto model = load_mlp(path);
  if (!model->stats)
    throw DataError("checkpoint " + path +
                    " carries no normalization statistics");
  return model;
}

ImageBatch normalized_for(const MlpClassifier& model, const ImageBatch& raw) {
  return normalize(raw, *model.stats, model.centering);
}

MaskingStrategy strategy_for(const std::string& name, InputShape shape,
                             const NormalizationStats* stats) {
  return MaskingStrategy::make(MaskingStrategy::parse_kind(name), shape,
                               stats);
}

// ---------------------------------------------------------------------------
// synth-data

struct SynthDataArgs {
  std::string kind = "templates";
  std::string name = "data.bin";
  std::string split = "train";
  int n = 1000;
  std::uint64_t seed = 0;
  int classes = 10;
  double amplitude = 40.0;
  double noise = 45.0;
  int blur_radius = 2;
  bool sign_flip = true;
  std::uint64_t template_seed = 7;
  double margin = 2.0;
  double byte_scale = 32.0;

  json to_json() const {
    return json{{"kind", kind},
                {"name", name},
                {"split", split},
                {"n", n},
                {"seed", seed},
                {"classes", classes},
                {"amplitude", amplitude},
                {"noise", noise},
                {"blur_radius", blur_radius},
                {"sign_flip", sign_flip},
                {"template_seed", template_seed},
                {"margin", margin},
                {"byte_scale", byte_scale}};
  }

  void from_json(const json& j) {
    kind = j.value("kind", kind);
    name = j.value("name", name);
    split = j.value("split", split);
    n = j.value("n", n);
    seed = j.value("seed", seed);
    classes = j.value("classes", classes);
    amplitude = j.value("amplitude", amplitude);
    noise = j.value("noise", noise);
    blur_radius = j.value("blur_radius", blur_radius);
    sign_flip = j.value("sign_flip", sign_flip);
    template_seed = j.value("template_seed", template_seed);
    margin = j.value("margin", margin);
    byte_scale = j.value("byte_scale", byte_scale);
  }
};

int run_synth_data(const SynthDataArgs& args, const OutDir& out,
                   std::ostream& log) {
  write_manifest(out, "synth-data", args.to_json());
  require(args.n >= 1, "synth-data: need at least one record");

  ImageBatch batch{kCifarShape, Matrix(), IntVector(), ValueSpace::RawBytes};
  if (args.kind == "templates") {
    TemplateDataConfig config;
    config.classes = args.classes;
    config.amplitude = args.amplitude;
    config.noise = args.noise;
    config.blur_radius = args.blur_radius;
    config.sign_flip = args.sign_flip;
    config.template_seed = args.template_seed;
    batch = synth_template_dataset(args.n, kCifarShape, config, args.seed);
  } else {
    const SynthKind kind = parse_synth_kind(args.kind);
    const ImageBatch values =
        synth_dataset(kind, args.n, kCifarShape, args.seed, nullptr,
                      args.margin);
    batch = values;
    batch.space = ValueSpace::RawBytes;
    batch.values = (128.0 + args.byte_scale * values.values.array())
                       .round()
                       .max(0.0)
                       .min(255.0)
                       .matrix();
  }

  const std::string data_path = out.resolve(args.name);
  write_cifar10(batch, data_path);

  auto [reloaded, manifest] = load_cifar10({data_path}, args.split);
  manifest.files[0].path = args.name;  // keep the manifest run-dir relative
  save_dataset_manifest(manifest, out.resolve("dataset_manifest.json"));

  log << "wrote " << manifest.total_records << " records to " << args.name
      << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// shared training knobs (train, retrain)

struct TrainKnobs {
  std::vector<std::string> data;
  std::string hidden = "96";
  std::string activation = "relu";
  std::string centering = "channel-mean";
  int epochs = 200;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::string decay_epochs = "60,120,160";
  double decay_factor = 5.0;
  std::uint64_t seed = 0;
  bool augment = false;
  std::string id;
  std::string model_out = "model.net";

  json to_json() const {
    return json{{"data", data},
                {"hidden", hidden},
                {"activation", activation},
                {"centering", centering},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"lr", lr},
                {"momentum", momentum},
                {"weight_decay", weight_decay},
                {"decay_epochs", decay_epochs},
                {"decay_factor", decay_factor},
                {"seed", seed},
                {"augment", augment},
                {"id", id},
                {"model_out", model_out}};
  }

  void from_json(const json& j) {
    data = j.value("data", data);
    hidden = j.value("hidden", hidden);
    activation = j.value("activation", activation);
    centering = j.value("centering", centering);
    epochs = j.value("epochs", epochs);
    batch_size = j.value("batch_size", batch_size);
    lr = j.value("lr", lr);
    momentum = j.value("momentum", momentum);
    weight_decay = j.value("weight_decay", weight_decay);
    decay_epochs = j.value("decay_epochs", decay_epochs);
    decay_factor = j.value("decay_factor", decay_factor);
    seed = j.value("seed", seed);
    augment = j.value("augment", augment);
    id = j.value("id", id);
    model_out = j.value("model_out", model_out);
  }

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--data", data, "training data files (CIFAR-10 binary)")
        ->required();
    cmd->add_option("--hidden", hidden,
                    "comma-separated hidden widths, empty for none");
    cmd->add_option("--activation", activation, "relu | tanh");
    cmd->add_option("--centering", centering, "channel-mean | mean-image");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "minibatch size");
    cmd->add_option("--lr", lr, "initial learning rate");
    cmd->add_option("--momentum", momentum, "Nesterov momentum");
    cmd->add_option("--weight-decay", weight_decay,
                    "L2 penalty on weights (not biases)");
    cmd->add_option("--decay-epochs", decay_epochs,
                    "comma-separated LR decay milestones");
    cmd->add_option("--decay-factor", decay_factor, "LR division factor");
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_flag("--augment", augment, "random flips and pad-4 crops");
    cmd->add_option("--id", id, "model id override");
    cmd->add_option("--model-out", model_out, "checkpoint output path");
  }

  TrainConfig train_config() const {
    TrainConfig config;
    config.epochs = epochs;
    config.batch_size = batch_size;
    config.learning_rate = lr;
    config.momentum = momentum;
    config.weight_decay = weight_decay;
    config.lr_decay_epochs = parse_int_list(decay_epochs);
    config.lr_decay_factor = decay_factor;
    config.seed = seed;
    config.augment = augment;
    return config;
  }

  MlpArchitecture architecture(const ImageBatch& data_batch) const {
    MlpArchitecture arch;
    arch.input = data_batch.shape;
    int classes = 2;
    for (int i = 0; i < data_batch.size(); ++i)
      classes = std::max(classes, data_batch.labels(i) + 1);
    arch.classes = classes;
    arch.hidden = parse_int_list(hidden);
    arch.activation = parse_activation(activation);
    return arch;
  }
};

int train_and_save(const TrainKnobs& knobs, const ImageBatch& normalized,
                   const OutDir& out, std::ostream& log,
                   const std::string& default_id_suffix = "") {
  const MlpArchitecture arch = knobs.architecture(normalized);
  const TrainResult result = train(normalized, arch, knobs.train_config());

  std::string id = knobs.id;
  if (id.empty()) {
    id = arch.str() + "#" + std::to_string(knobs.seed) + default_id_suffix;
  }
  result.model->set_id(id);
  save_mlp(*result.model, out.resolve(knobs.model_out));

  CsvWriter metrics(out.resolve("metrics.csv"),
                    {"model_id", "epochs", "final_loss",
                     "train_accuracy_pct"});
  metrics.cell(id)
      .cell(result.epochs_run)
      .cell(result.final_loss)
      .cell(result.train_accuracy_pct);
  metrics.end_row();

  log << "trained " << id << ": final loss " << g17(result.final_loss)
      << ", train accuracy " << g17(result.train_accuracy_pct) << "%\n";
  return 0;
}

int run_train(const TrainKnobs& knobs, const OutDir& out, std::ostream& log) {
  write_manifest(out, "train", knobs.to_json());

  require(knobs.centering == "mean-image" || knobs.centering == "channel-mean",
          "unknown centering: " + knobs.centering);
  auto [raw, manifest] = load_cifar10(out.resolve(knobs.data), "train");
  const auto stats =
      std::make_shared<NormalizationStats>(compute_normalization_stats(raw));
  const Centering centering = knobs.centering == "mean-image"
                                  ? Centering::MeanImage
                                  : Centering::ChannelMean;
  const ImageBatch normalized = normalize(raw, *stats, centering);
  return train_and_save(knobs, normalized, out, log);
}

// ---------------------------------------------------------------------------
// sis

struct SisArgs {
  std::string data;
  std::string model;
  double tau = 0.99;
  int block_size = 1;
  std::string mode = "exact";
  std::string strategy = "zero";
  int max_images = 0;
  bool collection = false;
  int max_collection = 0;
  std::string masks_out = "sis_masks.bin";
  std::string csv_out = "sis.csv";

  json to_json() const {
    return json{{"data", data},
                {"model", model},
                {"tau", tau},
                {"block_size", block_size},
                {"mode", mode},
                {"strategy", strategy},
                {"max_images", max_images},
                {"collection", collection},
                {"max_collection", max_collection},
                {"masks_out", masks_out},
                {"csv_out", csv_out}};
  }

  void from_json(const json& j) {
    data = j.value("data", data);
    model = j.value("model", model);
    tau = j.value("tau", tau);
    block_size = j.value("block_size", block_size);
    mode = j.value("mode", mode);
    strategy = j.value("strategy", strategy);
    max_images = j.value("max_images", max_images);
    collection = j.value("collection", collection);
    max_collection = j.value("max_collection", max_collection);
    masks_out = j.value("masks_out", masks_out);
    csv_out = j.value("csv_out", csv_out);
  }
};

int run_sis(const SisArgs& args, const OutDir& out, std::ostream& log) {
  write_manifest(out, "sis", args.to_json());

  const auto model = load_model(out.resolve(args.model));
  auto [raw, manifest] = load_cifar10({out.resolve(args.data)}, "eval");
  const ImageBatch batch = head(normalized_for(*model, raw), args.max_images);

  SisConfig config;
  config.tau = args.tau;
  config.block_size = args.block_size;
  config.mode = parse_sis_mode(args.mode);
  config.max_collection = args.max_collection;
  const MaskingStrategy strategy =
      strategy_for(args.strategy, batch.shape, model->stats.get());

  CsvWriter csv(out.resolve(args.csv_out),
                {"image", "collection_index", "target_class",
                 "original_confidence", "sis_size", "sis_confidence",
                 "mask_index", "forward_evals", "gradient_evals"});
  std::vector<Mask> masks;

  if (!args.collection) {
    for (const SisBatchEntry& entry :
         sis_batch(*model, batch, strategy, config)) {
      if (entry.skipped || !entry.result) continue;
      csv.cell(entry.index)
          .cell(0)
          .cell(entry.target_class)
          .cell(entry.original_confidence)
          .cell(entry.result->size())
          .cell(entry.result->confidence)
          .cell(static_cast<int>(masks.size()))
          .cell(entry.forward_evals)
          .cell(entry.gradient_evals);
      csv.end_row();
      masks.push_back(entry.result->mask);
    }
  } else {
    const Matrix probs = model->predict_proba(batch.values);
    for (int i = 0; i < batch.size(); ++i) {
      Eigen::Index predicted;
      probs.row(i).maxCoeff(&predicted);
      if (probs(i, predicted) < config.tau) continue;
      const SisCollection result =
          sis_collection(*model, batch.image(i), strategy, config);
      for (std::size_t j = 0; j < result.results.size(); ++j) {
        const SisResult& sis = result.results[j];
        csv.cell(i)
            .cell(static_cast<int>(j))
            .cell(result.target_class)
            .cell(result.original_confidence)
            .cell(sis.size())
            .cell(sis.confidence)
            .cell(static_cast<int>(masks.size()))
            .cell(result.forward_evals)
            .cell(result.gradient_evals);
        csv.end_row();
        masks.push_back(sis.mask);
      }
    }
  }

  save_masks(masks, out.resolve(args.masks_out), batch.shape.height,
             batch.shape.width);
  log << "found " << masks.size() << " SIS over " << batch.size()
      << " images at tau " << g17(args.tau) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// make-subsets

struct MakeSubsetsArgs {
  std::string data;
  std::string kind = "backselect";
  double rho = 0.05;
  std::string model;
  std::uint64_t seed = 0;
  std::string mode = "exact";
  int block_size = 1;
  std::string strategy = "zero";
  int max_images = 0;
  std::string masks_out = "subsets.bin";
  std::string spec_out = "subset_spec.json";

  json to_json() const {
    return json{{"data", data},
                {"kind", kind},
                {"rho", rho},
                {"model", model},
                {"seed", seed},
                {"mode", mode},
                {"block_size", block_size},
                {"strategy", strategy},
                {"max_images", max_images},
                {"masks_out", masks_out},
                {"spec_out", spec_out}};
  }

  void from_json(const json& j) {
    data = j.value("data", data);
    kind = j.value("kind", kind);
    rho = j.value("rho", rho);
    model = j.value("model", model);
    seed = j.value("seed", seed);
    mode = j.value("mode", mode);
    block_size = j.value("block_size", block_size);
    strategy = j.value("strategy", strategy);
    max_images = j.value("max_images", max_images);
    masks_out = j.value("masks_out", masks_out);
    spec_out = j.value("spec_out", spec_out);
  }
};

int run_make_subsets(const MakeSubsetsArgs& args, const OutDir& out,
                     std::ostream& log) {
  write_manifest(out, "make-subsets", args.to_json());

  SubsetSpec spec;
  spec.kind = parse_subset_kind(args.kind);
  spec.rho = args.rho;
  spec.strategy = MaskingStrategy::parse_kind(args.strategy);
  spec.mask_file = args.masks_out;

  auto [raw, manifest] = load_cifar10({out.resolve(args.data)}, "eval");
  std::vector<Mask> masks;

  if (spec.kind == SubsetKind::Backselect) {
    require(!args.model.empty(), "make-subsets: backselect needs --model");
    const auto model = load_model(out.resolve(args.model));
    const ImageBatch batch =
        head(normalized_for(*model, raw), args.max_images);
    SisConfig config = default_sis_config(batch.shape);
    config.block_size = args.block_size;
    config.mode = parse_sis_mode(args.mode);
    const MaskingStrategy strategy =
        strategy_for(args.strategy, batch.shape, model->stats.get());
    masks = build_backselect_retain_masks(*model, batch, strategy, config,
                                          args.rho);
    spec.model_id = model->id();
    spec.mode = config.mode;
    spec.block_size = config.block_size;
    spec.count = batch.size();
  } else {
    const ImageBatch batch = head(raw, args.max_images);
    masks = build_random_retain_masks(batch.shape, batch.size(), args.rho,
                                      args.seed);
    spec.seed = args.seed;
    spec.count = batch.size();
  }

  save_masks(masks, out.resolve(args.masks_out), kCifarSide, kCifarSide);
  save_subset_spec(spec, out.resolve(args.spec_out));
  log << "wrote " << masks.size() << " retain masks (rho " << g17(args.rho)
      << ", " << args.kind << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// retrain

struct RetrainArgs {
  TrainKnobs knobs;
  std::string subsets;

  json to_json() const {
    json j = knobs.to_json();
    j["subsets"] = subsets;
    return j;
  }

  void from_json(const json& j) {
    knobs.from_json(j);
    subsets = j.value("subsets", subsets);
  }
};

// Retain masks live next to their spec; resolve against the spec file.
std::vector<Mask> load_spec_masks(const SubsetSpec& spec,
                                  const std::string& spec_path) {
  fs::path mask_path(spec.mask_file);
  if (!mask_path.is_absolute())
    mask_path = fs::path(spec_path).parent_path() / mask_path;
  return load_masks(mask_path.string());
}

int run_retrain(const RetrainArgs& args, const OutDir& out,
                std::ostream& log) {
  write_manifest(out, "retrain", args.to_json());

  const std::string spec_path = out.resolve(args.subsets);
  const SubsetSpec spec = load_subset_spec(spec_path);
  const std::vector<Mask> retain = load_spec_masks(spec, spec_path);

  auto [raw, manifest] = load_cifar10(out.resolve(args.knobs.data), "train");
  if (static_cast<int>(retain.size()) != raw.size())
    throw DataError("retrain: " + std::to_string(retain.size()) +
                    " retain masks for " + std::to_string(raw.size()) +
                    " images");

  const auto stats =
      std::make_shared<NormalizationStats>(compute_normalization_stats(raw));
  const Centering centering = args.knobs.centering == "mean-image"
                                  ? Centering::MeanImage
                                  : Centering::ChannelMean;
  const ImageBatch normalized = normalize(raw, *stats, centering);

  const MaskingStrategy strategy =
      MaskingStrategy::make(spec.strategy, normalized.shape, stats.get());
  const ImageBatch materialized =
      materialize_subsets(normalized, retain, strategy);

  char rho_text[32];
  std::snprintf(rho_text, sizeof(rho_text), "%g", spec.rho);
  const std::string suffix =
      "/" + subset_kind_name(spec.kind) + ":" + rho_text;
  return train_and_save(args.knobs, materialized, out, log, suffix);
}

// ---------------------------------------------------------------------------
// transfer

struct TransferArgs {
  std::string data;
  std::vector<std::string> models;
  std::vector<std::string> subsets;
  int max_images = 0;
  std::string csv_out = "transfer.csv";

  json to_json() const {
    return json{{"data", data},
                {"models", models},
                {"subsets", subsets},
                {"max_images", max_images},
                {"csv_out", csv_out}};
  }

  void from_json(const json& j) {
    data = j.value("data", data);
    models = j.value("models", models);
    subsets = j.value("subsets", subsets);
    max_images = j.value("max_images", max_images);
    csv_out = j.value("csv_out", csv_out);
  }
};

int run_transfer(const TransferArgs& args, const OutDir& out,
                 std::ostream& log) {
  write_manifest(out, "transfer", args.to_json());
  require(!args.models.empty(), "transfer: need at least one --model");
  require(args.models.size() == args.subsets.size(),
          "transfer: need exactly one --subsets per --model");

  auto [raw_full, manifest] = load_cifar10({out.resolve(args.data)}, "eval");
  const ImageBatch raw = head(raw_full, args.max_images);

  std::vector<std::shared_ptr<const Classifier>> models;
  std::vector<ImageBatch> materialized;
  for (std::size_t i = 0; i < args.models.size(); ++i) {
    const auto model = load_model(out.resolve(args.models[i]));
    const std::string spec_path = out.resolve(args.subsets[i]);
    const SubsetSpec spec = load_subset_spec(spec_path);
    std::vector<Mask> retain = load_spec_masks(spec, spec_path);
    if (static_cast<int>(retain.size()) < raw.size())
      throw DataError("transfer: subset " + args.subsets[i] + " holds " +
                      std::to_string(retain.size()) + " masks for " +
                      std::to_string(raw.size()) + " images");
    retain.resize(static_cast<std::size_t>(raw.size()));

    const ImageBatch normalized = normalized_for(*model, raw);
    const MaskingStrategy strategy = MaskingStrategy::make(
        spec.strategy, normalized.shape, model->stats.get());
    materialized.push_back(materialize_subsets(normalized, retain, strategy));
    models.push_back(model);
  }

  const TransferMatrix matrix = transfer_matrix(models, materialized);

  std::vector<std::string> header{"source_model"};
  header.insert(header.end(), matrix.model_ids.begin(),
                matrix.model_ids.end());
  CsvWriter csv(out.resolve(args.csv_out), header);
  for (Eigen::Index i = 0; i < matrix.accuracy_pct.rows(); ++i) {
    csv.cell(matrix.model_ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < matrix.accuracy_pct.cols(); ++j)
      csv.cell(matrix.accuracy_pct(i, j));
    csv.end_row();
  }

  log << "transfer matrix over " << models.size() << " models, " << raw.size()
      << " images\n";
  return 0;
}

// ---------------------------------------------------------------------------
// heatmap

struct HeatmapArgs {
  std::string masks;
  std::string name = "heatmap";

  json to_json() const { return json{{"masks", masks}, {"name", name}}; }

  void from_json(const json& j) {
    masks = j.value("masks", masks);
    name = j.value("name", name);
  }
};

int run_heatmap(const HeatmapArgs& args, const OutDir& out,
                std::ostream& log) {
  write_manifest(out, "heatmap", args.to_json());
  const std::vector<Mask> masks = load_masks(out.resolve(args.masks));
  const Heatmap h = heatmap(masks);
  render_heatmap(h, out.resolve(args.name + ".pgm"),
                 out.resolve(args.name + ".csv"));
  log << "heatmap over " << h.mask_count << " masks, total mass "
      << h.total_count() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string data;
  std::vector<std::string> models;
  std::string taus = "0.5,0.7,0.9,0.99";
  double tau = 0.99;  // ensemble comparison threshold
  std::string mode = "exact";
  int block_size = 1;
  std::string strategy = "zero";
  int max_images = 0;
  std::string subsets;  // optional: confidence drops against these
  std::string curves_out = "curves.csv";
  std::string drops_out = "drops.csv";
  std::string ensemble_out = "ensemble.csv";

  json to_json() const {
    return json{{"data", data},           {"models", models},
                {"taus", taus},           {"tau", tau},
                {"mode", mode},           {"block_size", block_size},
                {"strategy", strategy},   {"max_images", max_images},
                {"subsets", subsets},     {"curves_out", curves_out},
                {"drops_out", drops_out}, {"ensemble_out", ensemble_out}};
  }

  void from_json(const json& j) {
    data = j.value("data", data);
    models = j.value("models", models);
    taus = j.value("taus", taus);
    tau = j.value("tau", tau);
    mode = j.value("mode", mode);
    block_size = j.value("block_size", block_size);
    strategy = j.value("strategy", strategy);
    max_images = j.value("max_images", max_images);
    subsets = j.value("subsets", subsets);
    curves_out = j.value("curves_out", curves_out);
    drops_out = j.value("drops_out", drops_out);
    ensemble_out = j.value("ensemble_out", ensemble_out);
  }
};

int run_analyze(const AnalyzeArgs& args, const OutDir& out,
                std::ostream& log) {
  write_manifest(out, "analyze", args.to_json());
  require(!args.models.empty(), "analyze: need at least one --model");

  std::vector<std::shared_ptr<const Classifier>> models;
  for (const auto& path : args.models)
    models.push_back(load_model(out.resolve(path)));
  const auto first =
      std::static_pointer_cast<const MlpClassifier>(models.front());

  auto [raw_full, manifest] = load_cifar10({out.resolve(args.data)}, "eval");
  const ImageBatch batch =
      head(normalized_for(*first, raw_full), args.max_images);

  SisConfig config;
  config.tau = args.tau;
  config.block_size = args.block_size;
  config.mode = parse_sis_mode(args.mode);
  const MaskingStrategy strategy =
      strategy_for(args.strategy, batch.shape, first->stats.get());

  const std::vector<double> taus = parse_double_list(args.taus);
  const SizeStats stats =
      sis_size_curves(*models.front(), batch, taus, strategy, config);

  CsvWriter curves(out.resolve(args.curves_out),
                   {"tau", "empty", "n", "mean_size_fraction",
                    "ci_half_width", "n_correct", "mean_fraction_correct",
                    "mean_confidence_correct", "n_incorrect",
                    "mean_fraction_incorrect", "mean_confidence_incorrect",
                    "pct_increase", "diff", "diff_ci_low", "diff_ci_high",
                    "diff_valid"});
  for (const SizeCurvePoint& p : stats.points) {
    curves.cell(p.tau)
        .cell(p.empty ? 1 : 0)
        .cell(p.n)
        .cell(p.mean_size_fraction)
        .cell(p.ci_half_width)
        .cell(p.n_correct)
        .cell(p.mean_fraction_correct)
        .cell(p.mean_confidence_correct)
        .cell(p.n_incorrect)
        .cell(p.mean_fraction_incorrect)
        .cell(p.mean_confidence_incorrect)
        .cell(p.pct_increase)
        .cell(p.group_diff.difference)
        .cell(p.group_diff.low)
        .cell(p.group_diff.high)
        .cell(p.group_diff.valid ? 1 : 0);
    curves.end_row();
  }

  if (!args.subsets.empty()) {
    const std::string spec_path = out.resolve(args.subsets);
    const SubsetSpec spec = load_subset_spec(spec_path);
    std::vector<Mask> retain = load_spec_masks(spec, spec_path);
    if (static_cast<int>(retain.size()) < batch.size())
      throw DataError("analyze: fewer retain masks than images");
    retain.resize(static_cast<std::size_t>(batch.size()));
    const MaskingStrategy sub_strategy = MaskingStrategy::make(
        spec.strategy, batch.shape, first->stats.get());
    const ImageBatch materialized =
        materialize_subsets(batch, retain, sub_strategy);
    const ConfidenceDrop drop =
        confidence_drop(*models.front(), batch, materialized);
    CsvWriter drops(out.resolve(args.drops_out),
                    {"model_id", "mean_drop", "stddev", "n"});
    drops.cell(models.front()->describe())
        .cell(drop.mean)
        .cell(drop.stddev)
        .cell(drop.count);
    drops.end_row();
  }

  if (models.size() > 1) {
    const EnsembleClassifier ensemble(models);
    const EnsembleComparison cmp =
        ensemble_sis_comparison(ensemble, batch, strategy, config);
    CsvWriter ens(out.resolve(args.ensemble_out),
                  {"ensemble_accuracy_pct", "mean_member_accuracy_pct",
                   "ensemble_mean_fraction", "member_mean_fraction",
                   "difference", "ci_low", "ci_high", "ci_valid",
                   "ensemble_n", "member_n"});
    ens.cell(cmp.ensemble_accuracy_pct)
        .cell(cmp.mean_member_accuracy_pct)
        .cell(cmp.ensemble_mean_fraction)
        .cell(cmp.member_mean_fraction)
        .cell(cmp.difference)
        .cell(cmp.ci.low)
        .cell(cmp.ci.high)
        .cell(cmp.ci.valid ? 1 : 0)
        .cell(cmp.ensemble_n)
        .cell(cmp.member_n);
    ens.end_row();
  }

  log << "analyzed " << batch.size() << " images over " << taus.size()
      << " thresholds\n";
  return 0;
}

// ---------------------------------------------------------------------------
// dispatch and rerun

int dispatch(const std::string& subcommand, const json& config,
             const OutDir& out, std::ostream& log) {
  if (subcommand == "synth-data") {
    SynthDataArgs args;
    args.from_json(config);
    return run_synth_data(args, out, log);
  }
  if (subcommand == "train") {
    TrainKnobs knobs;
    knobs.from_json(config);
    return run_train(knobs, out, log);
  }
  if (subcommand == "sis") {
    SisArgs args;
    args.from_json(config);
    return run_sis(args, out, log);
  }
  if (subcommand == "make-subsets") {
    MakeSubsetsArgs args;
    args.from_json(config);
    return run_make_subsets(args, out, log);
  }
  if (subcommand == "retrain") {
    RetrainArgs args;
    args.from_json(config);
    return run_retrain(args, out, log);
  }
  if (subcommand == "transfer") {
    TransferArgs args;
    args.from_json(config);
    return run_transfer(args, out, log);
  }
  if (subcommand == "heatmap") {
    HeatmapArgs args;
    args.from_json(config);
    return run_heatmap(args, out, log);
  }
  if (subcommand == "analyze") {
    AnalyzeArgs args;
    args.from_json(config);
    return run_analyze(args, out, log);
  }
  throw DataError("manifest names unknown subcommand: " + subcommand);
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& err) {
    throw DataError(path + ": " + err.what());
  }
  return j;
}

// --config FILE: JSON with the manifest's config schema, applied before the
// remaining flags so explicit flags always win.
json extract_config_file(std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config") {
      if (i + 1 >= args.size())
        throw std::invalid_argument("--config needs a file argument");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      continue;
    }
    return load_json_file(path);
  }
  return json();
}

}  // namespace

int run_cli(const std::vector<std::string>& args_in, std::ostream& out,
            std::ostream& err) {
  std::vector<std::string> args = args_in;
  json file_config;
  try {
    file_config = extract_config_file(args);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App app{"sufficient input subsets for image classifiers"};
  app.require_subcommand(1);
  std::string out_dir = ".";

  SynthDataArgs synth_args;
  TrainKnobs train_knobs;
  SisArgs sis_args;
  MakeSubsetsArgs subsets_args;
  RetrainArgs retrain_args;
  TransferArgs transfer_args;
  HeatmapArgs heatmap_args;
  AnalyzeArgs analyze_args;
  std::string rerun_manifest;

  if (!file_config.is_null()) {
    synth_args.from_json(file_config);
    train_knobs.from_json(file_config);
    sis_args.from_json(file_config);
    subsets_args.from_json(file_config);
    retrain_args.from_json(file_config);
    transfer_args.from_json(file_config);
    heatmap_args.from_json(file_config);
    analyze_args.from_json(file_config);
  }

  CLI::App* synth = app.add_subcommand("synth-data",
                                       "generate a synthetic CIFAR-layout "
                                       "dataset");
  synth->add_option("--out", out_dir, "run directory");
  synth->add_option("--kind", synth_args.kind,
                    "templates | separable | xor | constant");
  synth->add_option("--name", synth_args.name, "output file name");
  synth->add_option("--split", synth_args.split, "split label");
  synth->add_option("--n", synth_args.n, "record count");
  synth->add_option("--seed", synth_args.seed, "master seed");
  synth->add_option("--classes", synth_args.classes, "template classes");
  synth->add_option("--amplitude", synth_args.amplitude,
                    "template amplitude, byte units");
  synth->add_option("--noise", synth_args.noise, "pixel noise, byte units");
  synth->add_option("--blur-radius", synth_args.blur_radius,
                    "template smoothing radius");
  synth->add_flag("--sign-flip,!--no-sign-flip", synth_args.sign_flip,
                  "flip template polarity per image");
  synth->add_option("--template-seed", synth_args.template_seed,
                    "seed shared across splits");
  synth->add_option("--margin", synth_args.margin, "separable class margin");
  synth->add_option("--byte-scale", synth_args.byte_scale,
                    "byte units per normalized unit");

  CLI::App* train_cmd = app.add_subcommand("train", "train an MLP");
  train_cmd->add_option("--out", out_dir, "run directory");
  train_knobs.add_flags(train_cmd);

  CLI::App* sis_cmd =
      app.add_subcommand("sis", "extract sufficient input subsets");
  sis_cmd->add_option("--out", out_dir, "run directory");
  sis_cmd->add_option("--data", sis_args.data, "dataset file")->required();
  sis_cmd->add_option("--model", sis_args.model, "checkpoint")->required();
  sis_cmd->add_option("--tau", sis_args.tau, "confidence threshold");
  sis_cmd->add_option("--block-size", sis_args.block_size, "pixels per block");
  sis_cmd->add_option("--mode", sis_args.mode, "exact | batched-gradient");
  sis_cmd->add_option("--strategy", sis_args.strategy,
                      "zero | mean-image | channel-mean");
  sis_cmd->add_option("--max-images", sis_args.max_images,
                      "limit to the first N images (0 = all)");
  sis_cmd->add_flag("--collection", sis_args.collection,
                    "extract a full disjoint collection per image");
  sis_cmd->add_option("--max-collection", sis_args.max_collection,
                      "cap SIS per image (0 = natural stop)");
  sis_cmd->add_option("--masks-out", sis_args.masks_out, "mask container");
  sis_cmd->add_option("--csv-out", sis_args.csv_out, "per-SIS CSV");

  CLI::App* subsets_cmd =
      app.add_subcommand("make-subsets", "build a pixel-subset dataset");
  subsets_cmd->add_option("--out", out_dir, "run directory");
  subsets_cmd->add_option("--data", subsets_args.data, "dataset file")
      ->required();
  subsets_cmd->add_option("--kind", subsets_args.kind,
                          "backselect | random");
  subsets_cmd->add_option("--rho", subsets_args.rho, "retained fraction");
  subsets_cmd->add_option("--model", subsets_args.model,
                          "checkpoint, for backselect");
  subsets_cmd->add_option("--seed", subsets_args.seed, "seed, for random");
  subsets_cmd->add_option("--mode", subsets_args.mode,
                          "exact | batched-gradient");
  subsets_cmd->add_option("--block-size", subsets_args.block_size,
                          "pixels per block");
  subsets_cmd->add_option("--strategy", subsets_args.strategy,
                          "zero | mean-image | channel-mean");
  subsets_cmd->add_option("--max-images", subsets_args.max_images,
                          "limit to the first N images (0 = all)");
  subsets_cmd->add_option("--masks-out", subsets_args.masks_out,
                          "retain-mask container");
  subsets_cmd->add_option("--spec-out", subsets_args.spec_out,
                          "spec sidecar");

  CLI::App* retrain_cmd =
      app.add_subcommand("retrain", "train on a pixel-subset dataset");
  retrain_cmd->add_option("--out", out_dir, "run directory");
  retrain_args.knobs.add_flags(retrain_cmd);
  retrain_cmd->add_option("--subsets", retrain_args.subsets,
                          "subset spec sidecar")
      ->required();

  CLI::App* transfer_cmd =
      app.add_subcommand("transfer", "cross-model subset accuracy matrix");
  transfer_cmd->add_option("--out", out_dir, "run directory");
  transfer_cmd->add_option("--data", transfer_args.data, "dataset file")
      ->required();
  transfer_cmd->add_option("--model", transfer_args.models, "checkpoints")
      ->required();
  transfer_cmd->add_option("--subsets", transfer_args.subsets,
                           "subset specs, one per model")
      ->required();
  transfer_cmd->add_option("--max-images", transfer_args.max_images,
                           "limit to the first N images (0 = all)");
  transfer_cmd->add_option("--csv-out", transfer_args.csv_out, "matrix CSV");

  CLI::App* heatmap_cmd =
      app.add_subcommand("heatmap", "aggregate masks into a heatmap");
  heatmap_cmd->add_option("--out", out_dir, "run directory");
  heatmap_cmd->add_option("--masks", heatmap_args.masks, "mask container")
      ->required();
  heatmap_cmd->add_option("--name", heatmap_args.name, "output base name");

  CLI::App* analyze_cmd = app.add_subcommand(
      "analyze", "size curves, confidence drops, ensemble comparison");
  analyze_cmd->add_option("--out", out_dir, "run directory");
  analyze_cmd->add_option("--data", analyze_args.data, "dataset file")
      ->required();
  analyze_cmd->add_option("--model", analyze_args.models,
                          "checkpoints; several form an ensemble")
      ->required();
  analyze_cmd->add_option("--taus", analyze_args.taus,
                          "ascending threshold grid");
  analyze_cmd->add_option("--tau", analyze_args.tau,
                          "threshold for drops and the ensemble comparison");
  analyze_cmd->add_option("--mode", analyze_args.mode,
                          "exact | batched-gradient");
  analyze_cmd->add_option("--block-size", analyze_args.block_size,
                          "pixels per block");
  analyze_cmd->add_option("--strategy", analyze_args.strategy,
                          "zero | mean-image | channel-mean");
  analyze_cmd->add_option("--max-images", analyze_args.max_images,
                          "limit to the first N images (0 = all)");
  analyze_cmd->add_option("--subsets", analyze_args.subsets,
                          "subset spec for confidence drops");
  analyze_cmd->add_option("--curves-out", analyze_args.curves_out);
  analyze_cmd->add_option("--drops-out", analyze_args.drops_out);
  analyze_cmd->add_option("--ensemble-out", analyze_args.ensemble_out);

  CLI::App* rerun_cmd =
      app.add_subcommand("rerun", "replay a recorded run manifest");
  rerun_cmd->add_option("--manifest", rerun_manifest, "manifest.json path")
      ->required();
  rerun_cmd->add_option("--out", out_dir, "run directory");

  try {
    std::vector<char*> argv;
    std::vector<std::string> storage = args;
    std::string prog = "sis";
    argv.push_back(prog.data());
    for (auto& a : storage) argv.push_back(a.data());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    const OutDir out_path(out_dir);
    if (synth->parsed()) return run_synth_data(synth_args, out_path, out);
    if (train_cmd->parsed()) return run_train(train_knobs, out_path, out);
    if (sis_cmd->parsed()) return run_sis(sis_args, out_path, out);
    if (subsets_cmd->parsed())
      return run_make_subsets(subsets_args, out_path, out);
    if (retrain_cmd->parsed()) return run_retrain(retrain_args, out_path, out);
    if (transfer_cmd->parsed())
      return run_transfer(transfer_args, out_path, out);
    if (heatmap_cmd->parsed()) return run_heatmap(heatmap_args, out_path, out);
    if (analyze_cmd->parsed()) return run_analyze(analyze_args, out_path, out);
    if (rerun_cmd->parsed()) {
      const json manifest = load_json_file(rerun_manifest);
      if (!manifest.contains("subcommand") || !manifest.contains("config"))
        throw DataError(rerun_manifest + ": not a run manifest");
      return dispatch(manifest["subcommand"].get<std::string>(),
                      manifest["config"], out_path, out);
    }
    err << "error: no subcommand\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace sis
