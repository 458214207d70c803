#include "sis/mlp.hpp"

#include "sis/rng.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace sis {

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string activation_name(Activation activation) {
  return activation == Activation::ReLU ? "relu" : "tanh";
}

void MlpArchitecture::validate() const {
  require(input.height > 0 && input.width > 0 && input.channels > 0,
          "MlpArchitecture: input shape must be positive");
  require(classes >= 2, "MlpArchitecture: need at least 2 classes");
  for (const int h : hidden)
    require(h > 0, "MlpArchitecture: hidden widths must be positive");
}

std::string MlpArchitecture::str() const {
  std::ostringstream out;
  out << "mlp(" << input.str();
  for (const int h : hidden) out << "-" << h;
  out << "-" << classes << "," << activation_name(activation) << ")";
  return out.str();
}

namespace {

std::vector<int> layer_widths(const MlpArchitecture& arch) {
  std::vector<int> widths;
  widths.push_back(arch.input.features());
  widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
  widths.push_back(arch.classes);
  return widths;
}

Matrix activate(Matrix pre, Activation activation) {
  if (activation == Activation::ReLU) return pre.cwiseMax(0.0);
  return pre.array().tanh().matrix();
}

}  // namespace

std::shared_ptr<MlpClassifier> MlpClassifier::random_init(MlpArchitecture arch,
                                                          std::uint64_t seed) {
  arch.validate();
  const std::vector<int> widths = layer_widths(arch);
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Rng rng = sub_rng(seed, "init", l);
    Matrix w(fan_in, fan_out);
    for (int i = 0; i < fan_in; ++i)
      for (int j = 0; j < fan_out; ++j)
        w(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
    weights.push_back(std::move(w));
    biases.push_back(Vector::Zero(fan_out));
  }
  return std::make_shared<MlpClassifier>(std::move(arch), std::move(weights),
                                         std::move(biases));
}

MlpClassifier::MlpClassifier(MlpArchitecture arch, std::vector<Matrix> weights,
                             std::vector<Vector> biases)
    : arch_(std::move(arch)),
      weights_(std::move(weights)),
      biases_(std::move(biases)) {
  arch_.validate();
  const std::vector<int> widths = layer_widths(arch_);
  require(weights_.size() == widths.size() - 1 &&
              biases_.size() == weights_.size(),
          "MlpClassifier: parameter count does not match architecture");
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    require(weights_[l].rows() == widths[l] &&
                weights_[l].cols() == widths[l + 1] &&
                biases_[l].size() == widths[l + 1],
            "MlpClassifier: layer " + std::to_string(l) + " shape mismatch");
  }
  id_ = arch_.str();
}

std::string MlpClassifier::describe() const { return id_; }

Matrix MlpClassifier::logits(const Eigen::Ref<const Matrix>& inputs) const {
  Matrix a = inputs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix pre = (a * weights_[l]).rowwise() + biases_[l].transpose();
    a = (l + 1 < weights_.size()) ? activate(std::move(pre), arch_.activation)
                                  : std::move(pre);
  }
  return a;
}

Vector MlpClassifier::logit_vjp(const Vector& input,
                                const Vector& cotangent) const {
  check_input(input.size());
  require(cotangent.size() == arch_.classes,
          "logit_vjp: cotangent size does not match class count");

  // Forward, keeping post-activation values for the backward sweep.
  std::vector<RowVector> acts;
  acts.reserve(weights_.size());
  RowVector a = input.transpose();
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
    acts.push_back(a);
    RowVector pre = a * weights_[l] + biases_[l].transpose();
    a = activate(pre, arch_.activation);
  }
  acts.push_back(a);

  RowVector grad = cotangent.transpose();
  for (std::size_t l = weights_.size(); l-- > 0;) {
    grad = grad * weights_[l].transpose();
    if (l > 0) {
      const RowVector& post = acts[l];
      if (arch_.activation == Activation::ReLU) {
        grad = grad.array() * (post.array() > 0.0).cast<double>();
      } else {
        grad = grad.array() * (1.0 - post.array().square());
      }
    }
  }
  return grad.transpose();
}

namespace {

constexpr char kNetMagic[8] = {'S', 'I', 'S', 'N', 'E', 'T', '0', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, std::size_t& offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4)
    throw DataError("checkpoint truncated at byte offset " +
                    std::to_string(offset));
  offset += 4;
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in, std::size_t& offset) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8)
    throw DataError("checkpoint truncated at byte offset " +
                    std::to_string(offset));
  offset += 8;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void write_f64_block(std::ostream& out, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) write_f64(out, data[i]);
}

void read_f64_block(std::istream& in, std::size_t& offset, double* data,
                    Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) data[i] = read_f64(in, offset);
}

}  // namespace

void serialize_mlp(const MlpClassifier& model, std::ostream& out) {
  const MlpArchitecture& arch = model.architecture();
  out.write(kNetMagic, 8);
  write_u32(out, static_cast<std::uint32_t>(arch.input.height));
  write_u32(out, static_cast<std::uint32_t>(arch.input.width));
  write_u32(out, static_cast<std::uint32_t>(arch.input.channels));
  write_u32(out, static_cast<std::uint32_t>(arch.classes));
  out.put(arch.activation == Activation::ReLU ? '\0' : '\1');
  write_u32(out, static_cast<std::uint32_t>(arch.hidden.size()));
  for (const int h : arch.hidden) write_u32(out, static_cast<std::uint32_t>(h));
  out.put(model.centering == Centering::ChannelMean ? '\0' : '\1');
  out.put(model.stats ? '\1' : '\0');
  if (model.stats) {
    const NormalizationStats& s = *model.stats;
    require(s.shape == arch.input, "serialize_mlp: stats shape mismatch");
    write_f64_block(out, s.channel_mean.data(), s.channel_mean.size());
    write_f64_block(out, s.channel_std.data(), s.channel_std.size());
    write_f64_block(out, s.mean_image.data(), s.mean_image.size());
  }
  write_u32(out, static_cast<std::uint32_t>(model.id().size()));
  out.write(model.id().data(),
            static_cast<std::streamsize>(model.id().size()));
  for (int l = 0; l < model.layer_count(); ++l) {
    const Matrix& w = model.weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) write_f64(out, w(i, j));
    write_f64_block(out, model.bias(l).data(), model.bias(l).size());
  }
  if (!out) throw DataError("serialize_mlp: stream write failed");
}

std::shared_ptr<MlpClassifier> parse_mlp(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kNetMagic, 8) != 0)
    throw DataError("checkpoint: bad magic at byte offset 0");
  std::size_t offset = 8;

  MlpArchitecture arch;
  arch.input.height = static_cast<int>(read_u32(in, offset));
  arch.input.width = static_cast<int>(read_u32(in, offset));
  arch.input.channels = static_cast<int>(read_u32(in, offset));
  arch.classes = static_cast<int>(read_u32(in, offset));

  const int activation_byte = in.get();
  if (activation_byte == EOF)
    throw DataError("checkpoint truncated at byte offset " +
                    std::to_string(offset));
  if (activation_byte != 0 && activation_byte != 1)
    throw DataError("checkpoint: unknown activation code " +
                    std::to_string(activation_byte));
  arch.activation = activation_byte == 0 ? Activation::ReLU : Activation::Tanh;
  ++offset;

  const auto hidden_count = read_u32(in, offset);
  if (hidden_count > 64)
    throw DataError("checkpoint: implausible hidden layer count " +
                    std::to_string(hidden_count));
  for (std::uint32_t i = 0; i < hidden_count; ++i)
    arch.hidden.push_back(static_cast<int>(read_u32(in, offset)));
  try {
    arch.validate();
  } catch (const std::invalid_argument& err) {
    throw DataError(std::string("checkpoint: invalid architecture: ") +
                    err.what());
  }

  const int centering_byte = in.get();
  const int has_stats = in.get();
  if (centering_byte == EOF || has_stats == EOF)
    throw DataError("checkpoint truncated at byte offset " +
                    std::to_string(offset));
  offset += 2;
  if (centering_byte != 0 && centering_byte != 1)
    throw DataError("checkpoint: unknown centering code " +
                    std::to_string(centering_byte));
  if (has_stats != 0 && has_stats != 1)
    throw DataError("checkpoint: bad stats flag " + std::to_string(has_stats));

  std::shared_ptr<const NormalizationStats> stats;
  if (has_stats == 1) {
    NormalizationStats s;
    s.shape = arch.input;
    s.channel_mean.resize(arch.input.channels);
    s.channel_std.resize(arch.input.channels);
    s.mean_image.resize(arch.input.features());
    read_f64_block(in, offset, s.channel_mean.data(), s.channel_mean.size());
    read_f64_block(in, offset, s.channel_std.data(), s.channel_std.size());
    read_f64_block(in, offset, s.mean_image.data(), s.mean_image.size());
    try {
      s.validate();
    } catch (const std::invalid_argument& err) {
      throw DataError(std::string("checkpoint: invalid stats: ") + err.what());
    }
    stats = std::make_shared<NormalizationStats>(std::move(s));
  }

  const auto id_size = read_u32(in, offset);
  if (id_size > 4096)
    throw DataError("checkpoint: implausible id length " +
                    std::to_string(id_size));
  std::string id(id_size, '\0');
  in.read(id.data(), static_cast<std::streamsize>(id_size));
  if (in.gcount() != static_cast<std::streamsize>(id_size))
    throw DataError("checkpoint truncated at byte offset " +
                    std::to_string(offset));
  offset += id_size;

  const std::vector<int> widths = layer_widths(arch);
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Matrix w(widths[l], widths[l + 1]);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = read_f64(in, offset);
    Vector b(widths[l + 1]);
    read_f64_block(in, offset, b.data(), b.size());
    if (!w.allFinite() || !b.allFinite())
      throw DataError("checkpoint: non-finite parameters in layer " +
                      std::to_string(l));
    weights.push_back(std::move(w));
    biases.push_back(std::move(b));
  }

  auto model = std::make_shared<MlpClassifier>(
      std::move(arch), std::move(weights), std::move(biases));
  model->stats = std::move(stats);
  model->centering = centering_byte == 0 ? Centering::ChannelMean
                                         : Centering::MeanImage;
  if (!id.empty()) model->set_id(std::move(id));
  return model;
}

void save_mlp(const MlpClassifier& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  serialize_mlp(model, out);
}

std::shared_ptr<MlpClassifier> load_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return parse_mlp(in);
}

}  // namespace sis
