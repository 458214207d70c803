#pragma once

#include "sis/classifier.hpp"
#include "sis/image.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace sis {

enum class Activation { ReLU, Tanh };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation activation);

/// Layer widths of a fully connected net: features -> hidden... -> classes.
/// An empty hidden list is a multinomial logistic regression.
struct MlpArchitecture {
  InputShape input;
  int classes = 0;
  std::vector<int> hidden;
  Activation activation = Activation::ReLU;

  void validate() const;
  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  std::string str() const;
};

/// Dense net over pixel-major feature vectors. Weights are stored
/// (fan_in x fan_out) so a batched forward pass is one product per layer.
/// Parameters are mutable through weight()/bias() for the trainer; treat a
/// trained instance as read-only.
class MlpClassifier final : public Classifier {
 public:
  /// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero
  /// biases. Each layer draws from its own sub-stream of `seed`, row-major.
  static std::shared_ptr<MlpClassifier> random_init(MlpArchitecture arch,
                                                    std::uint64_t seed);

  MlpClassifier(MlpArchitecture arch, std::vector<Matrix> weights,
                std::vector<Vector> biases);

  InputShape input_shape() const override { return arch_.input; }
  int num_classes() const override { return arch_.classes; }
  std::string describe() const override;
  Matrix logits(const Eigen::Ref<const Matrix>& inputs) const override;
  bool differentiable() const override { return true; }
  Vector logit_vjp(const Vector& input,
                   const Vector& cotangent) const override;

  const MlpArchitecture& architecture() const { return arch_; }
  int layer_count() const { return arch_.layer_count(); }
  Matrix& weight(int layer) { return weights_.at(layer); }
  const Matrix& weight(int layer) const { return weights_.at(layer); }
  Vector& bias(int layer) { return biases_.at(layer); }
  const Vector& bias(int layer) const { return biases_.at(layer); }

  /// Short handle used in provenance records and file names. Defaults to the
  /// architecture string; the trainer stamps something more specific.
  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }

  // Normalization the model was trained under; carried into checkpoints so
  // inference-time preprocessing cannot drift from training.
  std::shared_ptr<const NormalizationStats> stats;
  Centering centering = Centering::ChannelMean;

 private:
  MlpArchitecture arch_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  std::string id_;
};

// Checkpoint container, magic "SISNET01", little-endian throughout:
//   magic, u32 height/width/channels/classes, u8 activation, u32 hidden
//   count + u32 widths, u8 centering, u8 has_stats, optional stats
//   (f64 channel means, f64 channel stds, f64 mean image), u32 id length +
//   bytes, then per layer the row-major f64 weight matrix and f64 biases.
void serialize_mlp(const MlpClassifier& model, std::ostream& out);
std::shared_ptr<MlpClassifier> parse_mlp(std::istream& in);

void save_mlp(const MlpClassifier& model, const std::string& path);
std::shared_ptr<MlpClassifier> load_mlp(const std::string& path);

}  // namespace sis
