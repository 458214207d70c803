#pragma once

#include "sis/image.hpp"
#include "sis/mask.hpp"

#include <memory>
#include <string>
#include <vector>

namespace sis {

/// Opaque predictor: class probabilities on (masked) inputs, plus the
/// gradient of a chosen class confidence with respect to the input when the
/// model is differentiable. Instances are immutable after construction and
/// safe for concurrent read-only inference.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual InputShape input_shape() const = 0;
  virtual int num_classes() const = 0;
  virtual std::string describe() const = 0;

  /// Pre-softmax outputs, one row per input row.
  virtual Matrix logits(const Eigen::Ref<const Matrix>& inputs) const = 0;

  virtual bool differentiable() const { return false; }

  /// Gradient of cotangent . logits(x) with respect to x. Only meaningful
  /// when differentiable() is true.
  virtual Vector logit_vjp(const Vector& input,
                           const Vector& cotangent) const;

  // Shape-checked probability evaluation shared by every implementation.
  Matrix predict_proba(const Eigen::Ref<const Matrix>& inputs) const;
  Vector predict_proba_one(const Vector& input) const;

 protected:
  void check_input(Eigen::Index cols) const;
};

/// d p_target / d x at input x (probability after softmax over logits).
Vector probability_input_gradient(const Classifier& model, const Vector& input,
                                  int target_class);

struct MaskGradientResult {
  Matrix grid;          // height x width, d p_target / d M entries
  Vector probabilities; // at the masked input, free byproduct
  double confidence;    // probabilities(target)
};

/// Gradient of the target-class confidence with respect to the mask at the
/// point x~ = x (1 - M) + r M. Each grid entry folds the channels:
/// sum_c (r - x) * d p_target / d x~ at that pixel.
MaskGradientResult confidence_grad_wrt_mask(const Classifier& model,
                                            const Image& image,
                                            const Mask& mask,
                                            int target_class,
                                            const MaskingStrategy& strategy);

/// Uniform average of member logits, softmaxed. Members must agree on input
/// shape and class count; that is checked at construction, never at predict
/// time.
class EnsembleClassifier final : public Classifier {
 public:
  explicit EnsembleClassifier(
      std::vector<std::shared_ptr<const Classifier>> members);

  InputShape input_shape() const override;
  int num_classes() const override;
  std::string describe() const override;
  Matrix logits(const Eigen::Ref<const Matrix>& inputs) const override;
  bool differentiable() const override;
  Vector logit_vjp(const Vector& input,
                   const Vector& cotangent) const override;

  int size() const { return static_cast<int>(members_.size()); }
  const Classifier& member(int i) const { return *members_.at(i); }

 private:
  std::vector<std::shared_ptr<const Classifier>> members_;
};

/// Fixed output regardless of input. Differentiable with zero gradient.
class ConstantClassifier final : public Classifier {
 public:
  ConstantClassifier(InputShape shape, Vector probabilities);

  InputShape input_shape() const override { return shape_; }
  int num_classes() const override {
    return static_cast<int>(log_probs_.size());
  }
  std::string describe() const override { return "constant"; }
  Matrix logits(const Eigen::Ref<const Matrix>& inputs) const override;
  bool differentiable() const override { return true; }
  Vector logit_vjp(const Vector& input,
                   const Vector& cotangent) const override;

 private:
  InputShape shape_;
  Vector log_probs_;
};

}  // namespace sis
