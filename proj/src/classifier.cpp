#include "sis/classifier.hpp"

#include "sis/math.hpp"

#include <cmath>
#include <sstream>

namespace sis {

void Classifier::check_input(Eigen::Index cols) const {
  const Eigen::Index want = input_shape().features();
  if (cols != want) {
    std::ostringstream msg;
    msg << "classifier " << describe() << " expects " << want
        << " features, got " << cols;
    throw std::invalid_argument(msg.str());
  }
}

Matrix Classifier::predict_proba(const Eigen::Ref<const Matrix>& inputs) const {
  check_input(inputs.cols());
  return softmax_rows(logits(inputs));
}

Vector Classifier::predict_proba_one(const Vector& input) const {
  check_input(input.size());
  Matrix row = input.transpose();
  return softmax_rows(logits(row)).row(0).transpose();
}

Vector Classifier::logit_vjp(const Vector& /*input*/,
                             const Vector& /*cotangent*/) const {
  throw std::logic_error("classifier " + describe() +
                         " does not provide gradients; use the exact mode");
}

Vector probability_input_gradient(const Classifier& model, const Vector& input,
                                  int target_class) {
  require(model.differentiable(),
          "probability_input_gradient: model is not differentiable");
  require(target_class >= 0 && target_class < model.num_classes(),
          "probability_input_gradient: target class out of range");
  const Vector probs = model.predict_proba_one(input);
  // d p_c / d z_j = p_c (delta_cj - p_j); pull that back through the logits.
  Vector cotangent = -probs(target_class) * probs;
  cotangent(target_class) += probs(target_class);
  return model.logit_vjp(input, cotangent);
}

MaskGradientResult confidence_grad_wrt_mask(const Classifier& model,
                                            const Image& image,
                                            const Mask& mask,
                                            int target_class,
                                            const MaskingStrategy& strategy) {
  const InputShape shape = model.input_shape();
  require(image.shape == shape, "confidence_grad_wrt_mask: image shape " +
                                    image.shape.str() + " != model shape " +
                                    shape.str());
  require(mask.height() == shape.height && mask.width() == shape.width,
          "confidence_grad_wrt_mask: mask does not match model shape");
  require(model.differentiable(),
          "confidence_grad_wrt_mask: model is not differentiable; "
          "use the exact mode");
  require(target_class >= 0 && target_class < model.num_classes(),
          "confidence_grad_wrt_mask: target class out of range");

  require(strategy.shape() == shape,
          "confidence_grad_wrt_mask: strategy shape mismatch");
  const Vector& replacement = strategy.replacement();
  const Vector masked = apply_mask_values(image.values, mask, strategy);
  const Vector probs = model.predict_proba_one(masked);
  Vector cotangent = -probs(target_class) * probs;
  cotangent(target_class) += probs(target_class);
  const Vector input_grad = model.logit_vjp(masked, cotangent);

  // d x~ / d M at pixel q channel c is (r - x); sum over channels gives the
  // scalar sensitivity of the confidence to masking pixel q.
  MaskGradientResult result;
  result.grid = Matrix::Zero(shape.height, shape.width);
  for (int pixel = 0; pixel < shape.pixels(); ++pixel) {
    double entry = 0.0;
    for (int c = 0; c < shape.channels; ++c) {
      const int f = pixel * shape.channels + c;
      entry += (replacement(f) - image.values(f)) * input_grad(f);
    }
    result.grid(pixel / shape.width, pixel % shape.width) = entry;
  }
  result.probabilities = probs;
  result.confidence = probs(target_class);
  return result;
}

EnsembleClassifier::EnsembleClassifier(
    std::vector<std::shared_ptr<const Classifier>> members)
    : members_(std::move(members)) {
  require(!members_.empty(), "EnsembleClassifier: no members");
  for (const auto& m : members_) {
    require(m != nullptr, "EnsembleClassifier: null member");
    require(m->input_shape() == members_[0]->input_shape(),
            "EnsembleClassifier: members disagree on input shape");
    require(m->num_classes() == members_[0]->num_classes(),
            "EnsembleClassifier: members disagree on class count");
  }
}

InputShape EnsembleClassifier::input_shape() const {
  return members_[0]->input_shape();
}

int EnsembleClassifier::num_classes() const {
  return members_[0]->num_classes();
}

std::string EnsembleClassifier::describe() const {
  std::ostringstream msg;
  msg << "ensemble(" << members_.size() << ")[" << members_[0]->describe()
      << "]";
  return msg.str();
}

Matrix EnsembleClassifier::logits(const Eigen::Ref<const Matrix>& inputs) const {
  Matrix sum = members_[0]->logits(inputs);
  for (std::size_t i = 1; i < members_.size(); ++i) {
    sum += members_[i]->logits(inputs);
  }
  return sum / static_cast<double>(members_.size());
}

bool EnsembleClassifier::differentiable() const {
  for (const auto& m : members_) {
    if (!m->differentiable()) return false;
  }
  return true;
}

Vector EnsembleClassifier::logit_vjp(const Vector& input,
                                     const Vector& cotangent) const {
  Vector sum = members_[0]->logit_vjp(input, cotangent);
  for (std::size_t i = 1; i < members_.size(); ++i) {
    sum += members_[i]->logit_vjp(input, cotangent);
  }
  return sum / static_cast<double>(members_.size());
}

ConstantClassifier::ConstantClassifier(InputShape shape, Vector probabilities)
    : shape_(shape) {
  require(probabilities.size() >= 2, "ConstantClassifier: need >= 2 classes");
  require((probabilities.array() > 0.0).all(),
          "ConstantClassifier: probabilities must be positive");
  require(std::abs(probabilities.sum() - 1.0) < 1e-9,
          "ConstantClassifier: probabilities must sum to 1");
  log_probs_ = probabilities.array().log().matrix();
}

Matrix ConstantClassifier::logits(const Eigen::Ref<const Matrix>& inputs) const {
  Matrix out(inputs.rows(), log_probs_.size());
  out.rowwise() = log_probs_.transpose();
  return out;
}

Vector ConstantClassifier::logit_vjp(const Vector& input,
                                     const Vector& /*cotangent*/) const {
  return Vector::Zero(input.size());
}

}  // namespace sis
