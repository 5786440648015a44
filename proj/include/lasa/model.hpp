#pragma once

#include "lasa/rng.hpp"
#include "lasa/update.hpp"

#include <span>
#include <string_view>

namespace lasa {

enum class Architecture { kLogReg, kMlp2 };

Architecture parse_architecture(std::string_view key);
std::string_view architecture_key(Architecture arch);

struct ModelShape {
  Architecture arch = Architecture::kLogReg;
  std::size_t inputs = 0;
  std::size_t hidden = 0;  ///< mlp2 only
  std::size_t classes = 0;

  /// logreg: fc.weight, fc.bias. mlp2: fc1.weight, fc1.bias, fc2.weight, fc2.bias.
  /// Weights are row-major (out x in).
  Layout layout() const;
};

/// Classifier parameters. `params` always follows `shape.layout()`.
struct ModelState {
  ModelShape shape;
  LayeredUpdate params;

  static ModelState zeros(const ModelShape& shape);
  /// Weights uniform in +-1/sqrt(fan_in), biases zero.
  static ModelState random(const ModelShape& shape, Rng& rng);
};

struct LossAndGradient {
  double loss = 0.0;
  LayeredUpdate gradient;
};

/// Mean softmax cross-entropy over the rows of `features` and its exact
/// gradient with respect to every parameter.
LossAndGradient forward_backward(const ModelState& model, const Eigen::Ref<const Matrix>& features,
                                 std::span<const int> labels);

/// Class scores for each row.
Matrix logits(const ModelState& model, const Eigen::Ref<const Matrix>& features);

double accuracy(const ModelState& model, const Eigen::Ref<const Matrix>& features, std::span<const int> labels);

}  // namespace lasa
