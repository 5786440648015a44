#include "lasa/model.hpp"

#include <cmath>

namespace lasa {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajor>;

ConstWeights weight_view(const LayeredUpdate& p, std::size_t layer, std::size_t rows, std::size_t cols) {
  const auto& spec = p.layout().layer(layer);
  return ConstWeights(p.values().data() + spec.offset, static_cast<Eigen::Index>(rows),
                      static_cast<Eigen::Index>(cols));
}

Eigen::Map<const Vector> bias_view(const LayeredUpdate& p, std::size_t layer) {
  const auto& spec = p.layout().layer(layer);
  return Eigen::Map<const Vector>(p.values().data() + spec.offset, static_cast<Eigen::Index>(spec.length));
}

void check_inputs(const ModelState& model, const Eigen::Ref<const Matrix>& features, std::size_t label_count) {
  if (features.rows() == 0) throw Error("empty minibatch");
  if (static_cast<std::size_t>(features.cols()) != model.shape.inputs) {
    throw Error("feature dimension " + std::to_string(features.cols()) + " does not match model input " +
                std::to_string(model.shape.inputs));
  }
  if (label_count != static_cast<std::size_t>(features.rows())) throw Error("label count does not match rows");
}

/// Row-wise softmax in place, returns per-row log-sum-exp.
Vector softmax_rows(Matrix& scores) {
  Vector lse(scores.rows());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double peak = scores.row(r).maxCoeff();
    scores.row(r).array() = (scores.row(r).array() - peak).exp();
    const double total = scores.row(r).sum();
    scores.row(r) /= total;
    lse(r) = peak + std::log(total);
  }
  return lse;
}

}  // namespace

Architecture parse_architecture(std::string_view key) {
  if (key == "logreg") return Architecture::kLogReg;
  if (key == "mlp2") return Architecture::kMlp2;
  throw Error("unknown architecture '" + std::string(key) + "'");
}

std::string_view architecture_key(Architecture arch) {
  return arch == Architecture::kLogReg ? "logreg" : "mlp2";
}

Layout ModelShape::layout() const {
  if (inputs == 0 || classes < 2) throw Error("model needs inputs >= 1 and classes >= 2");
  if (arch == Architecture::kLogReg) {
    return Layout::from_lengths({{"fc.weight", classes * inputs}, {"fc.bias", classes}});
  }
  if (hidden == 0) throw Error("mlp2 needs a hidden width");
  return Layout::from_lengths({{"fc1.weight", hidden * inputs},
                               {"fc1.bias", hidden},
                               {"fc2.weight", classes * hidden},
                               {"fc2.bias", classes}});
}

ModelState ModelState::zeros(const ModelShape& shape) {
  return {shape, LayeredUpdate::zeros(shape.layout())};
}

ModelState ModelState::random(const ModelShape& shape, Rng& rng) {
  const Layout layout = shape.layout();
  Vector values = Vector::Zero(static_cast<Eigen::Index>(layout.dimension()));
  auto fill = [&](std::size_t layer, std::size_t fan_in) {
    const auto& spec = layout.layer(layer);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (std::size_t j = 0; j < spec.length; ++j) values(static_cast<Eigen::Index>(spec.offset + j)) = uniform(rng);
  };
  if (shape.arch == Architecture::kLogReg) {
    fill(0, shape.inputs);
  } else {
    fill(0, shape.inputs);
    fill(2, shape.hidden);
  }
  return {shape, LayeredUpdate(std::move(values), layout)};
}

Matrix logits(const ModelState& model, const Eigen::Ref<const Matrix>& features) {
  const auto& s = model.shape;
  if (static_cast<std::size_t>(features.cols()) != s.inputs) throw Error("feature dimension mismatch");
  if (s.arch == Architecture::kLogReg) {
    const auto w = weight_view(model.params, 0, s.classes, s.inputs);
    return (features * w.transpose()).rowwise() + bias_view(model.params, 1).transpose();
  }
  const auto w1 = weight_view(model.params, 0, s.hidden, s.inputs);
  const auto w2 = weight_view(model.params, 2, s.classes, s.hidden);
  const Matrix hidden =
      ((features * w1.transpose()).rowwise() + bias_view(model.params, 1).transpose()).cwiseMax(0.0);
  return (hidden * w2.transpose()).rowwise() + bias_view(model.params, 3).transpose();
}

LossAndGradient forward_backward(const ModelState& model, const Eigen::Ref<const Matrix>& features,
                                 std::span<const int> labels) {
  check_inputs(model, features, labels.size());
  const auto& s = model.shape;
  const auto rows = features.rows();
  const double inv_rows = 1.0 / static_cast<double>(rows);
  const auto classes = static_cast<Eigen::Index>(s.classes);

  Matrix hidden;
  Matrix scores;
  if (s.arch == Architecture::kLogReg) {
    scores = logits(model, features);
  } else {
    const auto w1 = weight_view(model.params, 0, s.hidden, s.inputs);
    const auto w2 = weight_view(model.params, 2, s.classes, s.hidden);
    hidden = ((features * w1.transpose()).rowwise() + bias_view(model.params, 1).transpose()).cwiseMax(0.0);
    scores = (hidden * w2.transpose()).rowwise() + bias_view(model.params, 3).transpose();
  }

  double loss = 0.0;
  Matrix probs = scores;
  const Vector lse = softmax_rows(probs);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= classes) throw Error("label out of range");
    loss += lse(r) - scores(r, y);
    probs(r, y) -= 1.0;
  }
  loss *= inv_rows;
  const Matrix& dscores = probs;  // d loss / d scores, times rows

  Vector grad(static_cast<Eigen::Index>(model.params.dimension()));
  const auto& layout = model.params.layout();
  auto put_weight = [&](std::size_t layer, const Matrix& g) {
    Eigen::Map<RowMajor>(grad.data() + layout.layer(layer).offset, g.rows(), g.cols()) = g;
  };
  auto put_bias = [&](std::size_t layer, const Vector& g) {
    grad.segment(static_cast<Eigen::Index>(layout.layer(layer).offset), g.size()) = g;
  };

  if (s.arch == Architecture::kLogReg) {
    put_weight(0, dscores.transpose() * features * inv_rows);
    put_bias(1, dscores.colwise().sum().transpose() * inv_rows);
  } else {
    const auto w2 = weight_view(model.params, 2, s.classes, s.hidden);
    put_weight(2, dscores.transpose() * hidden * inv_rows);
    put_bias(3, dscores.colwise().sum().transpose() * inv_rows);
    Matrix dhidden = dscores * w2;
    dhidden.array() *= (hidden.array() > 0.0).cast<double>();
    put_weight(0, dhidden.transpose() * features * inv_rows);
    put_bias(1, dhidden.colwise().sum().transpose() * inv_rows);
  }
  return {loss, LayeredUpdate(std::move(grad), layout)};
}

double accuracy(const ModelState& model, const Eigen::Ref<const Matrix>& features, std::span<const int> labels) {
  if (features.rows() == 0) return 0.0;
  const Matrix scores = logits(model, features);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    scores.row(r).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

}  // namespace lasa
