#include "lasa/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace lasa {
namespace {

double loss_at(const ModelState& m, const Vector& params, const Matrix& x, const std::vector<int>& y) {
  ModelState probe = m;
  probe.params = LayeredUpdate(params, m.shape.layout());
  return forward_backward(probe, x, y).loss;
}

Matrix random_features(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal;
  Matrix x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  return x;
}

TEST(ModelShape, LayoutsNameEveryParameterLayer) {
  const ModelShape lr{Architecture::kLogReg, 5, 0, 3};
  const Layout a = lr.layout();
  ASSERT_EQ(a.num_layers(), 2u);
  EXPECT_EQ(a.layer(0).name, "fc.weight");
  EXPECT_EQ(a.layer(0).length, 15u);
  EXPECT_EQ(a.layer(1).length, 3u);

  const ModelShape mlp{Architecture::kMlp2, 5, 4, 3};
  const Layout b = mlp.layout();
  ASSERT_EQ(b.num_layers(), 4u);
  EXPECT_EQ(b.dimension(), 5u * 4 + 4 + 4 * 3 + 3);
  EXPECT_EQ(architecture_key(parse_architecture("mlp2")), "mlp2");
  EXPECT_THROW(parse_architecture("resnet"), Error);
}

TEST(ForwardBackward, UniformSoftmaxGivesLogTwo) {
  const ModelState m = ModelState::zeros({Architecture::kLogReg, 3, 0, 2});
  Matrix x(2, 3);
  x << 1, 2, 3, -1, 0, 4;
  const std::vector<int> y{0, 1};
  EXPECT_NEAR(forward_backward(m, x, y).loss, std::log(2.0), 1e-15);
}

TEST(ForwardBackward, RejectsBadInputs) {
  const ModelState m = ModelState::zeros({Architecture::kLogReg, 3, 0, 2});
  const std::vector<int> y{0};
  EXPECT_THROW(forward_backward(m, Matrix::Zero(1, 4), y), Error);
  EXPECT_THROW(forward_backward(m, Matrix::Zero(0, 3), std::vector<int>{}), Error);
  EXPECT_THROW(forward_backward(m, Matrix::Zero(2, 3), y), Error);
  EXPECT_THROW(forward_backward(m, Matrix::Zero(1, 3), std::vector<int>{2}), Error);
}

class FiniteDifference : public ::testing::TestWithParam<Architecture> {};

TEST_P(FiniteDifference, MatchesCentralDifferencesOnRandomCoordinates) {
  Rng rng(77);
  const ModelShape shape{GetParam(), 6, 5, 4};
  const ModelState m = ModelState::random(shape, rng);
  const Matrix x = random_features(rng, 8, 6);
  const std::vector<int> y{0, 1, 2, 3, 3, 2, 1, 0};
  const Vector grad = forward_backward(m, x, y).gradient.values();
  std::uniform_int_distribution<Eigen::Index> coord(0, grad.size() - 1);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index j = coord(rng);
    Vector plus = m.params.values(), minus = m.params.values();
    plus(j) += h;
    minus(j) -= h;
    const double fd = (loss_at(m, plus, x, y) - loss_at(m, minus, x, y)) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(grad(j)), 1e-3});
    EXPECT_LE(std::abs(fd - grad(j)) / scale, 1e-6) << "coordinate " << j;
  }
}

INSTANTIATE_TEST_SUITE_P(BothArchitectures, FiniteDifference,
                         ::testing::Values(Architecture::kLogReg, Architecture::kMlp2));

TEST(ForwardBackward, DuplicatedSampleDoublesItsContribution) {
  Rng rng(5);
  const ModelState m = ModelState::random({Architecture::kMlp2, 3, 4, 3}, rng);
  const Matrix x = random_features(rng, 2, 3);
  const std::vector<int> y{0, 2};
  const Vector g0 = forward_backward(m, x.topRows(1), std::vector<int>{0}).gradient.values();
  const Vector g1 = forward_backward(m, x.bottomRows(1), std::vector<int>{2}).gradient.values();
  Matrix dup(3, 3);
  dup << x.row(0), x.row(1), x.row(1);
  const Vector g = forward_backward(m, dup, std::vector<int>{0, 2, 2}).gradient.values();
  EXPECT_LE((3.0 * g - (g0 + 2.0 * g1)).norm(), 1e-12);
}

TEST(Accuracy, CountsArgmaxMatches) {
  ModelState m = ModelState::zeros({Architecture::kLogReg, 2, 0, 2});
  Vector p = m.params.values();
  // weight row-major (class x input): class 0 reads x0, class 1 reads x1
  p(0) = 1.0;
  p(3) = 1.0;
  m.params = LayeredUpdate(p, m.shape.layout());
  Matrix x(4, 2);
  x << 2, 1, 0, 3, 5, 4, 1, 2;
  EXPECT_DOUBLE_EQ(accuracy(m, x, std::vector<int>{0, 1, 0, 0}), 0.75);
  EXPECT_EQ(logits(m, x).rows(), 4);
  EXPECT_EQ(logits(m, x).cols(), 2);
}

TEST(ModelState, RandomInitIsBoundedAndSeeded) {
  const ModelShape shape{Architecture::kMlp2, 9, 4, 3};
  Rng a(3), b(3);
  const ModelState m = ModelState::random(shape, a);
  EXPECT_EQ(m.params.values(), ModelState::random(shape, b).params.values());
  const Vector w1 = slice_layer(m.params, 0);
  EXPECT_LE(w1.cwiseAbs().maxCoeff(), 1.0 / 3.0);
  EXPECT_EQ(Vector(slice_layer(m.params, 1)), Vector(Vector::Zero(4)));
}

}  // namespace
}  // namespace lasa
