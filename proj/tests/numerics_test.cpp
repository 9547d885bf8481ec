#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "coldrec/numerics/adam.hpp"
#include "coldrec/numerics/ops.hpp"
#include "coldrec/numerics/pca.hpp"
#include "gradcheck.hpp"

namespace coldrec::numerics {
namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
  const auto p = softmax(Tensor({3}, {0.0, 0.0, 0.0}));
  for (double x : p.values()) EXPECT_DOUBLE_EQ(x, 1.0 / 3.0);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(3);
  const auto p = softmax(random_tensor({7, 11}, rng, false));
  for (std::size_t r = 0; r < 7; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 11; ++j) s += p[r * 11 + j];
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Ops, MatmulByIdentityIsNoOp) {
  std::mt19937_64 rng(1);
  const auto m = random_tensor({3, 4}, rng, false);
  const Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  // identity on the left: (I M) computed as M^T-free matmul of I against M
  const auto out = matmul(eye, m);
  for (std::size_t i = 0; i < m.numel(); ++i) EXPECT_EQ(out[i], m[i]);
}

TEST(Ops, CrossEntropyHandValue) {
  const Tensor logits({1, 2}, {2.0, 0.0});
  const std::vector<std::int64_t> target{0};
  EXPECT_NEAR(cross_entropy(logits, target).item(), 0.1269280110429726, 1e-15);
}

TEST(Ops, CrossEntropyIgnoresLabelAndStaysNonNegative) {
  std::mt19937_64 rng(5);
  const auto logits = random_tensor({4, 6}, rng);
  const std::vector<std::int64_t> targets{1, -1, 5, -1};
  const auto loss = cross_entropy(logits, targets);
  EXPECT_GE(loss.item(), 0.0);
  backward(loss);
  for (std::size_t j = 0; j < 6; ++j) {
    EXPECT_EQ(logits.grad()[1 * 6 + j], 0.0);
    EXPECT_EQ(logits.grad()[3 * 6 + j], 0.0);
  }
}

TEST(Ops, ShapeMismatchNamesOperationAndShapes) {
  const auto a = Tensor::zeros({2, 3});
  const auto b = Tensor::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,5]"), std::string::npos);
  }
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(mul(a, Tensor::zeros({3, 2})), ShapeError);
}

TEST(Backward, SumOfSquares) {
  const Tensor x({2}, {1.0, 2.0}, true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Backward, ConstantLossLeavesGradientsZero) {
  Tensor p({3}, {1.0, 2.0, 3.0}, true);
  p.mutable_grad();
  const Tensor c({2}, {4.0, 5.0});
  backward(sum(mul(c, c)));
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
  EXPECT_FALSE(c.has_grad());
}

TEST(Backward, NonScalarFails) {
  const Tensor x({2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(mul(x, x)), ShapeError);
}

TEST(Backward, NonParameterLeavesUntouched) {
  const Tensor w({2, 2}, {1, 2, 3, 4}, true);
  const Tensor x({1, 2}, {0.5, -1.0});
  backward(sum(matmul(x, w)));
  EXPECT_TRUE(w.has_grad());
  EXPECT_FALSE(x.has_grad());
}

// Five stacked layers touching every differentiable op the model uses.
TEST(Backward, FiveLayerNetworkMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const std::size_t b = 2, t = 4, m = 6, heads = 2;
  auto table = random_tensor({5, m}, rng);
  auto pos = random_tensor({t, m}, rng);
  auto gain = random_tensor({m}, rng);
  auto bias = random_tensor({m}, rng);
  auto wq = random_tensor({m, m}, rng);
  auto wk = random_tensor({m, m}, rng);
  auto wv = random_tensor({m, m}, rng);
  auto w1 = random_tensor({m, m}, rng);
  auto b1 = random_tensor({m}, rng);
  auto out_table = random_tensor({7, m}, rng);
  const std::vector<std::int64_t> idx{0, 3, 4, -1, 2, 2, 1, 0};
  const std::vector<std::int64_t> pidx{0, 1, 2, 3};
  const std::vector<std::int64_t> targets{1, 6, -1, 0, 2, 3, 4, 5};

  auto loss_fn = [&] {
    std::mt19937_64 drop_rng(99);
    Tensor x = add(embedding(table, idx, {b, t}), embedding(pos, pidx, {t}));
    x = dropout(x, 0.25, drop_rng, true);
    Tensor a = layer_norm(x, gain, bias);
    Tensor q = split_heads(matmul(a, wq), heads);
    Tensor k = split_heads(matmul(a, wk), heads);
    Tensor v = split_heads(matmul(a, wv), heads);
    Tensor att = softmax(causal_mask(scale(batched_matmul(q, k, true), 0.5)));
    x = add(x, merge_heads(batched_matmul(att, v, false), heads));
    x = relu(add(matmul(x, w1), b1));
    return cross_entropy(matmul_transposed(x, out_table), targets);
  };
  const auto params = std::vector<Tensor>{table, pos, gain, bias, wq, wk, wv, w1, b1, out_table};
  EXPECT_LT(testing_support::max_gradient_error(loss_fn, params, 1e-4), 1e-4);
}

TEST(Backward, TakePositionsAndMean) {
  std::mt19937_64 rng(4);
  auto x = random_tensor({3, 4, 2}, rng);
  const std::vector<std::size_t> positions{3, 0, 2};
  auto loss_fn = [&] { return mean(mul(take_positions(x, positions), take_positions(x, positions))); };
  EXPECT_LT(testing_support::max_gradient_error(loss_fn, {x}, 1e-4), 1e-4);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p({1}, {1.0}, true);
  p.mutable_grad()[0] = 1.0;
  std::vector<Parameter> params{{"p", p, {}}};
  AdamState state;
  adam_step(params, state);
  EXPECT_NEAR(p[0], 1.0 - 1e-3, 1e-10);
  EXPECT_EQ(state.step_count, 1);
  EXPECT_EQ(p.grad()[0], 0.0);
}

TEST(Adam, ZeroGradientKeepsParameters) {
  Tensor p({3}, {1.0, -2.0, 0.5}, true);
  p.mutable_grad();
  std::vector<Parameter> params{{"p", p, {}}};
  AdamState state;
  adam_step(params, state);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], -2.0);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_EQ(state.step_count, 1);
}

TEST(Adam, TwoStepsMatchScalarReference) {
  Tensor p({1}, {1.0}, true);
  std::vector<Parameter> params{{"p", p, {}}};
  AdamState state;
  // independent scalar Adam
  double ref = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    p.mutable_grad()[0] = 0.5;
    adam_step(params, state);
    m = 0.9 * m + 0.1 * 0.5;
    v = 0.999 * v + 0.001 * 0.25;
    ref -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(p[0], ref, 1e-12);
  EXPECT_NEAR(p[0], 0.99800000004, 1e-12);
}

TEST(Adam, MissingGradientFails) {
  Tensor p({1}, {1.0}, true);
  std::vector<Parameter> params{{"p", p, {}}};
  AdamState state;
  EXPECT_THROW(adam_step(params, state), std::logic_error);
}

TEST(Adam, MaskedRowsAreBitIdentical) {
  Tensor p({2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
  auto g = p.mutable_grad();
  std::fill(g.begin(), g.end(), 1.0);
  std::vector<Parameter> params{{"p", p, {1, 0}}};
  AdamState state;
  adam_step(params, state);
  EXPECT_NE(p[0], 1.0);
  EXPECT_EQ(p[2], 3.0);
  EXPECT_EQ(p[3], 4.0);
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  // correlated columns so the spectrum is not flat
  for (std::size_t r = 0; r < rows; ++r) {
    double shared = n(rng);
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = n(rng) * (1.0 + 0.3 * c) + shared * (c % 3);
  }
  return m;
}

// Brute-force oracle: standardize, form the covariance, eigendecompose with Eigen.
void expect_matches_eigen(const Matrix& x, std::size_t target) {
  const auto model = fit_pca(x, target);
  Eigen::MatrixXd e = to_eigen(x);
  const Eigen::RowVectorXd mu = e.colwise().mean();
  Eigen::MatrixXd centered = e.rowwise() - mu;
  Eigen::RowVectorXd sd = (centered.array().square().colwise().sum() / e.rows()).sqrt();
  for (Eigen::Index c = 0; c < sd.size(); ++c) centered.col(c) /= sd(c);
  const Eigen::MatrixXd cov = centered.transpose() * centered / double(e.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const auto n = cov.rows();
  for (std::size_t j = 0; j < target; ++j) {
    const Eigen::VectorXd ref = solver.eigenvectors().col(n - 1 - static_cast<Eigen::Index>(j));
    double dot = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) dot += ref(i) * model.components(i, j);
    const double sign = dot < 0 ? -1.0 : 1.0;
    for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(model.components(i, j), sign * ref(i), 1e-6);
    EXPECT_NEAR(model.explained_variance[j], solver.eigenvalues()(n - 1 - static_cast<Eigen::Index>(j)), 1e-9);
  }
}

TEST(Pca, MatchesCovarianceEigendecomposition) { expect_matches_eigen(random_matrix(50, 8, 21), 3); }

TEST(Pca, ComponentsOrthonormalAndSignConvention) {
  const auto model = fit_pca(random_matrix(60, 10, 8), 4);
  for (std::size_t a = 0; a < 4; ++a) {
    std::size_t arg = 0;
    for (std::size_t i = 0; i < 10; ++i) {
      if (std::abs(model.components(i, a)) > std::abs(model.components(arg, a))) arg = i;
    }
    EXPECT_GT(model.components(arg, a), 0.0);
    for (std::size_t b = 0; b < 4; ++b) {
      double d = 0.0;
      for (std::size_t i = 0; i < 10; ++i) d += model.components(i, a) * model.components(i, b);
      EXPECT_NEAR(d, a == b ? 1.0 : 0.0, 1e-6);
    }
  }
  for (std::size_t j = 1; j < 4; ++j) EXPECT_GE(model.explained_variance[j - 1], model.explained_variance[j]);
}

TEST(Pca, LineIn3dGivesCollinearComponent) {
  Matrix x(20, 3);
  const double dir[3] = {1.0 / std::sqrt(14.0), 2.0 / std::sqrt(14.0), 3.0 / std::sqrt(14.0)};
  for (std::size_t r = 0; r < 20; ++r) {
    const double t = static_cast<double>(r) - 7.5;
    for (std::size_t c = 0; c < 3; ++c) x(r, c) = 5.0 + t * dir[c];
  }
  const auto model = fit_pca(x, 1);
  // direction in standardized coordinates
  double expect[3], len = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    expect[c] = dir[c] / model.scale[c];
    len += expect[c] * expect[c];
  }
  double cosine = 0.0;
  for (std::size_t c = 0; c < 3; ++c) cosine += model.components(c, 0) * expect[c] / std::sqrt(len);
  EXPECT_GT(std::abs(cosine), 1.0 - 1e-6);
}

TEST(Pca, FullRankTransformPreservesInnerProducts) {
  const auto x = random_matrix(40, 5, 2);
  const auto model = fit_pca(x, 5);
  auto standardized = [&](std::size_t r) {
    std::vector<double> z(5);
    for (std::size_t c = 0; c < 5; ++c) z[c] = (x(r, c) - model.mean[c]) / model.scale[c];
    return z;
  };
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = 0; b < 5; ++b) {
      EXPECT_NEAR(dot(pca_transform(model, x.row(a)), pca_transform(model, x.row(b))),
                  dot(standardized(a), standardized(b)), 1e-6);
    }
  }
}

TEST(Pca, TransformOfMeanIsZero) {
  const auto model = fit_pca(random_matrix(30, 6, 4), 3);
  for (double y : pca_transform(model, model.mean)) EXPECT_NEAR(y, 0.0, 1e-12);
}

TEST(Pca, RoundTripOnRankDeficientData) {
  // rank-2 data in 6-D: the 2-component model reconstructs it exactly
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix basis(2, 6);
  for (double& v : basis.data()) v = n(rng);
  Matrix x(25, 6);
  for (std::size_t r = 0; r < 25; ++r) {
    const double a = n(rng), b = n(rng);
    for (std::size_t c = 0; c < 6; ++c) x(r, c) = 1.0 + a * basis(0, c) + b * basis(1, c);
  }
  const auto model = fit_pca(x, 2);
  for (std::size_t r = 0; r < 25; ++r) {
    const auto back = pca_inverse(model, pca_transform(model, x.row(r)));
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(back[c], x(r, c), 1e-6);
  }
}

TEST(Pca, TransformedVariancesDescend) {
  const auto x = random_matrix(80, 9, 5);
  const auto model = fit_pca(x, 5);
  std::vector<double> var(5, 0.0);
  for (std::size_t r = 0; r < 80; ++r) {
    const auto y = pca_transform(model, x.row(r));
    for (std::size_t j = 0; j < 5; ++j) var[j] += y[j] * y[j];
  }
  for (std::size_t j = 1; j < 5; ++j) EXPECT_GE(var[j - 1], var[j]);
}

TEST(Pca, ZeroVarianceColumnGetsUnitScale) {
  auto x = random_matrix(10, 4, 6);
  for (std::size_t r = 0; r < 10; ++r) x(r, 2) = 7.0;
  const auto model = fit_pca(x, 2);
  EXPECT_EQ(model.scale[2], 1.0);
}

TEST(Pca, RejectsBadDimensions) {
  EXPECT_THROW(fit_pca(random_matrix(10, 3, 1), 4), std::invalid_argument);
  EXPECT_THROW(fit_pca(random_matrix(1, 3, 1), 1), std::invalid_argument);
  const auto model = fit_pca(random_matrix(10, 3, 1), 2);
  const std::vector<double> wrong(4, 0.0);
  EXPECT_THROW(pca_transform(model, wrong), std::invalid_argument);
}

}  // namespace
}  // namespace coldrec::numerics
