// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/nn.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace avattn::nn {
namespace {

using avattn::testing::CentralDifference;
using avattn::testing::RelativeError;

/// Checks every analytic gradient in `ps` against central differences of
/// `loss`, which must recompute the forward pass from `ps` values.
void ExpectGradientsMatch(ParameterSet& ps, const std::function<double()>& loss, double tol = 1e-6) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[static_cast<int>(i)];
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      const double numeric = CentralDifference(loss, p.value.data()[k], 1e-6);
      EXPECT_LT(RelativeError(p.grad.data()[k], numeric, 1e-6), tol) << p.name << "[" << k << "]";
    }
  }
}

TEST(Linear, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  ParameterSet ps;
  const Linear fc = Linear::Create(ps, "fc", ParamGroup::kBackbone, 5, 3, 0.5, rng);
  const Eigen::VectorXd x = RandomNormal(5, 1, 1.0, rng);
  const Eigen::VectorXd r = RandomNormal(3, 1, 1.0, rng);
  auto loss = [&] { return r.dot(fc.Forward(ps, x)); };
  ps.ZeroGrad();
  const Eigen::VectorXd dx = fc.Backward(ps, x, r);
  ExpectGradientsMatch(ps, loss);
  Eigen::VectorXd xv = x;
  auto loss_x = [&] { return r.dot(fc.Forward(ps, xv)); };
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(dx[k], CentralDifference(loss_x, xv[k], 1e-6), 1e-8);
}

/// Direct nested-loop convolution with zero padding.
Eigen::MatrixXd NaiveConv(const FeatureMap& x, const Eigen::MatrixXd& w, const Eigen::MatrixXd& b, int k,
                          int stride, int pad, int cout, int& ho, int& wo) {
  ho = (x.height + 2 * pad - k) / stride + 1;
  wo = (x.width + 2 * pad - k) / stride + 1;
  Eigen::MatrixXd y(ho * wo, cout);
  for (int o = 0; o < cout; ++o) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double acc = b(0, o);
        for (int c = 0; c < x.channels(); ++c) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= x.height || ix < 0 || ix >= x.width) continue;
              acc += x.data(iy * x.width + ix, c) * w((c * k + ky) * k + kx, o);
            }
          }
        }
        y(oy * wo + ox, o) = acc;
      }
    }
  }
  return y;
}

class ConvTest : public ::testing::TestWithParam<int> {};

TEST_P(ConvTest, ForwardMatchesNestedLoopsAndGradientsMatchFiniteDifferences) {
  const int stride = GetParam();
  std::mt19937_64 rng(2);
  ParameterSet ps;
  const Conv2d conv = Conv2d::Create(ps, "conv", ParamGroup::kBackbone, 2, 3, 3, stride, 0.3, rng);
  ps[conv.bias].value = RandomNormal(1, 3, 0.1, rng);
  FeatureMap x{RandomNormal(7 * 6, 2, 1.0, rng), 7, 6};

  Conv2d::Cache cache;
  const FeatureMap y = conv.Forward(ps, x, &cache);
  int ho = 0, wo = 0;
  const Eigen::MatrixXd expected = NaiveConv(x, ps[conv.weight].value, ps[conv.bias].value, 3, stride, 1, 3, ho, wo);
  ASSERT_EQ(y.height, ho);
  ASSERT_EQ(y.width, wo);
  EXPECT_LT((y.data - expected).cwiseAbs().maxCoeff(), 1e-12);

  const Eigen::MatrixXd r = RandomNormal(ho * wo, 3, 1.0, rng);
  auto loss = [&] { return (conv.Forward(ps, x, nullptr).data.array() * r.array()).sum(); };
  ps.ZeroGrad();
  const FeatureMap dx = conv.Backward(ps, cache, FeatureMap{r, ho, wo});
  ExpectGradientsMatch(ps, loss);
  for (Eigen::Index k = 0; k < x.data.size(); k += 5) {
    EXPECT_NEAR(dx.data.data()[k], CentralDifference(loss, x.data.data()[k], 1e-6), 1e-7);
  }
}

INSTANTIATE_TEST_SUITE_P(Strides, ConvTest, ::testing::Values(1, 2));

TEST(Lstm, GradientsMatchFiniteDifferencesInBothDirections) {
  for (bool reverse : {false, true}) {
    std::mt19937_64 rng(3);
    ParameterSet ps;
    const Lstm lstm = Lstm::Create(ps, "lstm", ParamGroup::kBackbone, 4, 3, rng);
    Eigen::MatrixXd seq = RandomNormal(5, 4, 1.0, rng);
    const Eigen::VectorXd r = RandomNormal(3, 1, 1.0, rng);
    Lstm::Cache cache;
    lstm.Forward(ps, seq, reverse, &cache);
    auto loss = [&] { return r.dot(lstm.Forward(ps, seq, reverse, nullptr)); };
    ps.ZeroGrad();
    const Eigen::MatrixXd dseq = lstm.Backward(ps, cache, r);
    ExpectGradientsMatch(ps, loss, 1e-4);
    for (Eigen::Index k = 0; k < seq.size(); ++k) {
      EXPECT_NEAR(dseq.data()[k], CentralDifference(loss, seq.data()[k], 1e-6), 1e-8) << reverse;
    }
  }
}

TEST(Lstm, DirectionMattersForAsymmetricSequences) {
  std::mt19937_64 rng(4);
  ParameterSet ps;
  const Lstm lstm = Lstm::Create(ps, "lstm", ParamGroup::kBackbone, 2, 4, rng);
  const Eigen::MatrixXd seq = RandomNormal(6, 2, 1.0, rng);
  EXPECT_GT((lstm.Forward(ps, seq, false, nullptr) - lstm.Forward(ps, seq, true, nullptr)).norm(), 1e-6);
  EXPECT_TRUE(lstm.Forward(ps, seq.colwise().reverse(), true, nullptr)
                  .isApprox(lstm.Forward(ps, seq, false, nullptr), 1e-14));
}

TEST(Adam, MatchesClosedFormUpdate) {
  ParameterSet ps;
  ps.Add("w", ParamGroup::kBackbone, Eigen::MatrixXd::Constant(1, 2, 1.0));
  Adam adam(ps);
  const double g[3] = {0.5, -0.2, 0.1};
  double m = 0, v = 0, w = 1.0;
  for (int t = 1; t <= 3; ++t) {
    ps[0].grad.setConstant(g[t - 1]);
    adam.Step(ps, 0.01);
    m = 0.9 * m + 0.1 * g[t - 1];
    v = 0.999 * v + 0.001 * g[t - 1] * g[t - 1];
    w -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(ps[0].value(0, 1), w, 1e-15);
  }
  EXPECT_EQ(adam.step_count(), 3);
}

TEST(Adam, FirstStepMovesEachWeightByLearningRate) {
  ParameterSet ps;
  ps.Add("w", ParamGroup::kBackbone, Eigen::MatrixXd::Zero(2, 2));
  ps[0].grad << 3.0, -0.001, 1e3, -7.0;
  Adam adam(ps);
  adam.Step(ps, 0.1);
  EXPECT_TRUE(ps[0].value.cwiseAbs().isApprox(Eigen::MatrixXd::Constant(2, 2, 0.1), 1e-4));
}

TEST(ClipGradNorm, RescalesOnlyAboveThreshold) {
  ParameterSet ps;
  ps.Add("a", ParamGroup::kBackbone, Eigen::MatrixXd::Zero(1, 2));
  ps.Add("b", ParamGroup::kHeadGaze, Eigen::MatrixXd::Zero(1, 1));
  ps[0].grad << 3.0, 0.0;
  ps[1].grad << 4.0;
  EXPECT_DOUBLE_EQ(ClipGradNorm(ps, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(ps.GradNorm(), 5.0);
  EXPECT_DOUBLE_EQ(ClipGradNorm(ps, 1.0), 5.0);
  EXPECT_NEAR(ps.GradNorm(), 1.0, 1e-15);
  EXPECT_NEAR(ps[1].grad(0, 0), 0.8, 1e-15);
}

TEST(ParameterSet, HashesTrackValuesAndGroups) {
  std::mt19937_64 rng(5);
  ParameterSet ps;
  Linear::Create(ps, "a", ParamGroup::kBackbone, 2, 2, 0.1, rng);
  Linear::Create(ps, "b", ParamGroup::kHeadGaze, 2, 2, 0.1, rng);
  const std::string backbone = ps.GroupHash(ParamGroup::kBackbone);
  const std::string gaze = ps.GroupHash(ParamGroup::kHeadGaze);
  EXPECT_EQ(backbone.size(), 64u);
  ps[2].value(0, 0) += 1e-12;
  EXPECT_EQ(ps.GroupHash(ParamGroup::kBackbone), backbone);
  EXPECT_NE(ps.GroupHash(ParamGroup::kHeadGaze), gaze);
  EXPECT_EQ(ps.NumScalars(), 12u);
}

}  // namespace
}  // namespace avattn::nn
