// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "losses/losses.hpp"
#include "moe/router.hpp"
#include "test_util.hpp"

namespace moeasr::losses {
namespace {

using testing::gradient_error;
using testing::random_tensor;

Tensor random_lattice(std::size_t frames, std::size_t labels, std::size_t classes, RngStream& rng) {
  return log_softmax(random_tensor({frames * (labels + 1), classes}, rng, 1.5));
}

Tensor as_lattice(const Tensor& rows, std::size_t frames, std::size_t labels) {
  return reshape(rows, {frames, labels + 1, rows.dim(1)});
}

std::vector<std::size_t> random_target(std::size_t labels, std::size_t classes, std::size_t blank,
                                       RngStream& rng) {
  std::vector<std::size_t> y;
  while (y.size() < labels) {
    const std::size_t c = rng.below(classes);
    if (c != blank) y.push_back(c);
  }
  return y;
}

TEST(CrossEntropy, UniformLogits) {
  const std::vector<std::size_t> targets{2, 0, 3};
  EXPECT_NEAR(cross_entropy(Tensor::zeros({3, 4}), targets, 0.0).item(), std::log(4.0), 1e-12);
  EXPECT_NEAR(cross_entropy(Tensor::zeros({3, 4}), targets, 0.3).item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, ConfidentCorrectLogitsApproachZero) {
  Tensor logits = Tensor::from({2, 3}, {50, -50, -50, -50, -50, 50});
  EXPECT_LT(cross_entropy(logits, std::vector<std::size_t>{0, 2}, 0.0).item(), 1e-20);
}

TEST(CrossEntropy, SmoothedTargetHandValue) {
  // V = 2, s = 0.2: q = [0.9, 0.1] for label 0
  Tensor logits = Tensor::from({1, 2}, {1.0, -1.0});
  const double lp0 = -std::log1p(std::exp(-2.0)), lp1 = -2.0 + lp0;
  EXPECT_NEAR(cross_entropy(logits, std::vector<std::size_t>{0}, 0.2).item(), -(0.9 * lp0 + 0.1 * lp1),
              1e-14);
}

TEST(CrossEntropy, PerUtteranceMeanThenBatchMean) {
  RngStream rng(1, 1);
  Tensor logits = random_tensor({5, 3}, rng);
  const std::vector<std::size_t> targets{0, 1, 2, 2, 1};
  const std::vector<std::size_t> offsets{0, 2, 5};
  const double a = cross_entropy(slice_rows(logits, 0, 2), std::span(targets).subspan(0, 2), 0.1).item();
  const double b = cross_entropy(slice_rows(logits, 2, 5), std::span(targets).subspan(2, 3), 0.1).item();
  EXPECT_NEAR(cross_entropy(logits, targets, offsets, 0.1).item(), 0.5 * (a + b), 1e-14);
}

TEST(CrossEntropy, GradientAndErrors) {
  RngStream rng(2, 1);
  Tensor logits = random_tensor({4, 5}, rng);
  const std::vector<std::size_t> targets{4, 0, 2, 2};
  EXPECT_LT(gradient_error([&] { return cross_entropy(logits, targets, 0.1); }, {logits}), 1e-6);
  EXPECT_THROW(cross_entropy(logits, std::vector<std::size_t>{5, 0, 0, 0}, 0.0), ParameterError);
  EXPECT_THROW(cross_entropy(logits, targets, 1.0), ParameterError);
  EXPECT_THROW(cross_entropy(logits, std::vector<std::size_t>{1, 2}, 0.0), DimensionError);
}

TEST(Rnnt, TwoFramesOneLabelUniform) {
  const double half = std::log(0.5);
  Tensor lattice = Tensor::full({2, 2, 2}, half);
  const std::vector<std::size_t> y{1};
  EXPECT_NEAR(rnnt_loss_forward(lattice, y, 0).item(), -std::log(0.25), 1e-12);
  EXPECT_NEAR(rnnt_loss_bruteforce(lattice, y, 0), -std::log(0.25), 1e-12);
  EXPECT_EQ(rnnt_alignment_count(2, 1), 2u);
  EXPECT_EQ(rnnt_alignment_count(3, 0), 1u);
}

TEST(Rnnt, EmptyTargetWithCertainBlank) {
  for (std::size_t frames : {1u, 3u, 6u}) {
    std::vector<double> v(frames * 3, -1e9);
    for (std::size_t t = 0; t < frames; ++t) v[t * 3 + 2] = 0.0;  // blank = 2
    Tensor lattice = Tensor::from({frames, 1, 3}, v);
    EXPECT_NEAR(rnnt_loss_forward(lattice, {}, 2).item(), 0.0, 1e-12);
  }
}

TEST(Rnnt, ForwardMatchesBruteForceSweep) {
  RngStream rng(3, 1);
  for (std::size_t frames = 1; frames <= 4; ++frames)
    for (std::size_t labels = 0; labels <= 3; ++labels)
      for (std::size_t classes : {2u, 3u})
        for (int instance = 0; instance < 20; ++instance) {
          const std::size_t blank = rng.below(classes);
          Tensor lattice = as_lattice(random_lattice(frames, labels, classes, rng), frames, labels);
          const auto y = random_target(labels, classes, blank, rng);
          const double dp = rnnt_loss_forward(lattice, y, blank).item();
          EXPECT_NEAR(dp, rnnt_loss_bruteforce(lattice, y, blank), 1e-10);
          EXPECT_GE(dp, 0.0);
        }
}

TEST(Rnnt, AlignmentCountsMatchBinomial) {
  EXPECT_EQ(rnnt_alignment_count(4, 3), 20u);  // C(6, 3)
  EXPECT_EQ(rnnt_alignment_count(1, 5), 1u);
}

TEST(Rnnt, GradientMatchesFiniteDifferences) {
  RngStream rng(4, 1);
  Tensor logits = random_tensor({3 * 3, 3}, rng);
  const std::vector<std::size_t> y{1, 2};
  auto loss = [&] { return rnnt_loss_forward(as_lattice(log_softmax(logits), 3, 2), y, 0); };
  EXPECT_LT(gradient_error(loss, {logits}), 1e-4);
  Tensor lattice = as_lattice(random_lattice(3, 2, 3, rng), 3, 2);
  EXPECT_LT(gradient_error([&] { return rnnt_loss_forward(lattice, y, 0); }, {lattice}), 1e-6);
}

TEST(Rnnt, Errors) {
  RngStream rng(5, 1);
  Tensor lattice = as_lattice(random_lattice(2, 1, 3, rng), 2, 1);
  EXPECT_THROW(rnnt_loss_forward(lattice, std::vector<std::size_t>{0}, 0), ParameterError);
  EXPECT_THROW(rnnt_loss_forward(lattice, std::vector<std::size_t>{1, 2}, 0), DimensionError);
  EXPECT_THROW(rnnt_loss_forward(lattice, std::vector<std::size_t>{1}, 3), ParameterError);
  EXPECT_THROW(Tensor::zeros({0, 2, 3}), DimensionError);
  Tensor big = as_lattice(random_lattice(8, 5, 3, rng), 8, 5);
  EXPECT_THROW(rnnt_loss_bruteforce(big, random_target(5, 3, 0, rng), 0), ParameterError);
}

TEST(Combine, TotalIsTaskPlusAux) {
  LossBreakdown dense = combine(Tensor::scalar(0.7), {});
  EXPECT_EQ(dense.total.item(), 0.7);
  const Tensor aux[] = {Tensor::scalar(0.01), Tensor::scalar(0.01)};
  LossBreakdown moe = combine(Tensor::scalar(1.0), aux, 3, 40);
  EXPECT_NEAR(moe.total.item(), 1.02, 1e-15);
  EXPECT_NEAR(moe.aux_sum(), 0.02, 1e-15);
  EXPECT_EQ(moe.dropped_tokens, 3u);
  EXPECT_EQ(moe.tokens, 40u);
}

TEST(Combine, GateGradientOnlyWithAux) {
  RngStream rng(6, 1);
  Tensor x = random_tensor({6, 3}, rng);
  Tensor gw = random_tensor({3, 4}, rng);
  gw.set_requires_grad(true);
  Tensor task = Tensor::scalar(2.0);
  combine(task, {}).total.backward();
  EXPECT_FALSE(gw.has_grad());
  const Tensor aux[] = {moe::aux_loss(moe::load_stats(moe::gate(x, gw)), 0.01)};
  combine(task, aux).total.backward();
  ASSERT_TRUE(gw.has_grad());
  double norm = 0.0;
  for (double g : gw.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
}

TEST(Losses, GradientDescentDecreasesLoss) {
  RngStream rng(7, 1);
  Tensor rnnt_logits = random_tensor({4 * 3, 4}, rng);
  Tensor ce_logits = random_tensor({3, 5}, rng);
  const std::vector<std::size_t> y{1, 3};
  const std::vector<std::size_t> ce_targets{0, 4, 2};
  rnnt_logits.set_requires_grad(true);
  ce_logits.set_requires_grad(true);
  double previous = INFINITY;
  for (int step = 0; step < 50; ++step) {
    rnnt_logits.zero_grad();
    ce_logits.zero_grad();
    Tensor total = add(rnnt_loss_forward(as_lattice(log_softmax(rnnt_logits), 4, 2), y, 0),
                       cross_entropy(ce_logits, ce_targets, 0.1));
    total.backward();
    ASSERT_LT(total.item(), previous) << step;
    previous = total.item();
    for (Tensor* t : {&rnnt_logits, &ce_logits}) {
      auto values = t->mutable_data();
      for (std::size_t i = 0; i < values.size(); ++i) values[i] -= 0.1 * t->grad()[i];
    }
  }
}

}  // namespace
}  // namespace moeasr::losses
