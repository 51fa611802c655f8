#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bistnet/autograd.hpp"
#include "bistnet/ops.hpp"
#include "helpers.hpp"

using namespace bistnet;

TEST(Autograd, SimpleChainRule) {
  Tape tape;
  const Tensor x = Tensor::from_values({3}, std::vector<double>{1, 2, 3}, DType::f64).with_grad();
  const Tensor loss = ops::sum(ops::square(ops::scalar_mul(x, 2.0)));
  const GradientMap g = tape.backward(loss);
  EXPECT_EQ(g.at(x).to_vector(), (std::vector<double>{8, 16, 24}));
}

TEST(Autograd, FanOutAccumulates) {
  Tape tape;
  const Tensor x = Tensor::from_values({2}, std::vector<double>{1, -3}, DType::f64).with_grad();
  const Tensor loss = ops::sum(ops::add(ops::mul(x, x), x));
  EXPECT_EQ(tape.backward(loss).at(x).to_vector(), (std::vector<double>{3, -5}));
}

TEST(Autograd, NoGradGuardSuspendsRecording) {
  Tape tape;
  const Tensor x = Tensor::zeros({2}, DType::f64).with_grad();
  {
    NoGradGuard guard;
    const Tensor y = ops::add(x, x);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_TRUE(ops::add(x, x).requires_grad());
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Autograd, NoTapeMeansNoRecording) {
  const Tensor x = Tensor::zeros({2}).with_grad();
  EXPECT_FALSE(ops::add(x, x).requires_grad());
}

TEST(Autograd, NestedTapesCaptureInnermost) {
  Tape outer;
  const Tensor x = Tensor::zeros({2}).with_grad();
  {
    Tape inner;
    (void)ops::add(x, x);
    EXPECT_EQ(inner.size(), 1u);
  }
  EXPECT_EQ(outer.size(), 0u);
  EXPECT_EQ(Tape::current(), &outer);
}

TEST(Autograd, BackwardRejectsNonScalarAndEmptyTape) {
  Tape tape;
  EXPECT_THROW(tape.backward(Tensor::scalar(1.0)), Error);
  const Tensor x = Tensor::zeros({2}).with_grad();
  EXPECT_THROW(tape.backward(ops::add(x, x)), ShapeError);
}

TEST(Autograd, MissingGradientIsZerosOrThrows) {
  Tape tape;
  const Tensor x = Tensor::zeros({2}, DType::f64).with_grad();
  const Tensor unused = Tensor::zeros({3}, DType::f64).with_grad();
  const GradientMap g = tape.backward(ops::sum(x));
  EXPECT_FALSE(g.contains(unused));
  EXPECT_THROW(g.at(unused), Error);
  EXPECT_EQ(g.get_or_zeros(unused).to_vector(), (std::vector<double>{0, 0, 0}));
}

TEST(Autograd, FiniteChecksRejectNonFiniteFromFiniteInputs) {
  ASSERT_TRUE(finite_checks());
  const Tensor big = Tensor::full({2}, 1e300, DType::f64);
  EXPECT_THROW(ops::mul(big, big), NumericError);
  const Tensor inf = Tensor::full({2}, std::numeric_limits<double>::infinity(), DType::f64);
  EXPECT_NO_THROW(ops::add(inf, inf));
}

TEST(Autograd, FiniteDifferenceCheckAgreesOnSmoothFunction) {
  const Tensor x = testutil::random_tensor({6}, 3);
  EXPECT_LT(finite_difference_check([](const Tensor& t) { return ops::sum(ops::square(t)); }, x, 1e-6), 1e-6);
  EXPECT_THROW(finite_difference_check([](const Tensor& t) { return ops::sum(t); }, x.to(DType::f32), 1e-6),
               DTypeError);
}
