#include <gtest/gtest.h>

#include "bistnet/btsr.hpp"
#include "bistnet/ops.hpp"
#include "bistnet/priors.hpp"
#include "helpers.hpp"

using namespace bistnet;

namespace {

Tensor step_image(std::size_t h, std::size_t w, std::size_t step_col) {
  std::vector<double> v(h * w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) v[r * w + c] = c >= step_col ? 100.0 : 0.0;
  return Tensor::from_values({h, w}, v, DType::f64);
}

}  // namespace

TEST(Priors, ConstantFrameHasNoEdges) {
  for (double v : priors::sobel_edge_map(Tensor::full({6, 7}, 42.0)).to_vector()) EXPECT_EQ(v, 0.0);
}

// Hand convolution: next to a 0 -> 100 step the horizontal kernel sums
// (1 + 2 + 1) * 100 = 400 on both sides of the step and 0 elsewhere.
TEST(Priors, VerticalStepHandSobel) {
  const Tensor mag = priors::sobel_magnitude(step_image(5, 8, 4));
  EXPECT_EQ(mag.shape(), (Shape{5, 8, 1}));
  const auto v = mag.to_vector();
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_DOUBLE_EQ(v[r * 8 + c], (c == 3 || c == 4) ? 400.0 : 0.0);
  const auto e = priors::sobel_edge_map(step_image(5, 8, 4)).to_vector();
  EXPECT_EQ(e[3], 1.0);
  EXPECT_EQ(e[0], 0.0);
}

TEST(Priors, EdgeMapIsTransposeEquivariantAndShiftInvariant) {
  const Tensor x = testutil::random_tensor({6, 9}, 4, 0, 100);
  const Tensor e = priors::sobel_edge_map(x);
  const Tensor et = priors::sobel_edge_map(ops::transpose(x));
  EXPECT_LT(testutil::max_abs_diff(ops::transpose(ops::reshape(e, {6, 9})), ops::reshape(et, {9, 6})), 1e-12);
  EXPECT_LT(testutil::max_abs_diff(priors::sobel_edge_map(ops::scalar_add(x, 17.0)), e), 1e-12);
  for (double v : e.to_vector()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Priors, FallbacksWithoutFiles) {
  const Tensor lum = testutil::random_tensor({5, 6}, 1, 0, 100, DType::f32);
  const auto m = priors::load_masks(std::nullopt, std::nullopt, lum, 19);
  EXPECT_EQ(m.seg.shape(), (Shape{5, 6, 19}));
  EXPECT_EQ(m.seg_source, priors::SegSource::uniform_fallback);
  EXPECT_EQ(m.edge_source, priors::EdgeSource::builtin_sobel);
  for (double v : m.seg.to_vector()) EXPECT_NEAR(v, 1.0 / 19.0, 1e-7);
  EXPECT_LT(testutil::max_abs_diff(m.edge, priors::sobel_edge_map(lum)), 1e-7);
  EXPECT_NO_THROW(m.validate());
}

TEST(Priors, ImportedFilesAreAcceptedAndRenormalized) {
  const auto dir = testutil::scratch_dir("priors");
  std::vector<double> seg(4 * 4 * 3);
  for (std::size_t p = 0; p < 16; ++p) {
    seg[p * 3] = 0.2;
    seg[p * 3 + 1] = 0.3;
    seg[p * 3 + 2] = 0.503;  // sums to 1.003
  }
  btsr::write(priors::seg_file(dir, "f0"), Tensor::from_values({4, 4, 3}, seg));
  btsr::write(priors::edge_file(dir, "f0"), testutil::random_tensor({4, 4, 1}, 2, 0, 1, DType::f32));
  EXPECT_EQ(priors::seg_file(dir, "f0").filename(), "f0_seg.btsr");
  const auto m = priors::load_masks(priors::seg_file(dir, "f0"), priors::edge_file(dir, "f0"),
                                    Tensor::zeros({4, 4}), 3);
  EXPECT_EQ(m.seg_source, priors::SegSource::imported);
  EXPECT_EQ(m.edge_source, priors::EdgeSource::imported);
  const auto s = m.seg.to_vector();
  EXPECT_NEAR(s[0] + s[1] + s[2], 1.0, 1e-6);
  EXPECT_TRUE(m.edge.bitwise_equal(btsr::read(priors::edge_file(dir, "f0"))));
}

TEST(Priors, RejectsBadFiles) {
  const auto dir = testutil::scratch_dir("priors_bad");
  btsr::write(dir / "half_seg.btsr", Tensor::full({4, 4, 2}, 0.25));
  btsr::write(dir / "wrong_seg.btsr", Tensor::full({4, 5, 2}, 0.5));
  btsr::write(dir / "range_edge.btsr", Tensor::full({4, 4, 1}, 1.5));
  const Tensor lum = Tensor::zeros({4, 4});
  EXPECT_THROW(priors::load_masks(dir / "half_seg.btsr", std::nullopt, lum, 2), Error);
  EXPECT_THROW(priors::load_masks(dir / "wrong_seg.btsr", std::nullopt, lum, 2), ShapeError);
  EXPECT_THROW(priors::load_masks(std::nullopt, dir / "range_edge.btsr", lum, 2), Error);
  EXPECT_THROW(priors::load_masks(dir / "missing_seg.btsr", std::nullopt, lum, 2), FormatError);
}
