#include <gtest/gtest.h>

#include <cmath>

#include "bistnet/btsr.hpp"
#include "bistnet/features.hpp"
#include "bistnet/ops.hpp"
#include "helpers.hpp"

using namespace bistnet;

TEST(Features, PyramidShapes) {
  const auto w = features::make_extractor(3);
  const auto p = features::extract_luminance(Tensor::full({16, 24}, 40.0), w);
  ASSERT_EQ(p.levels.size(), 2u);
  EXPECT_EQ(p.levels[0].index, 1u);
  EXPECT_EQ(p.levels[0].denominator, 4u);
  EXPECT_EQ(p.levels[0].map.shape(), (Shape{4, 6, 64}));
  EXPECT_EQ(p.coarsest().denominator, 8u);
  EXPECT_EQ(p.coarsest().map.shape(), (Shape{2, 3, 64}));
  const auto odd = features::extract_luminance(Tensor::full({17, 9}, 40.0), w);
  EXPECT_EQ(odd.coarsest().map.shape(), (Shape{3, 2, 64}));
}

TEST(Features, SeededInitIsDeterministicAndOrthonormalWherePossible) {
  const auto a = features::make_extractor(5, DType::f64);
  const auto b = features::make_extractor(5, DType::f64);
  const auto c = features::make_extractor(6, DType::f64);
  EXPECT_TRUE(a.weight[1].bitwise_equal(b.weight[1]));
  EXPECT_FALSE(a.weight[1].bitwise_equal(c.weight[1]));
  // Stage 2: 32 output rows of length 3*3*16 = 144, orthogonal with norm sqrt(2).
  const Tensor m = ops::transpose(ops::reshape(a.weight[1], {144, 32}));
  const auto gram = ops::matmul(m, ops::transpose(m)).to_vector();
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 32; ++j) EXPECT_NEAR(gram[i * 32 + j], i == j ? 2.0 : 0.0, 1e-9);
  for (double v : a.bias[0].to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(Features, StoreLoadRoundTrip) {
  const auto w = features::make_extractor(9);
  Checkpoint ckpt;
  EXPECT_FALSE(features::has_extractor(ckpt));
  features::store_extractor(w, ckpt);
  EXPECT_TRUE(features::has_extractor(ckpt));
  const auto back = features::load_extractor(ckpt);
  for (int s = 0; s < 4; ++s) EXPECT_TRUE(back.weight[s].bitwise_equal(w.weight[s]));
}

TEST(Features, ExtractionIsDifferentiable) {
  const auto w = features::make_extractor(2, DType::f64);
  const Tensor x = testutil::random_tensor({8, 8}, 7);
  const double err = finite_difference_check(
      [&](const Tensor& t) { return ops::mean(ops::square(features::extract(t, w).coarsest().map)); }, x, 1e-6);
  EXPECT_LT(err, 1e-6);
}

TEST(Features, ImportExportedPyramid) {
  const auto dir = testutil::scratch_dir("pyramid");
  // A 224x384 frame with a 1/8 map of 28x48 and a 1/4 map of 56x96.
  btsr::write(features::pyramid_file(dir, "00006", 2), Tensor::zeros({28, 48, 512}));
  btsr::write(features::pyramid_file(dir, "00006", 1), Tensor::zeros({56, 96, 256}, DType::f64));
  EXPECT_EQ(features::pyramid_file(dir, "00006", 2).filename(), "00006_L2.btsr");
  const std::vector<std::filesystem::path> files{dir / "00006_L2.btsr", dir / "00006_L1.btsr"};
  const auto p = features::import_pyramid(files, 224, 384);
  EXPECT_EQ(p.source, features::PyramidSource::imported);
  ASSERT_EQ(p.levels.size(), 2u);
  EXPECT_EQ(p.levels[0].index, 1u);
  EXPECT_EQ(p.levels[0].map.dtype(), DType::f32);
  EXPECT_EQ(p.coarsest().map.shape(), (Shape{28, 48, 512}));
}

TEST(Features, ImportRejectsBadFiles) {
  const auto dir = testutil::scratch_dir("pyramid_bad");
  btsr::write(dir / "f_L2.btsr", Tensor::zeros({3, 3, 8}));
  btsr::write(dir / "f_level2.btsr", Tensor::zeros({2, 2, 8}));
  btsr::write(dir / "g_L2.btsr", Tensor::zeros({2, 2, 8}));
  std::vector<std::filesystem::path> wrong_dims{dir / "f_L2.btsr"};
  EXPECT_THROW(features::import_pyramid(wrong_dims, 16, 16), ShapeError);
  std::vector<std::filesystem::path> bad_name{dir / "f_level2.btsr"};
  EXPECT_THROW(features::import_pyramid(bad_name, 16, 16), FormatError);
  std::vector<std::filesystem::path> dup{dir / "g_L2.btsr", dir / "g_L2.btsr"};
  EXPECT_THROW(features::import_pyramid(dup, 16, 16), FormatError);
}
