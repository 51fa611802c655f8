#include <gtest/gtest.h>

#include <fstream>

#include "bistnet/btsr.hpp"
#include "bistnet/checkpoint.hpp"
#include "helpers.hpp"

using namespace bistnet;

TEST(Btsr, HeaderLayoutIsLittleEndian) {
  const Tensor t = Tensor::from_values({2, 1}, std::vector<double>{1.0, -2.0}, DType::f32);
  const auto bytes = btsr::encode(t);
  ASSERT_EQ(bytes.size(), 4u + 4 + 1 + 1 + 2 * 8 + 2 * 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "BTSR");
  EXPECT_EQ(bytes[4], 1);  // version, low byte first
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[8], 1);   // f32
  EXPECT_EQ(bytes[9], 2);   // ndim
  EXPECT_EQ(bytes[10], 2);  // dims[0] low byte
  EXPECT_EQ(bytes[18], 1);  // dims[1] low byte
  // 1.0f = 0x3F800000
  EXPECT_EQ(bytes[26], 0x00);
  EXPECT_EQ(bytes[29], 0x3F);
}

TEST(Btsr, RoundTripBothDtypes) {
  for (DType dt : {DType::f32, DType::f64}) {
    const Tensor t = testutil::random_tensor({3, 4, 5}, 9, -3, 3, dt);
    const Tensor back = btsr::decode(btsr::encode(t));
    EXPECT_TRUE(back.bitwise_equal(t));
    EXPECT_EQ(back.dtype(), dt);
  }
  const Tensor s = Tensor::scalar(4.0, DType::f64);
  EXPECT_TRUE(btsr::decode(btsr::encode(s)).bitwise_equal(s));
}

TEST(Btsr, RejectsMalformedInput) {
  auto bytes = btsr::encode(Tensor::zeros({2, 2}));
  auto corrupt = [&](std::size_t at, std::uint8_t value) {
    auto copy = bytes;
    copy[at] = value;
    return copy;
  };
  EXPECT_THROW(btsr::decode(corrupt(0, 'X')), FormatError);
  EXPECT_THROW(btsr::decode(corrupt(4, 2)), FormatError);
  EXPECT_THROW(btsr::decode(corrupt(8, 3)), FormatError);
  EXPECT_THROW(btsr::decode(corrupt(10, 0)), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(btsr::decode(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(btsr::decode(trailing), FormatError);
}

TEST(Btsr, FileRoundTrip) {
  const auto dir = testutil::scratch_dir("btsr");
  const Tensor t = testutil::random_tensor({4, 4, 2}, 5, -1, 1, DType::f32);
  btsr::write(dir / "x.btsr", t);
  EXPECT_TRUE(btsr::read(dir / "x.btsr").bitwise_equal(t));
  EXPECT_THROW(btsr::read(dir / "missing.btsr"), FormatError);
}

TEST(Checkpoint, SaveLoadAndManifest) {
  const auto dir = testutil::scratch_dir("ckpt");
  Checkpoint c;
  c.set("layer.w", testutil::random_tensor({3, 3, 1, 2}, 1, -1, 1, DType::f32));
  c.set("step", Tensor::scalar(7, DType::f64));
  c.save(dir);
  std::ifstream manifest(dir / "manifest.txt");
  std::string line;
  std::getline(manifest, line);
  EXPECT_EQ(line, "layer.w 3x3x1x2 f32 layer.w.btsr");
  std::getline(manifest, line);
  EXPECT_EQ(line, "step scalar f64 step.btsr");
  const Checkpoint back = Checkpoint::load(dir);
  EXPECT_EQ(back.size(), 2u);
  EXPECT_TRUE(back.at("layer.w").bitwise_equal(c.at("layer.w")));
  EXPECT_DOUBLE_EQ(back.at("step").item(), 7.0);
}

TEST(Checkpoint, RejectsBadNamesAndInconsistentManifest) {
  Checkpoint c;
  EXPECT_THROW(c.set("bad name", Tensor::zeros({1})), Error);
  EXPECT_THROW(c.set("../escape", Tensor::zeros({1})), Error);
  EXPECT_THROW(c.at("absent"), Error);
  const auto dir = testutil::scratch_dir("ckpt_bad");
  c.set("a", Tensor::zeros({2}));
  c.save(dir);
  std::ofstream(dir / "manifest.txt") << "a 3 f32 a.btsr\n";
  EXPECT_THROW(Checkpoint::load(dir), FormatError);
}
