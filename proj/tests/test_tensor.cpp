#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "acu/rng.hpp"
#include "acu/tensor.hpp"

namespace fs = std::filesystem;
using namespace acu;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "acu_test_tensor";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Tensor4, LayoutIsRowMajorNCHW) {
  Tensor4 t(2, 3, 4, 5);
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.offset(1, 2, 3, 4), 119u);
  EXPECT_EQ(t.offset(0, 0, 1, 0), 5u);
  t(1, 0, 0, 0) = 7.0;
  EXPECT_EQ(t[60], 7.0);
  EXPECT_EQ(t.plane(1, 0)[0], 7.0);
}

TEST(Tensor4, RejectsZeroDimsAndWrongLength) {
  EXPECT_THROW(Tensor4(0, 1, 1, 1), std::invalid_argument);
  EXPECT_THROW(Tensor4(Shape4{1, 1, 2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Tensor4, Arithmetic) {
  Tensor4 a(Shape4{1, 1, 1, 3}, {1, 2, 3});
  Tensor4 b(Shape4{1, 1, 1, 3}, {0.5, 0.5, 0.5});
  EXPECT_EQ((a + b).values(), (std::vector<double>{1.5, 2.5, 3.5}));
  EXPECT_EQ((a - b).values(), (std::vector<double>{0.5, 1.5, 2.5}));
  a *= 2.0;
  EXPECT_DOUBLE_EQ(a.sum(), 12.0);
  EXPECT_DOUBLE_EQ(dot(a, b), 6.0);
  EXPECT_DOUBLE_EQ(max_abs_diff(a, b), 5.5);
  EXPECT_THROW(a += Tensor4(1, 1, 1, 2), std::invalid_argument);
}

TEST(HeInit, UnitFanInTwoIsStandardNormalDraw) {
  const Tensor4 t = he_init({1, 1, 1, 1}, 2, 123);
  Rng rng(123, "");
  EXPECT_DOUBLE_EQ(t[0], rng.normal());
  EXPECT_TRUE(std::isfinite(t[0]));
}

TEST(HeInit, SampleVarianceMatchesTwoOverFanIn) {
  const Tensor4 t = he_init({8, 8, 3, 3}, 72, 7);
  ASSERT_EQ(t.size(), 576u);
  const double mean = t.sum() / 576.0;
  double var = 0.0;
  for (double v : t.values()) var += (v - mean) * (v - mean);
  var /= 575.0;
  const double expected = 2.0 / 72.0;
  EXPECT_NEAR(var, expected, 0.2 * expected);
}

TEST(HeInit, DeterministicAndKeyedByName) {
  const Tensor4 a = he_init({4, 4, 3, 3}, 36, 9, "conv1.weights");
  const Tensor4 b = he_init({4, 4, 3, 3}, 36, 9, "conv1.weights");
  const Tensor4 c = he_init({4, 4, 3, 3}, 36, 9, "conv2.weights");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(HeInit, ZeroFanInThrows) {
  EXPECT_THROW(he_init({1, 1, 1, 1}, 0, 0), std::invalid_argument);
}

TEST(TensorFile, RoundTripSmall) {
  const fs::path p = scratch("small.tns");
  write_tensor(p, Tensor4(Shape4{1, 1, 2, 2}, {1, 2, 3, 4}));
  const Tensor4 r = read_tensor(p);
  EXPECT_EQ(r.shape(), (Shape4{1, 1, 2, 2}));
  EXPECT_EQ(r.values(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(TensorFile, HeaderLayoutIsLittleEndian) {
  const auto bytes = encode_tensor(Tensor4(Shape4{1, 2, 3, 258}, 0.0));
  ASSERT_EQ(bytes.size(), kTensorHeaderBytes + 1548u * 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "ACUTNSR1");
  EXPECT_EQ(bytes[8], 0);         // f64
  EXPECT_EQ(bytes[9], 1);         // n
  EXPECT_EQ(bytes[17], 2);        // c
  EXPECT_EQ(bytes[25], 3);        // h
  EXPECT_EQ(bytes[33], 2);        // w = 258 = 0x0102
  EXPECT_EQ(bytes[34], 1);
  const auto f32 = encode_tensor(Tensor4f(Shape4{1, 1, 1, 1}, 1.0f));
  EXPECT_EQ(f32[8], 1);
  // 1.0f = 0x3f800000
  EXPECT_EQ(f32[kTensorHeaderBytes + 3], 0x3f);
  EXPECT_EQ(f32[kTensorHeaderBytes + 2], 0x80);
}

TEST(TensorFile, PropertyRoundTripIsBitExact) {
  Rng rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    const Shape4 s{1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(5), 1 + rng.below(5)};
    Tensor4 t(s);
    for (double& v : t.data()) {
      // Mix of ordinary values, tiny subnormals, negative zero and large magnitudes.
      switch (rng.below(4)) {
        case 0: v = rng.normal(); break;
        case 1: v = std::numeric_limits<double>::denorm_min() * static_cast<double>(rng.below(9)); break;
        case 2: v = -0.0; break;
        default: v = rng.normal() * 1e300; break;
      }
    }
    const auto bytes = encode_tensor(t);
    const Tensor4 back = decode_tensor(bytes);
    ASSERT_EQ(back.shape(), t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
      ASSERT_EQ(std::bit_cast<std::uint64_t>(back[i]), std::bit_cast<std::uint64_t>(t[i]));
    }
    EXPECT_EQ(encode_tensor(back), bytes);

    const Tensor4f tf = to_f32(t);
    const auto fbytes = encode_tensor(tf);
    EXPECT_EQ(decode_dtype(fbytes), DType::f32);
    EXPECT_EQ(encode_tensor(decode_tensor_f32(fbytes)), fbytes);
  }
}

TEST(TensorFile, F32FileWidensExactly) {
  const fs::path p = scratch("f32.tns");
  write_tensor(p, Tensor4f(Shape4{1, 1, 1, 2}, {0.1f, -2.5f}));
  const Tensor4 wide = read_tensor(p);
  EXPECT_EQ(wide[0], static_cast<double>(0.1f));
  EXPECT_EQ(wide[1], -2.5);
}

TEST(TensorFile, BadMagicIsFormatError) {
  auto bytes = encode_tensor(Tensor4(1, 1, 1, 1));
  std::copy_n("XXXXXXX0", 8, bytes.begin());
  const fs::path p = scratch("badmagic.tns");
  write_bytes(p, bytes);
  EXPECT_THROW(read_tensor(p), TensorFormatError);
}

TEST(TensorFile, TruncatedPayloadIsLengthError) {
  auto bytes = encode_tensor(Tensor4(Shape4{1, 1, 2, 2}, {1, 2, 3, 4}));
  bytes.resize(bytes.size() - 8);  // three values left
  EXPECT_THROW(decode_tensor(bytes), TensorLengthError);
  EXPECT_THROW(decode_tensor(std::span(bytes).first(10)), TensorLengthError);
}

TEST(TensorFile, DimsProductOverflowIsOverflowError) {
  auto bytes = encode_tensor(Tensor4(1, 1, 1, 1));
  for (int d = 0; d < 4; ++d) {
    for (int b = 0; b < 8; ++b) bytes[9 + 8 * d + b] = b == 7 ? 0x7f : 0xff;
  }
  EXPECT_THROW(decode_tensor(bytes), TensorOverflowError);
}

TEST(TensorFile, UnknownDtypeIsFormatError) {
  auto bytes = encode_tensor(Tensor4(1, 1, 1, 1));
  bytes[8] = 7;
  EXPECT_THROW(decode_tensor(bytes), TensorFormatError);
}

TEST(TensorFile, MissingFileThrows) {
  EXPECT_THROW(read_tensor(scratch("does_not_exist.tns")), TensorIoError);
}
