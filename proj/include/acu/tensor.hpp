#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace acu {

struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

/// Dense (n, c, h, w) row-major array. Default-constructed tensors are empty;
/// every other constructor requires all four dims >= 1.
template <typename T>
class BasicTensor4 {
 public:
  using value_type = T;

  BasicTensor4() = default;
  explicit BasicTensor4(Shape4 shape, T fill = T(0));
  BasicTensor4(Shape4 shape, std::vector<T> values);
  BasicTensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : BasicTensor4(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  /// One (n, c) image plane, h*w contiguous values.
  std::span<T> plane(std::size_t n, std::size_t c) {
    return std::span<T>(data_).subspan(offset(n, c, 0, 0), shape_.h * shape_.w);
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const {
    return std::span<const T>(data_).subspan(offset(n, c, 0, 0), shape_.h * shape_.w);
  }

  void fill(T value);
  bool all_finite() const;
  T sum() const;

  BasicTensor4& operator+=(const BasicTensor4& other);
  BasicTensor4& operator-=(const BasicTensor4& other);
  BasicTensor4& operator*=(T scale);

  bool operator==(const BasicTensor4& other) const = default;

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

using Tensor4 = BasicTensor4<double>;
using Tensor4f = BasicTensor4<float>;

template <typename T>
BasicTensor4<T> operator+(BasicTensor4<T> a, const BasicTensor4<T>& b) {
  return a += b;
}
template <typename T>
BasicTensor4<T> operator-(BasicTensor4<T> a, const BasicTensor4<T>& b) {
  return a -= b;
}

/// Largest elementwise |a - b|; shapes must match.
double max_abs_diff(const Tensor4& a, const Tensor4& b);
double dot(const Tensor4& a, const Tensor4& b);

Tensor4f to_f32(const Tensor4& t);
Tensor4 to_f64(const Tensor4f& t);

/// i.i.d. N(0, 2 / fan_in) samples. The stream is keyed by (seed, name), so
/// two parameters initialized from the same seed draw independent values.
Tensor4 he_init(Shape4 shape, std::size_t fan_in, std::uint64_t seed, std::string_view name = {});

// ---- binary tensor files -------------------------------------------------

class TensorIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class TensorFormatError : public TensorIoError {
 public:
  using TensorIoError::TensorIoError;
};
class TensorLengthError : public TensorIoError {
 public:
  using TensorIoError::TensorIoError;
};
class TensorOverflowError : public TensorIoError {
 public:
  using TensorIoError::TensorIoError;
};

enum class DType : std::uint8_t { f64 = 0, f32 = 1 };

inline constexpr char kTensorMagic[8] = {'A', 'C', 'U', 'T', 'N', 'S', 'R', '1'};
inline constexpr std::size_t kTensorHeaderBytes = 8 + 1 + 4 * 8;

std::vector<std::uint8_t> encode_tensor(const Tensor4& t);
std::vector<std::uint8_t> encode_tensor(const Tensor4f& t);

/// Parses a complete file image. f32 payloads are widened exactly.
Tensor4 decode_tensor(std::span<const std::uint8_t> bytes);
Tensor4f decode_tensor_f32(std::span<const std::uint8_t> bytes);
DType decode_dtype(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor4& t);
void write_tensor(const std::filesystem::path& path, const Tensor4f& t);
Tensor4 read_tensor(const std::filesystem::path& path);
Tensor4f read_tensor_f32(const std::filesystem::path& path);

}  // namespace acu
