#include "acu/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "acu/rng.hpp"

namespace acu {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

namespace {

void require_valid(const Shape4& s) {
  if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
    throw std::invalid_argument("tensor dims must all be >= 1, got " + s.str());
  }
}

template <typename T>
void require_same_shape(const BasicTensor4<T>& a, const BasicTensor4<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace

template <typename T>
BasicTensor4<T>::BasicTensor4(Shape4 shape, T fill) : shape_(shape) {
  require_valid(shape_);
  data_.assign(shape_.numel(), fill);
}

template <typename T>
BasicTensor4<T>::BasicTensor4(Shape4 shape, std::vector<T> values)
    : shape_(shape), data_(std::move(values)) {
  require_valid(shape_);
  if (data_.size() != shape_.numel()) {
    throw std::invalid_argument("tensor " + shape_.str() + " needs " +
                                std::to_string(shape_.numel()) + " values, got " +
                                std::to_string(data_.size()));
  }
}

template <typename T>
void BasicTensor4<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool BasicTensor4<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
T BasicTensor4<T>::sum() const {
  T s = 0;
  for (T v : data_) s += v;
  return s;
}

template <typename T>
BasicTensor4<T>& BasicTensor4<T>::operator+=(const BasicTensor4& other) {
  require_same_shape(*this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

template <typename T>
BasicTensor4<T>& BasicTensor4<T>::operator-=(const BasicTensor4& other) {
  require_same_shape(*this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

template <typename T>
BasicTensor4<T>& BasicTensor4<T>::operator*=(T scale) {
  for (T& v : data_) v *= scale;
  return *this;
}

template class BasicTensor4<double>;
template class BasicTensor4<float>;

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
  require_same_shape(a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double dot(const Tensor4& a, const Tensor4& b) {
  require_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Tensor4f to_f32(const Tensor4& t) {
  std::vector<float> v(t.values().begin(), t.values().end());
  return Tensor4f(t.shape(), std::move(v));
}

Tensor4 to_f64(const Tensor4f& t) {
  std::vector<double> v(t.values().begin(), t.values().end());
  return Tensor4(t.shape(), std::move(v));
}

Tensor4 he_init(Shape4 shape, std::size_t fan_in, std::uint64_t seed, std::string_view name) {
  if (fan_in == 0) throw std::invalid_argument("he_init: fan_in must be > 0");
  Tensor4 t(shape);
  Rng rng(seed, name);
  const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = sigma * rng.normal();
  return t;
}

// ---- binary format ---------------------------------------------------------

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}

template <typename T>
std::vector<std::uint8_t> encode_impl(const BasicTensor4<T>& t, DType dtype) {
  if (t.empty()) throw std::invalid_argument("cannot encode an empty tensor");
  std::vector<std::uint8_t> out(sizeof(kTensorMagic) + 1);
  out.reserve(kTensorHeaderBytes + t.size() * sizeof(T));
  std::copy(std::begin(kTensorMagic), std::end(kTensorMagic), out.begin());
  out[sizeof(kTensorMagic)] = static_cast<std::uint8_t>(dtype);
  put_u64(out, t.n());
  put_u64(out, t.c());
  put_u64(out, t.h());
  put_u64(out, t.w());
  for (T v : t.values()) {
    if constexpr (sizeof(T) == 8) {
      put_u64(out, std::bit_cast<std::uint64_t>(v));
    } else {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

struct Header {
  DType dtype;
  Shape4 shape;
  std::size_t count;
};

Header parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kTensorHeaderBytes) {
    throw TensorLengthError("tensor file too short for header: " + std::to_string(bytes.size()) +
                            " bytes");
  }
  if (!std::equal(std::begin(kTensorMagic), std::end(kTensorMagic), bytes.begin())) {
    throw TensorFormatError("bad tensor magic (expected ACUTNSR1)");
  }
  const std::uint8_t dt = bytes[8];
  if (dt > 1) throw TensorFormatError("unknown dtype code " + std::to_string(dt));
  std::uint64_t dims[4];
  std::uint64_t count = 1;
  for (int i = 0; i < 4; ++i) {
    dims[i] = get_u64(bytes.subspan(9 + 8 * i, 8));
    if (dims[i] == 0) throw TensorFormatError("tensor dim " + std::to_string(i) + " is zero");
    if (count > std::numeric_limits<std::uint64_t>::max() / dims[i]) {
      throw TensorOverflowError("tensor dims product overflows 64 bits");
    }
    count *= dims[i];
  }
  const std::uint64_t elem = dt == 0 ? 8 : 4;
  if (count > std::numeric_limits<std::uint64_t>::max() / elem) {
    throw TensorOverflowError("tensor payload size overflows 64 bits");
  }
  const std::uint64_t payload = bytes.size() - kTensorHeaderBytes;
  if (payload != count * elem) {
    throw TensorLengthError("tensor payload has " + std::to_string(payload) + " bytes, dims need " +
                            std::to_string(count * elem));
  }
  return {static_cast<DType>(dt), Shape4{dims[0], dims[1], dims[2], dims[3]},
          static_cast<std::size_t>(count)};
}

template <typename T>
BasicTensor4<T> decode_impl(std::span<const std::uint8_t> bytes) {
  const Header hdr = parse_header(bytes);
  std::vector<T> values(hdr.count);
  auto p = bytes.subspan(kTensorHeaderBytes);
  for (std::size_t i = 0; i < hdr.count; ++i) {
    if (hdr.dtype == DType::f64) {
      values[i] = static_cast<T>(std::bit_cast<double>(get_u64(p.subspan(8 * i, 8))));
    } else {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
      values[i] = static_cast<T>(std::bit_cast<float>(bits));
    }
  }
  return BasicTensor4<T>(hdr.shape, std::move(values));
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorIoError("cannot open tensor file " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void dump(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorIoError("cannot write tensor file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw TensorIoError("short write to " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor4& t) { return encode_impl(t, DType::f64); }
std::vector<std::uint8_t> encode_tensor(const Tensor4f& t) { return encode_impl(t, DType::f32); }

Tensor4 decode_tensor(std::span<const std::uint8_t> bytes) { return decode_impl<double>(bytes); }
Tensor4f decode_tensor_f32(std::span<const std::uint8_t> bytes) {
  return decode_impl<float>(bytes);
}
DType decode_dtype(std::span<const std::uint8_t> bytes) { return parse_header(bytes).dtype; }

void write_tensor(const std::filesystem::path& path, const Tensor4& t) {
  dump(path, encode_tensor(t));
}
void write_tensor(const std::filesystem::path& path, const Tensor4f& t) {
  dump(path, encode_tensor(t));
}

Tensor4 read_tensor(const std::filesystem::path& path) { return decode_tensor(slurp(path)); }
Tensor4f read_tensor_f32(const std::filesystem::path& path) {
  return decode_tensor_f32(slurp(path));
}

}  // namespace acu
