#include "bistnet/btsr.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

namespace bistnet::btsr {

namespace {

constexpr std::uint8_t kMagic[4] = {0x42, 0x54, 0x53, 0x52};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t value, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string_view source)
      : bytes_(bytes), source_(source) {}

  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated (needed " + std::to_string(n) + " more bytes at offset " + std::to_string(pos_) + ")");
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("btsr " + std::string(source_) + ": " + what);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string_view source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const Tensor& tensor) {
  if (!tensor.defined()) throw Error("btsr: cannot encode an undefined tensor");
  if (tensor.rank() > std::numeric_limits<std::uint8_t>::max()) throw ShapeError("btsr: rank too large");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, kVersion, 4);
  out.push_back(static_cast<std::uint8_t>(tensor.dtype()));
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) put_le(out, d, 8);
  visit_dtype(tensor.dtype(), [&](auto tag) {
    using T = decltype(tag);
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    out.reserve(out.size() + tensor.numel() * sizeof(T));
    for (T v : tensor.values<T>()) put_le(out, std::bit_cast<Bits>(v), sizeof(T));
    return 0;
  });
  return out;
}

Tensor decode(std::span<const std::uint8_t> bytes, std::string_view source) {
  Reader r(bytes, source);
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) r.fail("bad magic");
  r.le(4);
  if (const auto version = r.le(4); version != kVersion) r.fail("unsupported version " + std::to_string(version));
  const auto dtype_code = r.le(1);
  if (dtype_code != 1 && dtype_code != 2) r.fail("unknown dtype code " + std::to_string(dtype_code));
  const auto dtype = static_cast<DType>(dtype_code);
  const auto ndim = r.le(1);
  Shape shape(ndim);
  for (auto& d : shape) {
    d = r.le(8);
    if (d == 0) r.fail("zero extent in shape");
  }
  const std::size_t n = numel(shape);
  return visit_dtype(dtype, [&](auto tag) {
    using T = decltype(tag);
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    if (n > r.remaining() / sizeof(T)) r.fail("truncated payload for shape " + shape_str(shape));
    std::vector<T> values(n);
    for (auto& v : values) v = std::bit_cast<T>(static_cast<Bits>(r.le(sizeof(T))));
    if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes");
    return Tensor::adopt(shape, std::move(values));
  });
}

void write(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode(tensor);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("btsr: cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("btsr: write failed for " + path.string());
}

Tensor read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("btsr: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode(bytes, path.string());
}

}  // namespace bistnet::btsr
