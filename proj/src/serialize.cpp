#include "arc/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "arc/error.hpp"

namespace arc {

namespace {

constexpr char kMagic[4] = {'A', 'R', 'C', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::uint64_t bits;
  if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
    std::memcpy(&bits, &v, 8);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  if (!is) throw io_error("tensor record truncated");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
    T v;
    std::memcpy(&v, &bits, 8);
    return v;
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (int d : t.shape()) put_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
  for (double v : t.values()) put_le<double>(os, v);
  if (!os) throw io_error("tensor write failed");
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw io_error("bad tensor magic");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kVersion) throw io_error("unsupported tensor version " + std::to_string(version));
  const auto rank = get_le<std::uint32_t>(is);
  if (rank > 8) throw io_error("implausible tensor rank " + std::to_string(rank));
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = get_le<std::uint64_t>(is);
    if (d == 0 || d > (1ull << 32)) throw io_error("bad tensor dimension");
    shape.push_back(static_cast<int>(d));
  }
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = get_le<double>(is);
  return Tensor::from(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for write: " + path);
  write_tensor(f, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for read: " + path);
  return read_tensor(f);
}

}  // namespace arc
