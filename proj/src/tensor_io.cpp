#include "convctc/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace convctc {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

template <typename U>
void write_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> buf;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  os.write(buf.data(), buf.size());
}

template <typename U>
U read_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> buf;
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw FormatError("unexpected end of data");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(buf[i]) << (8 * i);
  }
  return v;
}

template <typename Bits, typename Float, typename T>
void read_scalars(std::istream& is, Tensor<T>& t) {
  for (auto& v : t.data()) {
    v = static_cast<T>(std::bit_cast<Float>(read_le<Bits>(is)));
  }
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return read_le<std::uint64_t>(is); }

void write_bytes(std::ostream& os, const std::string& bytes) {
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(std::istream& is, std::size_t n) {
  std::string out(n, '\0');
  is.read(out.data(), static_cast<std::streamsize>(n));
  if (!is) throw FormatError("unexpected end of data");
  return out;
}

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write(kMagic, 4);
  write_u32(os, kTensorFormatVersion);
  write_u32(os, dtype_tag<T>());
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) write_u64(os, e);
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (T v : t.data()) write_le(os, std::bit_cast<Bits>(v));
  if (!os) throw FormatError("failed writing tensor");
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("missing TNSR magic");
  }
  const auto version = read_u32(is);
  if (version != kTensorFormatVersion) {
    throw FormatError("unsupported tensor format version " +
                      std::to_string(version));
  }
  const auto tag = read_u32(is);
  if (tag != 4 && tag != 8) {
    throw FormatError("unknown dtype tag " + std::to_string(tag));
  }
  const auto rank = read_u32(is);
  if (rank == 0 || rank > 8) {
    throw FormatError("unsupported tensor rank " + std::to_string(rank));
  }
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& e : shape) {
    const auto v = read_u64(is);
    if (v == 0 || v > kMaxElements) {
      throw FormatError("invalid tensor extent " + std::to_string(v));
    }
    count *= v;
    if (count > kMaxElements) throw FormatError("tensor too large");
    e = static_cast<std::size_t>(v);
  }
  Tensor<T> t(shape);
  if (tag == 4) {
    read_scalars<std::uint32_t, float>(is, t);
  } else {
    read_scalars<std::uint64_t, double>(is, t);
  }
  return t;
}

template <typename T>
void save_tensor_file(const std::filesystem::path& path, const Tensor<T>& t) {
  save_tensor_list<T>(path, {t});
}

template <typename T>
Tensor<T> load_tensor_file(const std::filesystem::path& path) {
  auto list = load_tensor_list<T>(path);
  if (list.size() != 1) {
    throw FormatError(path.string() + ": expected one tensor, found " +
                      std::to_string(list.size()));
  }
  return std::move(list.front());
}

template <typename T>
void save_tensor_list(const std::filesystem::path& path,
                      const std::vector<Tensor<T>>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  for (const auto& t : tensors) write_tensor(os, t);
}

template <typename T>
std::vector<Tensor<T>> load_tensor_list(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::vector<Tensor<T>> out;
  try {
    while (is.peek() != std::char_traits<char>::eof()) {
      out.push_back(read_tensor<T>(is));
    }
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

#define CONVCTC_INSTANTIATE(T)                                                \
  template void write_tensor<T>(std::ostream&, const Tensor<T>&);             \
  template Tensor<T> read_tensor<T>(std::istream&);                          \
  template void save_tensor_file<T>(const std::filesystem::path&,            \
                                    const Tensor<T>&);                       \
  template Tensor<T> load_tensor_file<T>(const std::filesystem::path&);      \
  template void save_tensor_list<T>(const std::filesystem::path&,            \
                                    const std::vector<Tensor<T>>&);          \
  template std::vector<Tensor<T>> load_tensor_list<T>(                       \
      const std::filesystem::path&);

CONVCTC_INSTANTIATE(float)
CONVCTC_INSTANTIATE(double)

#undef CONVCTC_INSTANTIATE

}  // namespace convctc
