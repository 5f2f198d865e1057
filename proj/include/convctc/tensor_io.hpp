#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "convctc/tensor.hpp"

namespace convctc {

/// Malformed or unreadable serialized data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary tensor record:
//   "TNSR" | u32 version | u32 dtype tag (4 = f32, 8 = f64) | u32 rank |
//   rank x u64 extents | raw scalars
// All integers and scalars little-endian.
inline constexpr std::uint32_t kTensorFormatVersion = 1;

template <typename T>
constexpr std::uint32_t dtype_tag() {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  return static_cast<std::uint32_t>(sizeof(T));
}

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);

/// Reads one record, converting scalars to T when the stored dtype differs.
template <typename T>
Tensor<T> read_tensor(std::istream& is);

template <typename T>
void save_tensor_file(const std::filesystem::path& path, const Tensor<T>& t);

template <typename T>
Tensor<T> load_tensor_file(const std::filesystem::path& path);

/// Several records back to back in one file.
template <typename T>
void save_tensor_list(const std::filesystem::path& path,
                      const std::vector<Tensor<T>>& tensors);

template <typename T>
std::vector<Tensor<T>> load_tensor_list(const std::filesystem::path& path);

// Little-endian primitives shared with the checkpoint container.
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
void write_bytes(std::ostream& os, const std::string& bytes);
std::string read_bytes(std::istream& is, std::size_t n);

}  // namespace convctc
