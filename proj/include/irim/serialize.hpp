#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "irim/tensor.hpp"

namespace irim {

// Binary tensor container, little-endian throughout:
//
//   offset 0  magic "IRT1"
//   offset 4  dtype tag (u8): 1 = float32, 2 = float64, 3 = uint8
//   offset 5  three zero bytes
//   offset 8  rank (u32)
//   offset 12 rank extents (u64 each)
//   then      product(extents) payload elements
enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2, kUInt8 = 3 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::kFloat32; }
template <>
constexpr DType dtype_of<double>() { return DType::kFloat64; }
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::kUInt8; }

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);

/// Reads one tensor, converting between float32 and float64 payloads when
/// the stored dtype differs from T. Throws IoError on malformed input.
template <typename T>
Tensor<T> read_tensor(std::istream& is);

template <typename T>
std::string encode_tensor(const Tensor<T>& t);
template <typename T>
Tensor<T> decode_tensor(std::string_view bytes);
/// Decodes the container starting at `pos` and advances `pos` past it, for
/// formats that embed several tensors back to back.
template <typename T>
Tensor<T> decode_tensor_at(std::string_view bytes, std::size_t& pos);

/// Writes `bytes` to `path` through a temporary sibling and a rename.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

// Little-endian scalar helpers shared by the container formats.
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
std::uint32_t get_u32(std::string_view bytes, std::size_t& pos);
std::uint64_t get_u64(std::string_view bytes, std::size_t& pos);

}  // namespace irim
