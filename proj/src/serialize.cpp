#include "irim/serialize.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

namespace irim {
namespace {

constexpr std::array<char, 4> kMagic = {'I', 'R', 'T', '1'};

template <typename U>
void put_le(std::string& out, U v) {
  static_assert(std::endian::native == std::endian::little,
                "container I/O assumes a little-endian host");
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get_le(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(U) > bytes.size())
    throw IoError("tensor container truncated");
  U v;
  std::memcpy(&v, bytes.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

std::size_t dtype_width(DType d) {
  switch (d) {
    case DType::kFloat32: return 4;
    case DType::kFloat64: return 8;
    case DType::kUInt8: return 1;
  }
  throw IoError("unknown dtype tag");
}

template <typename T>
Tensor<T> decode_at(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() < pos + 12 ||
      std::memcmp(bytes.data() + pos, kMagic.data(), 4) != 0)
    throw IoError("bad tensor container magic");
  const auto tag = static_cast<DType>(static_cast<std::uint8_t>(bytes[pos + 4]));
  if (tag != DType::kFloat32 && tag != DType::kFloat64 && tag != DType::kUInt8)
    throw IoError("unknown dtype tag " + std::to_string(static_cast<int>(tag)));
  pos += 8;
  const std::uint32_t rank = get_le<std::uint32_t>(bytes, pos);
  if (rank > 16) throw IoError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = get_le<std::uint64_t>(bytes, pos);
  const std::size_t count = shape_size(shape);
  if (pos + count * dtype_width(tag) > bytes.size())
    throw IoError("tensor payload truncated");
  std::vector<T> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    switch (tag) {
      case DType::kFloat32: data[i] = static_cast<T>(get_le<float>(bytes, pos)); break;
      case DType::kFloat64: data[i] = static_cast<T>(get_le<double>(bytes, pos)); break;
      case DType::kUInt8: data[i] = static_cast<T>(get_le<std::uint8_t>(bytes, pos)); break;
    }
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

void put_u32(std::string& out, std::uint32_t v) { put_le(out, v); }
void put_u64(std::string& out, std::uint64_t v) { put_le(out, v); }
std::uint32_t get_u32(std::string_view bytes, std::size_t& pos) {
  return get_le<std::uint32_t>(bytes, pos);
}
std::uint64_t get_u64(std::string_view bytes, std::size_t& pos) {
  return get_le<std::uint64_t>(bytes, pos);
}

template <typename T>
std::string encode_tensor(const Tensor<T>& t) {
  std::string out(kMagic.begin(), kMagic.end());
  out.push_back(static_cast<char>(dtype_of<T>()));
  out.append(3, '\0');
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
  for (T v : t.data()) put_le(out, v);
  return out;
}

template <typename T>
Tensor<T> decode_tensor_at(std::string_view bytes, std::size_t& pos) {
  return decode_at<T>(bytes, pos);
}

template <typename T>
Tensor<T> decode_tensor(std::string_view bytes) {
  std::size_t pos = 0;
  auto t = decode_at<T>(bytes, pos);
  if (pos != bytes.size()) throw IoError("trailing bytes after tensor");
  return t;
}

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  const auto bytes = encode_tensor(t);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  std::string header(12, '\0');
  if (!is.read(header.data(), 12)) throw IoError("tensor container truncated");
  std::size_t pos = 8;
  const std::uint32_t rank = get_le<std::uint32_t>(header, pos);
  if (rank > 16) throw IoError("implausible tensor rank");
  std::string rest(8 * rank, '\0');
  if (!is.read(rest.data(), static_cast<std::streamsize>(rest.size())))
    throw IoError("tensor container truncated");
  std::size_t p = 0;
  Shape shape(rank);
  for (auto& e : shape) e = get_le<std::uint64_t>(rest, p);
  const auto tag = static_cast<DType>(static_cast<std::uint8_t>(header[4]));
  std::string payload(shape_size(shape) * dtype_width(tag), '\0');
  if (!is.read(payload.data(), static_cast<std::streamsize>(payload.size())))
    throw IoError("tensor payload truncated");
  return decode_tensor<T>(header + rest + payload);
}

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(),
                 nullptr) != 1)
    throw IoError("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0')
       << static_cast<int>(md[i]);
  return os.str();
}

#define IRIM_INSTANTIATE(T)                                     \
  template std::string encode_tensor(const Tensor<T>&);         \
  template Tensor<T> decode_tensor(std::string_view);           \
  template void write_tensor(std::ostream&, const Tensor<T>&);  \
  template Tensor<T> read_tensor(std::istream&);                              \
  template Tensor<T> decode_tensor_at(std::string_view, std::size_t&);

IRIM_INSTANTIATE(float)
IRIM_INSTANTIATE(double)
IRIM_INSTANTIATE(std::uint8_t)
#undef IRIM_INSTANTIATE

}  // namespace irim
