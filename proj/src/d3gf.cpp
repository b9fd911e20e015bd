#include "d3g/d3gf.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "d3g/error.hpp"

namespace d3g {
namespace {

constexpr std::array<char, 4> kMagicF32{'D', '3', 'G', 'F'};
constexpr std::array<char, 4> kMagicF64{'D', '3', 'G', 'D'};

static_assert(std::endian::native == std::endian::little,
              "D3GF I/O assumes a little-endian host");

template <typename T>
void put(std::vector<char>& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get(const std::vector<char>& in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

} // namespace

void write_matrix(const std::filesystem::path& path, const Matrix& m, Precision precision) {
  if (!all_finite(m.values())) {
    throw Error(ErrorKind::numeric, "refusing to write non-finite values: " + path.string());
  }
  std::vector<char> buffer;
  const auto& magic = precision == Precision::f32 ? kMagicF32 : kMagicF64;
  buffer.insert(buffer.end(), magic.begin(), magic.end());
  put(buffer, static_cast<std::uint32_t>(m.rows()));
  put(buffer, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.values()) {
    if (precision == Precision::f32) {
      put(buffer, static_cast<float>(v));
    } else {
      put(buffer, v);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::io, "cannot open for writing: " + path.string());
  }
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (!out) {
    throw Error(ErrorKind::io, "write failed: " + path.string());
  }
}

Matrix read_matrix(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::missing_file, "missing matrix file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::io, "cannot open: " + path.string());
  }
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>()};
  if (bytes.size() < 4) {
    throw Error(ErrorKind::truncated, "file shorter than magic: " + path.string());
  }
  std::size_t width = 0;
  if (std::memcmp(bytes.data(), kMagicF32.data(), 4) == 0) {
    width = sizeof(float);
  } else if (std::memcmp(bytes.data(), kMagicF64.data(), 4) == 0) {
    width = sizeof(double);
  } else {
    throw Error(ErrorKind::format, "bad magic (expected D3GF/D3GD): " + path.string());
  }
  if (bytes.size() < 12) {
    throw Error(ErrorKind::truncated, "truncated header: " + path.string());
  }
  const auto rows = get<std::uint32_t>(bytes, 4);
  const auto cols = get<std::uint32_t>(bytes, 8);
  const std::size_t expected = 12 + static_cast<std::size_t>(rows) * cols * width;
  if (bytes.size() < expected) {
    throw Error(ErrorKind::truncated,
                "truncated payload in " + path.string() + ": expected " +
                    std::to_string(expected) + " bytes, found " +
                    std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorKind::format, "trailing bytes after payload: " + path.string());
  }
  Matrix m(rows, cols);
  auto values = m.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t off = 12 + i * width;
    values[i] = width == sizeof(float) ? static_cast<double>(get<float>(bytes, off))
                                       : get<double>(bytes, off);
  }
  return m;
}

void quantize_f32(Matrix& m) {
  for (double& v : m.values()) {
    v = static_cast<double>(static_cast<float>(v));
  }
}

} // namespace d3g
