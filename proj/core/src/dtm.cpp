// SPDX-License-Identifier: Apache-2.0
#include "softtopic/dtm.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "softtopic/error.hpp"

namespace softtopic {
namespace {

constexpr std::array<char, 4> kMagic = {'D', 'T', 'M', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff),
                                 static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4))
    throw FormatError(std::string("DTM1: truncated header reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_dtm1(std::ostream& out, const Matrix& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max())
    throw InputError("DTM1: matrix dimensions exceed uint32");
  out.write(kMagic.data(), 4);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  std::string buf(m.size() * 4, '\0');
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i]));
    buf[4 * i + 0] = static_cast<char>(bits & 0xff);
    buf[4 * i + 1] = static_cast<char>((bits >> 8) & 0xff);
    buf[4 * i + 2] = static_cast<char>((bits >> 16) & 0xff);
    buf[4 * i + 3] = static_cast<char>((bits >> 24) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw InputError("DTM1: write failed");
}

void write_dtm1(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  write_dtm1(out, m);
}

Matrix read_dtm1(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kMagic)
    throw FormatError("DTM1: magic mismatch");
  const std::uint32_t rows = get_u32(in, "rows");
  const std::uint32_t cols = get_u32(in, "cols");
  Matrix m(rows, cols);
  std::string buf(m.size() * 4, '\0');
  if (!buf.empty() && !in.read(buf.data(), static_cast<std::streamsize>(buf.size())))
    throw FormatError("DTM1: truncated payload");
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto* b = reinterpret_cast<const unsigned char*>(buf.data() + 4 * i);
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                               (static_cast<std::uint32_t>(b[1]) << 8) |
                               (static_cast<std::uint32_t>(b[2]) << 16) |
                               (static_cast<std::uint32_t>(b[3]) << 24);
    m.data()[i] = std::bit_cast<float>(bits);
  }
  return m;
}

Matrix read_dtm1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path.string());
  Matrix m = read_dtm1(in);
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("DTM1: trailing bytes after payload in " + path.string());
  return m;
}

std::string dtm1_bytes(const Matrix& m) {
  std::ostringstream out(std::ios::binary);
  write_dtm1(out, m);
  return out.str();
}

void round_to_float32(Matrix& m) {
  for (double& v : m.values()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace softtopic
