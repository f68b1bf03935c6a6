#pragma once

// Little-endian primitives shared by the checkpoint and token-batch formats.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "mobe/errors.hpp"
#include "mobe/linalg.hpp"

namespace mobe::detail {

static_assert(std::numeric_limits<float>::is_iec559);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out_.write(reinterpret_cast<const char*>(b), 4);
  }

  void bytes(const std::array<char, 4>& b) { out_.write(b.data(), 4); }

  void tensor(const Matrix& m) {
    buffer_.resize(m.size() * 4);
    auto src = m.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
      const float f = static_cast<float>(src[i]);
      if (!std::isfinite(f)) {
        throw IoError(IoError::Kind::kNonFinite, "value " + std::to_string(src[i]) + " is not representable in f32");
      }
      std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
      for (int k = 0; k < 4; ++k) buffer_[i * 4 + k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
    }
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  }

  void tensors(const std::vector<Matrix>& ms) {
    for (const auto& m : ms) tensor(m);
  }

 private:
  std::ostream& out_;
  std::vector<char> buffer_;
};

class Reader {
 public:
  Reader(std::istream& in, std::uint64_t available) : in_(in), remaining_(available) {}

  std::uint64_t remaining() const { return remaining_; }

  void raw(char* dst, std::uint64_t n) {
    if (n > remaining_) throw IoError(IoError::Kind::kTruncated, "unexpected end of file");
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::uint64_t>(in_.gcount()) != n) {
      throw IoError(IoError::Kind::kTruncated, "unexpected end of file");
    }
    remaining_ -= n;
  }

  std::uint32_t u32() {
    unsigned char b[4];
    raw(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
  }

  Matrix tensor(std::size_t rows, std::size_t cols) {
    buffer_.resize(rows * cols * 4);
    raw(buffer_.data(), buffer_.size());
    Matrix m(rows, cols);
    auto dst = m.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      std::uint32_t bits = 0;
      for (int k = 0; k < 4; ++k) bits |= std::uint32_t(static_cast<unsigned char>(buffer_[i * 4 + k])) << (8 * k);
      const float f = std::bit_cast<float>(bits);
      if (!std::isfinite(f)) throw IoError(IoError::Kind::kNonFinite, "non-finite value in tensor payload");
      dst[i] = f;
    }
    return m;
  }

  std::vector<Matrix> tensors(std::size_t count, std::size_t rows, std::size_t cols) {
    std::vector<Matrix> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(tensor(rows, cols));
    return out;
  }

 private:
  std::istream& in_;
  std::uint64_t remaining_;
  std::vector<char> buffer_;
};

}  // namespace mobe::detail
