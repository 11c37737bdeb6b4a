#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "hndh/error.hpp"

namespace hndh::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    std::reverse(bytes.begin(), bytes.end());
    std::memcpy(&value, bytes.data(), sizeof(T));
  }
  return value;
}

// Little-endian byte sink.
class Writer {
 public:
  void bytes(std::string_view raw) { buffer_.append(raw); }

  template <typename T>
  void put(T value) {
    value = to_little(value);
    buffer_.append(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  const std::string& buffer() const noexcept { return buffer_; }

 private:
  std::string buffer_;
};

// Little-endian cursor over an in-memory file image.
class Reader {
 public:
  explicit Reader(std::vector<char> data) : data_(std::move(data)) {}

  void expect_magic(std::string_view magic, std::string_view what);

  template <typename T>
  T get(std::string_view what) {
    require(sizeof(T), what);
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(value);
  }

  void require(std::size_t count, std::string_view what) const;
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);

// Writes to `<path>.tmp` and renames into place, so a failed write never
// leaves a truncated file at `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace hndh::io
